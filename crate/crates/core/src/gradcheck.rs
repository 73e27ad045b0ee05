//! Central finite-difference gradient checking.

use crate::autodiff::{ParamStore, Tape, Var};
use crate::error::Result;
use crate::tensor::Tensor;

/// Gradients smaller than this are compared on an absolute scale.
pub const DENOM_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct GradReport {
    /// Largest `|analytic - numeric| / max(|analytic|, |numeric|, DENOM_FLOOR)`.
    pub max_rel_error: f64,
    /// Parameter name and flat index where the maximum occurred.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
    /// Entries whose step straddles a ReLU or max switch. There the two
    /// one-sided slopes differ by more than [`KINK_TOLERANCE`] and the
    /// analytic value is compared against the nearer of them instead of the
    /// central difference.
    pub kinks: usize,
}

pub const KINK_TOLERANCE: f64 = 1e-3;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(DENOM_FLOOR)
}

fn eval_loss<F>(store: &ParamStore, build: &F) -> Result<f64>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<Var>,
{
    let mut tape = Tape::new();
    let loss = build(&mut tape, store)?;
    Ok(tape.value(loss).item())
}

/// Compares tape gradients of every parameter in `store` against central
/// differences with step `h`. `build` must be a pure function of the store.
pub fn check_param_gradients<F>(store: &mut ParamStore, build: F, h: f64) -> Result<GradReport>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<Var>,
{
    let mut tape = Tape::new();
    let loss = build(&mut tape, store)?;
    tape.backward(loss)?;
    let ids: Vec<_> = store.iter().map(|(id, _)| id).collect();
    let analytic: Vec<Tensor> = ids
        .iter()
        .map(|&id| {
            let shape = store.value(id).shape();
            tape.param_links()
                .iter()
                .find(|(p, _)| *p == id)
                .and_then(|&(_, v)| tape.grad(v).cloned())
                .unwrap_or_else(|| Tensor::zeros(shape.0, shape.1))
        })
        .collect();

    let mut report = GradReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
        kinks: 0,
    };
    let base = eval_loss(store, &build)?;
    for (&id, grad) in ids.iter().zip(&analytic) {
        for k in 0..grad.len() {
            let orig = store.value(id).data()[k];
            store.get_mut(id).value_mut().data_mut()[k] = orig + h;
            let plus = eval_loss(store, &build)?;
            store.get_mut(id).value_mut().data_mut()[k] = orig - h;
            let minus = eval_loss(store, &build)?;
            store.get_mut(id).value_mut().data_mut()[k] = orig;
            let (fwd, bwd) = ((plus - base) / h, (base - minus) / h);
            let a = grad.data()[k];
            let mut err = relative_error(a, (plus - minus) / (2.0 * h));
            if relative_error(fwd, bwd) > KINK_TOLERANCE {
                // at a kink the subgradient is one of the one-sided slopes
                let one_sided = relative_error(a, fwd).min(relative_error(a, bwd));
                if one_sided < err {
                    err = one_sided;
                    report.kinks += 1;
                }
            }
            report.checked += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(err);
                report.worst = Some((store.get(id).name().to_string(), k));
            }
        }
    }
    Ok(report)
}

/// Same as [`check_param_gradients`] for free-standing input tensors.
pub fn check_input_gradients<F>(inputs: &[Tensor], build: F, h: f64) -> Result<GradReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut store = ParamStore::new();
    let ids: Vec<_> = inputs
        .iter()
        .enumerate()
        .map(|(i, t)| store.add(format!("input{i}"), t.clone()))
        .collect();
    check_param_gradients(
        &mut store,
        |tape, s| {
            let vars: Vec<Var> = ids.iter().map(|&id| tape.param(s, id)).collect();
            build(tape, &vars)
        },
        h,
    )
}

/// One named entry of [`layer_suite`].
#[derive(Clone, Debug, PartialEq)]
pub struct SuiteCase {
    pub name: String,
    pub report: GradReport,
}

/// Finite-difference checks of every parameter of a SAMGC layer plus a
/// linear head with bias under cross-entropy, once per variant, and of a
/// score-pooling stage. Random 8-node graph, C = 5, R = 3, D = 4, t = 2.
pub fn layer_suite(seed: u64) -> Result<Vec<SuiteCase>> {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use crate::graph::{exact_hop_sets, gnp};
    use crate::layer::{LayerSpec, SamgcLayer, Variant};
    use crate::pooling::{pool, PoolSize, PoolingParams, PooledGraph};

    const STEP: f64 = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = gnp(8, 0.4, &mut rng);
    let hops = exact_hop_sets(&g, 2)?;
    let data = (0..8 * 5).map(|_| rng.random_range(-1.5..1.5)).collect();
    let h = Tensor::new(8, 5, data)?;
    let labels: Vec<usize> = (0..8).map(|_| rng.random_range(0..3)).collect();

    let mut cases = Vec::new();
    for variant in Variant::ALL {
        let mut store = ParamStore::new();
        let spec = LayerSpec::new(5, 4).with_dims(3, 4).with_hops(2).with_variant(variant);
        let layer = SamgcLayer::new(&mut store, "layer", spec, &mut rng)?;
        let fc_w = store.add("fc.w", Tensor::glorot_with(4, 3, &mut rng));
        let bias = (0..3).map(|_| rng.random_range(-0.1..0.1)).collect::<Vec<_>>();
        let fc_b = store.add("fc.b", Tensor::row_vector(&bias));
        let report = check_param_gradients(
            &mut store,
            |tape, s| {
                let x = tape.constant(h.clone());
                let z = layer.forward(tape, s, x, &g, &hops)?;
                let w = tape.param(s, fc_w);
                let b = tape.param(s, fc_b);
                let logits = tape.matmul(z, w)?;
                let logits = tape.add_row(logits, b)?;
                tape.cross_entropy_mean(logits, &labels, None)
            },
            STEP,
        )?;
        cases.push(SuiteCase {
            name: format!("{variant}+fc"),
            report,
        });
    }

    let mut store = ParamStore::new();
    let inner = LayerSpec::new(4, 4).with_dims(3, 4);
    let params = PoolingParams::new(&mut store, "pool", 5, 4, inner, PoolSize::Ratio(0.5), &mut rng)?;
    let probe = Tensor::glorot_with(4, 4, &mut rng);
    let report = check_param_gradients(
        &mut store,
        |tape, s| {
            let x = tape.constant(h.clone());
            let out = pool(tape, s, x, &g, &params, PooledGraph::Induced)?;
            let c = tape.constant(probe.clone());
            let y = tape.mul(out.h_select, c)?;
            Ok(tape.sum_all(y))
        },
        STEP,
    )?;
    cases.push(SuiteCase {
        name: "pooling".into(),
        report,
    });
    Ok(cases)
}
