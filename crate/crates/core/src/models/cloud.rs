use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{ParamId, ParamStore, Reduce, Tape, Var};
use crate::error::{Result, SamgcError};
use crate::graph::{build_knn_graph, exact_hop_sets, Graph};
use crate::layer::{LayerSpec, SamgcLayer, Variant};
use crate::models::hierarchical_combine;
use crate::pooling::{pool, PoolSize, PooledGraph, PoolingParams};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct CloudConfig {
    pub num_classes: usize,
    pub in_dim: usize,
    /// One SAMGC layer per entry, each on its own k-NN graph.
    pub k_list: Vec<usize>,
    /// Output width of every layer in a group.
    pub group_width: usize,
    pub phases: usize,
    pub modules_per_phase: usize,
    pub pool_ratio: f64,
    pub hops: usize,
    pub re_dim: usize,
    pub nw_dim: usize,
    pub variant: Variant,
}

impl CloudConfig {
    pub fn new(num_classes: usize) -> Self {
        CloudConfig {
            num_classes,
            in_dim: 3,
            k_list: vec![8, 16],
            group_width: 16,
            phases: 2,
            modules_per_phase: 2,
            pool_ratio: 0.5,
            hops: 2,
            re_dim: 8,
            nw_dim: 8,
            variant: Variant::Samgc,
        }
    }

    pub fn module_width(&self) -> usize {
        self.group_width * self.k_list.len()
    }
}

/// SAMGC layers sharing one input, each on a k-NN graph rebuilt from that
/// input; outputs are concatenated column-wise.
#[derive(Clone, Debug)]
pub struct GsamgcModule {
    pub k_list: Vec<usize>,
    pub layers: Vec<SamgcLayer>,
}

impl GsamgcModule {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        k_list: &[usize],
        spec: &LayerSpec,
        rng: &mut R,
    ) -> Result<Self> {
        if k_list.is_empty() {
            return Err(SamgcError::Config("a grouped module needs at least one k".into()));
        }
        let layers = k_list
            .iter()
            .enumerate()
            .map(|(i, _)| SamgcLayer::new(store, &format!("{name}.g{i}"), spec.clone(), rng))
            .collect::<Result<_>>()?;
        Ok(GsamgcModule {
            k_list: k_list.to_vec(),
            layers,
        })
    }

    pub fn output_width(&self) -> usize {
        self.layers.iter().map(|l| l.spec().c_out).sum()
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, h: Var) -> Result<Var> {
        Ok(self.forward_with_graphs(tape, store, h)?.0)
    }

    /// Also returns the graph each group ran on.
    pub fn forward_with_graphs(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        h: Var,
    ) -> Result<(Var, Vec<Graph>)> {
        let n = tape.value(h).rows();
        let mut outs = Vec::with_capacity(self.layers.len());
        let mut graphs = Vec::with_capacity(self.layers.len());
        for (&k, layer) in self.k_list.iter().zip(&self.layers) {
            if n <= k {
                return Err(SamgcError::Config(format!("k = {k} needs more than {n} nodes")));
            }
            let g = build_knn_graph(tape.value(h), k)?;
            let depth = if layer.spec().variant.uses_multi_hop() { layer.spec().hops } else { 1 };
            let hops = exact_hop_sets(&g, depth)?;
            outs.push(layer.forward(tape, store, h, &g, &hops)?);
            graphs.push(g);
        }
        Ok((tape.concat_cols(&outs)?, graphs))
    }
}

#[derive(Clone, Debug)]
pub struct Phase {
    pub modules: Vec<GsamgcModule>,
    pub readout_w: ParamId,
    pub readout_b: ParamId,
}

/// Logits recorded for one cloud, one 1×K entry per phase.
#[derive(Clone, Debug)]
pub struct CloudForward {
    pub phase_logits: Vec<Var>,
    /// Nodes kept by each pooling stage.
    pub selected: Vec<Vec<usize>>,
}

/// Phases of grouped layers with a max+mean readout each and score pooling
/// between consecutive phases.
#[derive(Clone, Debug)]
pub struct PointCloudClassifier {
    pub config: CloudConfig,
    pub store: ParamStore,
    pub phases: Vec<Phase>,
    pub pools: Vec<PoolingParams>,
}

impl PointCloudClassifier {
    pub fn new(config: CloudConfig, seed: u64) -> Result<Self> {
        if config.phases == 0 || config.modules_per_phase == 0 {
            return Err(SamgcError::Config("need at least one phase and one module".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let width = config.module_width();
        let spec_for = |c_in: usize| {
            LayerSpec::new(c_in, config.group_width)
                .with_dims(config.re_dim, config.nw_dim)
                .with_hops(config.hops)
                .with_variant(config.variant)
        };
        let mut phases = Vec::with_capacity(config.phases);
        let mut pools = Vec::new();
        let mut c_in = config.in_dim;
        for p in 0..config.phases {
            let mut modules = Vec::with_capacity(config.modules_per_phase);
            for m in 0..config.modules_per_phase {
                let name = format!("phase{p}.m{m}");
                modules.push(GsamgcModule::new(&mut store, &name, &config.k_list, &spec_for(c_in), &mut rng)?);
                c_in = width;
            }
            let readout_w = store.add(
                format!("phase{p}.readout.w"),
                Tensor::glorot_with(2 * width, config.num_classes, &mut rng),
            );
            let readout_b = store.add(format!("phase{p}.readout.b"), Tensor::zeros(1, config.num_classes));
            phases.push(Phase {
                modules,
                readout_w,
                readout_b,
            });
            if p + 1 < config.phases {
                let inner = LayerSpec::new(width, width)
                    .with_dims(config.re_dim, config.nw_dim)
                    .with_variant(config.variant);
                pools.push(PoolingParams::new(
                    &mut store,
                    &format!("pool{p}"),
                    width,
                    width,
                    inner,
                    PoolSize::Ratio(config.pool_ratio),
                    &mut rng,
                )?);
            }
        }
        Ok(PointCloudClassifier {
            config,
            store,
            phases,
            pools,
        })
    }

    /// `cat(max, mean)` over nodes, then the phase's fully connected layer.
    pub fn phase_readout(&self, tape: &mut Tape, phase: &Phase, h: Var) -> Result<Var> {
        let mx = tape.reduce_rows(h, Reduce::Max)?;
        let mean = tape.reduce_rows(h, Reduce::Mean)?;
        let pooled = tape.concat_cols(&[mx, mean])?;
        let w = tape.param(&self.store, phase.readout_w);
        let b = tape.param(&self.store, phase.readout_b);
        let z = tape.matmul(pooled, w)?;
        tape.add_row(z, b)
    }

    pub fn forward(&self, tape: &mut Tape, cloud: &Tensor) -> Result<CloudForward> {
        if cloud.cols() != self.config.in_dim {
            return Err(SamgcError::Shape(format!(
                "clouds have {} coordinates, model expects {}",
                cloud.cols(),
                self.config.in_dim
            )));
        }
        let mut h = tape.constant(cloud.clone());
        let mut phase_logits = Vec::with_capacity(self.phases.len());
        let mut selected = Vec::new();
        for (p, phase) in self.phases.iter().enumerate() {
            for module in &phase.modules {
                h = module.forward(tape, &self.store, h)?;
            }
            phase_logits.push(self.phase_readout(tape, phase, h)?);
            if let Some(params) = self.pools.get(p) {
                let k = self.config.k_list[0];
                let g = build_knn_graph(tape.value(h), k)?;
                let out = pool(tape, &self.store, h, &g, params, PooledGraph::Knn(k))?;
                h = out.h_select;
                selected.push(out.selected);
            }
        }
        Ok(CloudForward {
            phase_logits,
            selected,
        })
    }

    /// Per-phase cross-entropy, their sum and the combined prediction.
    pub fn loss(&self, tape: &mut Tape, fwd: &CloudForward, label: usize) -> Result<(Vec<Var>, Var, usize)> {
        let losses = fwd
            .phase_logits
            .iter()
            .map(|&l| tape.cross_entropy_mean(l, &[label], None))
            .collect::<Result<Vec<_>>>()?;
        let (prediction, total) = hierarchical_combine(tape, &fwd.phase_logits, &losses)?;
        Ok((losses, total, prediction))
    }

    pub fn predict(&self, cloud: &Tensor) -> Result<usize> {
        let mut tape = Tape::new();
        let fwd = self.forward(&mut tape, cloud)?;
        let rows: Vec<&[f64]> = fwd.phase_logits.iter().map(|&l| tape.value(l).row(0)).collect();
        super::combine_predictions(&rows)
    }
}
