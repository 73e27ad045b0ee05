use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{ParamId, ParamStore, Tape, Var};
use crate::error::{Result, SamgcError};
use crate::graph::{Graph, HopSets};
use crate::layer::{LayerSpec, SamgcLayer, Variant};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct NodeConfig {
    pub in_dim: usize,
    pub num_classes: usize,
    pub hidden_dim: usize,
    pub num_layers: usize,
    pub re_dim: usize,
    pub nw_dim: usize,
    pub hops: usize,
    pub variant: Variant,
    /// Applied to the input of every layer after the first and to the
    /// input of the classifier head, in training mode only.
    pub dropout: f64,
}

impl NodeConfig {
    pub fn new(in_dim: usize, num_classes: usize) -> Self {
        NodeConfig {
            in_dim,
            num_classes,
            hidden_dim: 64,
            num_layers: 3,
            re_dim: 16,
            nw_dim: 16,
            hops: 2,
            variant: Variant::Samgc,
            dropout: 0.5,
        }
    }
}

/// Stacked SAMGC layers followed by a fully connected head.
#[derive(Clone, Debug)]
pub struct NodeClassifier {
    pub config: NodeConfig,
    pub store: ParamStore,
    layers: Vec<SamgcLayer>,
    fc_w: ParamId,
    fc_b: ParamId,
}

impl NodeClassifier {
    pub fn new(config: NodeConfig, seed: u64) -> Result<Self> {
        if config.num_layers == 0 || config.num_classes == 0 {
            return Err(SamgcError::Config("need at least one layer and one class".into()));
        }
        if !(0.0..1.0).contains(&config.dropout) {
            return Err(SamgcError::Config(format!("dropout {} outside [0, 1)", config.dropout)));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let mut layers = Vec::with_capacity(config.num_layers);
        let mut width = config.in_dim;
        for i in 0..config.num_layers {
            let spec = LayerSpec::new(width, config.hidden_dim)
                .with_dims(config.re_dim, config.nw_dim)
                .with_hops(config.hops)
                .with_variant(config.variant);
            layers.push(SamgcLayer::new(&mut store, &format!("layer{i}"), spec, &mut rng)?);
            width = config.hidden_dim;
        }
        let fc_w = store.add("fc.w", Tensor::glorot_with(width, config.num_classes, &mut rng));
        let fc_b = store.add("fc.b", Tensor::zeros(1, config.num_classes));
        Ok(NodeClassifier {
            config,
            store,
            layers,
            fc_w,
            fc_b,
        })
    }

    pub fn layers(&self) -> &[SamgcLayer] {
        &self.layers
    }

    pub fn fc(&self) -> (ParamId, ParamId) {
        (self.fc_w, self.fc_b)
    }

    /// Hop depth the layers need.
    pub fn required_hops(&self) -> usize {
        if self.config.variant.uses_multi_hop() {
            self.config.hops
        } else {
            1
        }
    }

    /// Records the network on `tape` and returns n×K logits. Dropout is
    /// active exactly when `train_rng` is given.
    pub fn node_forward(
        &self,
        tape: &mut Tape,
        features: Var,
        g: &Graph,
        hops: &HopSets,
        mut train_rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Var> {
        let mut h = features;
        for (i, layer) in self.layers.iter().enumerate() {
            if i > 0 {
                h = self.maybe_dropout(tape, h, train_rng.as_deref_mut())?;
            }
            h = layer.forward(tape, &self.store, h, g, hops)?;
        }
        h = self.maybe_dropout(tape, h, train_rng)?;
        let w = tape.param(&self.store, self.fc_w);
        let b = tape.param(&self.store, self.fc_b);
        let z = tape.matmul(h, w)?;
        tape.add_row(z, b)
    }

    fn maybe_dropout(&self, tape: &mut Tape, h: Var, rng: Option<&mut ChaCha8Rng>) -> Result<Var> {
        match rng {
            Some(r) if self.config.dropout > 0.0 => tape.dropout(h, self.config.dropout, r),
            _ => Ok(h),
        }
    }

    /// Evaluation-mode logits.
    pub fn logits(&self, features: &Tensor, g: &Graph, hops: &HopSets) -> Result<Tensor> {
        let mut tape = Tape::new();
        let x = tape.constant(features.clone());
        let out = self.node_forward(&mut tape, x, g, hops, None)?;
        Ok(tape.value(out).clone())
    }
}
