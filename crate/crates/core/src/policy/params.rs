use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::tensor::Matrix;

/// Node features fed to the customer embedding: x, y, demand / capacity.
pub const NODE_FEATURES: usize = 3;
/// Depot features: x, y.
pub const DEPOT_FEATURES: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyper {
    pub embed_dim: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub ff_dim: usize,
    /// Bound on pointer logits, `clip * tanh(.)`.
    pub tanh_clip: f64,
}

impl Hyper {
    /// Full-size network: 128-wide, 3 layers, 8 heads.
    pub fn full() -> Self {
        Hyper {
            embed_dim: 128,
            num_layers: 3,
            num_heads: 8,
            ff_dim: 512,
            tanh_clip: 10.0,
        }
    }

    /// Reduced network for CPU training.
    pub fn desk() -> Self {
        Hyper {
            embed_dim: 64,
            num_layers: 2,
            num_heads: 8,
            ff_dim: 256,
            tanh_clip: 10.0,
        }
    }

    /// Smallest useful network, for gradient checks and enumeration oracles.
    pub fn tiny() -> Self {
        Hyper {
            embed_dim: 8,
            num_layers: 1,
            num_heads: 2,
            ff_dim: 16,
            tanh_clip: 10.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 || self.num_heads == 0 || self.ff_dim == 0 {
            return Err(Error::Config("network widths must be positive".into()));
        }
        if self.embed_dim % self.num_heads != 0 {
            return Err(Error::Config(format!(
                "embed_dim {} is not divisible by num_heads {}",
                self.embed_dim, self.num_heads
            )));
        }
        if !(self.tanh_clip > 0.0) {
            return Err(Error::Config("tanh_clip must be positive".into()));
        }
        Ok(())
    }
}

impl Default for Hyper {
    fn default() -> Self {
        Hyper::full()
    }
}

/// A named, ordered collection of parameter matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<Matrix>,
}

impl ParamSet {
    fn push(&mut self, name: impl Into<String>, m: Matrix) -> usize {
        self.names.push(name.into());
        self.tensors.push(m);
        self.tensors.len() - 1
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: usize) -> &Matrix {
        &self.tensors[id]
    }

    pub fn get_mut(&mut self, id: usize) -> &mut Matrix {
        &mut self.tensors[id]
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn tensors(&self) -> &[Matrix] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Matrix] {
        &mut self.tensors
    }

    /// Zero matrices with the same shapes, for gradient accumulation.
    pub fn zeros_like(&self) -> Vec<Matrix> {
        self.tensors
            .iter()
            .map(|t| Matrix::zeros(t.rows(), t.cols()))
            .collect()
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Matrix::len).sum()
    }

    /// Index of the first non-finite tensor, if any.
    pub fn first_non_finite(&self) -> Option<&str> {
        self.tensors
            .iter()
            .position(|t| !t.all_finite())
            .map(|i| self.names[i].as_str())
    }

    /// Flat (tensor, offset) address of scalar `flat`.
    pub fn locate(&self, mut flat: usize) -> (usize, usize) {
        for (i, t) in self.tensors.iter().enumerate() {
            if flat < t.len() {
                return (i, flat);
            }
            flat -= t.len();
        }
        panic!("scalar index out of range");
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct LayerIds {
    pub ln1_gain: usize,
    pub ln1_bias: usize,
    pub wq: usize,
    pub wk: usize,
    pub wv: usize,
    pub wo: usize,
    pub ln2_gain: usize,
    pub ln2_bias: usize,
    pub ff1_w: usize,
    pub ff1_b: usize,
    pub ff2_w: usize,
    pub ff2_b: usize,
}

/// Positions of every policy tensor inside `theta`.
#[derive(Debug, Clone)]
pub(crate) struct ThetaIds {
    pub node_w: usize,
    pub node_b: usize,
    pub depot_w: usize,
    pub depot_b: usize,
    pub layers: Vec<LayerIds>,
    pub first_placeholder: usize,
    pub last_placeholder: usize,
    pub context_w: usize,
    pub glimpse_wk: usize,
    pub glimpse_wv: usize,
    pub glimpse_wo: usize,
    pub logit_wk: usize,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct CriticIds {
    pub w1: usize,
    pub b1: usize,
    pub w2: usize,
    pub b2: usize,
}

/// Trainable weights of the policy (`theta`) and its critic head (`phi`).
#[derive(Debug, Clone)]
pub struct PolicyParams {
    pub hyper: Hyper,
    pub theta: ParamSet,
    pub phi: ParamSet,
    pub(crate) ids: ThetaIds,
    pub(crate) critic: CriticIds,
}

/// Uniform in `±1/sqrt(fan_in)`.
fn fan_in_uniform(rows: usize, cols: usize, fan_in: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::uniform(rows, cols, 1.0 / (fan_in as f64).sqrt(), rng)
}

impl PolicyParams {
    /// Randomly initialized parameters; deterministic in `seed`.
    pub fn init(hyper: Hyper, seed: u64) -> Result<Self> {
        hyper.validate()?;
        let d = hyper.embed_dim;
        let ff = hyper.ff_dim;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rng = &mut rng;
        let mut theta = ParamSet::default();
        let lin = |theta: &mut ParamSet, name: &str, fan_in: usize, cols: usize, rng: &mut ChaCha8Rng| {
            let w = theta.push(format!("{name}.w"), fan_in_uniform(fan_in, cols, fan_in, rng));
            let b = theta.push(format!("{name}.b"), fan_in_uniform(1, cols, fan_in, rng));
            (w, b)
        };
        let (node_w, node_b) = lin(&mut theta, "embed.node", NODE_FEATURES, d, rng);
        let (depot_w, depot_b) = lin(&mut theta, "embed.depot", DEPOT_FEATURES, d, rng);
        let mut layers = Vec::with_capacity(hyper.num_layers);
        for l in 0..hyper.num_layers {
            let p = format!("encoder.{l}");
            let ln1_gain = theta.push(format!("{p}.ln1.gain"), Matrix::filled(1, d, 1.0));
            let ln1_bias = theta.push(format!("{p}.ln1.bias"), Matrix::zeros(1, d));
            let wq = theta.push(format!("{p}.attn.wq"), fan_in_uniform(d, d, d, rng));
            let wk = theta.push(format!("{p}.attn.wk"), fan_in_uniform(d, d, d, rng));
            let wv = theta.push(format!("{p}.attn.wv"), fan_in_uniform(d, d, d, rng));
            let wo = theta.push(format!("{p}.attn.wo"), fan_in_uniform(d, d, d, rng));
            let ln2_gain = theta.push(format!("{p}.ln2.gain"), Matrix::filled(1, d, 1.0));
            let ln2_bias = theta.push(format!("{p}.ln2.bias"), Matrix::zeros(1, d));
            let (ff1_w, ff1_b) = lin(&mut theta, &format!("{p}.ff1"), d, ff, rng);
            let (ff2_w, ff2_b) = lin(&mut theta, &format!("{p}.ff2"), ff, d, rng);
            layers.push(LayerIds {
                ln1_gain,
                ln1_bias,
                wq,
                wk,
                wv,
                wo,
                ln2_gain,
                ln2_bias,
                ff1_w,
                ff1_b,
                ff2_w,
                ff2_b,
            });
        }
        let first_placeholder = theta.push("decoder.first_placeholder", Matrix::uniform(1, d, 1.0, rng));
        let last_placeholder = theta.push("decoder.last_placeholder", Matrix::uniform(1, d, 1.0, rng));
        let ctx_in = 3 * d + 1;
        let context_w = theta.push("decoder.context.w", fan_in_uniform(ctx_in, d, ctx_in, rng));
        let glimpse_wk = theta.push("decoder.glimpse.wk", fan_in_uniform(d, d, d, rng));
        let glimpse_wv = theta.push("decoder.glimpse.wv", fan_in_uniform(d, d, d, rng));
        let glimpse_wo = theta.push("decoder.glimpse.wo", fan_in_uniform(d, d, d, rng));
        let logit_wk = theta.push("decoder.logit.wk", fan_in_uniform(d, d, d, rng));

        let mut phi = ParamSet::default();
        let w1 = phi.push("critic.l1.w", fan_in_uniform(d, d, d, rng));
        let b1 = phi.push("critic.l1.b", fan_in_uniform(1, d, d, rng));
        let w2 = phi.push("critic.l2.w", fan_in_uniform(d, 1, d, rng));
        let b2 = phi.push("critic.l2.b", fan_in_uniform(1, 1, d, rng));

        Ok(PolicyParams {
            hyper,
            theta,
            phi,
            ids: ThetaIds {
                node_w,
                node_b,
                depot_w,
                depot_b,
                layers,
                first_placeholder,
                last_placeholder,
                context_w,
                glimpse_wk,
                glimpse_wv,
                glimpse_wo,
                logit_wk,
            },
            critic: CriticIds { w1, b1, w2, b2 },
        })
    }

    /// Rebuilds parameters from stored tensors, checking names and shapes
    /// against a fresh layout for `hyper`.
    pub fn from_sets(hyper: Hyper, theta: ParamSet, phi: ParamSet) -> Result<Self> {
        let mut fresh = PolicyParams::init(hyper, 0)?;
        for (stored, layout, which) in [(&theta, &fresh.theta, "theta"), (&phi, &fresh.phi, "phi")] {
            if stored.names != layout.names {
                return Err(Error::Config(format!("{which} tensor names do not match the network layout")));
            }
            for (a, b) in stored.tensors.iter().zip(&layout.tensors) {
                if a.shape() != b.shape() {
                    return Err(Error::Config(format!("{which} tensor shape mismatch")));
                }
            }
        }
        fresh.theta = theta;
        fresh.phi = phi;
        fresh.check_finite()?;
        Ok(fresh)
    }

    pub fn check_finite(&self) -> Result<()> {
        for set in [&self.theta, &self.phi] {
            if let Some(name) = set.first_non_finite() {
                return Err(Error::NonFinite(format!("parameter tensor {name}")));
            }
        }
        Ok(())
    }

    /// Zeroes the attention output projections and the second feed-forward
    /// layer of every encoder layer, turning each sub-layer into identity.
    pub fn zero_residual_branches(&mut self) {
        for l in self.ids.layers.clone() {
            for id in [l.wo, l.ff2_w, l.ff2_b] {
                self.theta.get_mut(id).fill(0.0);
            }
        }
    }

    pub fn zero_critic(&mut self) {
        for t in self.phi.tensors_mut() {
            t.fill(0.0);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heads_must_divide_width() {
        let h = Hyper {
            embed_dim: 10,
            num_heads: 3,
            ..Hyper::tiny()
        };
        assert!(matches!(PolicyParams::init(h, 0), Err(Error::Config(_))));
    }

    #[test]
    fn init_is_seeded() {
        let a = PolicyParams::init(Hyper::tiny(), 3).unwrap();
        let b = PolicyParams::init(Hyper::tiny(), 3).unwrap();
        let c = PolicyParams::init(Hyper::tiny(), 4).unwrap();
        assert_eq!(a.theta, b.theta);
        assert_ne!(a.theta, c.theta);
    }

    #[test]
    fn from_sets_checks_layout() {
        let p = PolicyParams::init(Hyper::tiny(), 1).unwrap();
        let q = PolicyParams::from_sets(Hyper::tiny(), p.theta.clone(), p.phi.clone()).unwrap();
        assert_eq!(q.theta, p.theta);
        let desk = PolicyParams::init(Hyper::desk(), 1).unwrap();
        assert!(PolicyParams::from_sets(Hyper::tiny(), desk.theta, desk.phi).is_err());
    }
}
