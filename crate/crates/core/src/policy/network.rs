use std::f64::consts::PI;

use serde_json::json;

use crate::error::{Error, Result};
use crate::estimator::{FeedbackStrategy, Observation};
use crate::neural::{sigmoid, Activation, Mlp, WeightDocument};
use crate::rng::StreamRng;

pub const POLICY_HIDDEN: usize = 16;

/// Maps an [`Observation`] to control phases: one rectified hidden layer and
/// a sigmoid output rescaled onto `[lo, hi]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyNetwork {
    mlp: Mlp,
    lo: f64,
    hi: f64,
}

impl PolicyNetwork {
    pub fn zeros(dims: usize, hidden: usize) -> Result<Self> {
        let mlp = Mlp::zeros(
            vec![Observation::dim_for(dims), hidden, dims],
            vec![Activation::Relu, Activation::Sigmoid],
        )?;
        Ok(Self { mlp, lo: -PI, hi: PI })
    }

    pub fn param_count(dims: usize, hidden: usize) -> usize {
        Mlp::count_params(&[Observation::dim_for(dims), hidden, dims])
    }

    /// Network with the given flat parameter vector (layout of [`Mlp::params`]).
    pub fn from_flat(dims: usize, hidden: usize, weights: &[f64]) -> Result<Self> {
        let mut net = Self::zeros(dims, hidden)?;
        net.mlp.set_params(weights)?;
        Ok(net)
    }

    pub fn with_control_box(mut self, lo: f64, hi: f64) -> Result<Self> {
        if !(lo < hi) {
            return Err(Error::Config(format!("empty control box [{lo}, {hi}]")));
        }
        self.lo = lo;
        self.hi = hi;
        Ok(self)
    }

    pub fn dims(&self) -> usize {
        self.mlp.output_size()
    }

    pub fn hidden(&self) -> usize {
        self.mlp.sizes()[1]
    }

    pub fn params(&self) -> &[f64] {
        self.mlp.params()
    }

    pub fn control_box(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn forward(&self, obs: &Observation) -> Result<Vec<f64>> {
        let x = obs.to_vec();
        if x.len() != self.mlp.input_size() {
            return Err(Error::Shape(format!(
                "observation has {} entries, policy expects {}",
                x.len(),
                self.mlp.input_size()
            )));
        }
        let mut h = self.mlp.affine(0, &x);
        h.iter_mut().for_each(|v| *v = v.max(0.0));
        let raw = self.mlp.affine(1, &h);
        Ok(raw.into_iter().map(|z| self.lo + (self.hi - self.lo) * sigmoid(z)).collect())
    }

    pub fn to_document(&self) -> WeightDocument {
        self.mlp
            .to_document("policy", Some(json!({ "control_lo": self.lo, "control_hi": self.hi })))
    }

    pub fn from_document(doc: &WeightDocument) -> Result<Self> {
        if doc.kind != "policy" {
            return Err(Error::Config(format!("expected a policy network, found {:?}", doc.kind)));
        }
        let mlp = Mlp::from_document(doc)?;
        if mlp.layer_count() != 2 || mlp.activations() != [Activation::Relu, Activation::Sigmoid] {
            return Err(Error::Shape("policy networks have one rectified and one sigmoid layer".into()));
        }
        let dims = mlp.output_size();
        if mlp.input_size() != Observation::dim_for(dims) {
            return Err(Error::Shape("policy input does not match its output dimension".into()));
        }
        let meta = doc.metadata.as_ref();
        let bound = |key: &str, default: f64| meta.and_then(|m| m.get(key)).and_then(|v| v.as_f64()).unwrap_or(default);
        Self {
            mlp,
            lo: -PI,
            hi: PI,
        }
        .with_control_box(bound("control_lo", -PI), bound("control_hi", PI))
    }
}

pub fn policy_forward(net: &PolicyNetwork, obs: &Observation) -> Result<Vec<f64>> {
    net.forward(obs)
}

impl FeedbackStrategy for PolicyNetwork {
    fn controls(&self, obs: &Observation, _truth: &[f64], _rng: &mut StreamRng) -> Result<Vec<f64>> {
        self.forward(obs)
    }

    fn name(&self) -> &str {
        "policy"
    }
}
