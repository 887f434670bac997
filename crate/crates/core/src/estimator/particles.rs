use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grid::{ParameterGrid, PriorVector};

/// Weighted particles pinned to the points of a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleSet {
    grid: ParameterGrid,
    positions: Vec<f64>,
    weights: Vec<f64>,
}

impl ParticleSet {
    pub fn uniform(grid: &ParameterGrid) -> Self {
        let n = grid.len();
        Self {
            grid: grid.clone(),
            positions: grid.positions(),
            weights: vec![1.0 / n as f64; n],
        }
    }

    /// Weights proportional to `prior`.
    pub fn from_prior(prior: &PriorVector) -> Result<Self> {
        Self::from_weights(prior.grid(), prior.weights().to_vec())
    }

    pub fn from_weights(grid: &ParameterGrid, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != grid.len() {
            return Err(Error::Shape(format!(
                "{} weights for {} grid points",
                weights.len(),
                grid.len()
            )));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidPrior("weights must be finite and nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidPrior("all weights are zero".into()));
        }
        Ok(Self {
            grid: grid.clone(),
            positions: grid.positions(),
            weights: weights.into_iter().map(|w| w / total).collect(),
        })
    }

    pub fn grid(&self) -> &ParameterGrid {
        &self.grid
    }

    pub fn dims(&self) -> usize {
        self.grid.dims()
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Particle coordinates, `len × dims` row-major.
    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Multiplies each weight by `factors[i]` and renormalises.
    pub fn reweight(&mut self, factors: &[f64], outcome: usize) -> Result<()> {
        let mut total = 0.0;
        for (w, f) in self.weights.iter_mut().zip(factors) {
            *w *= f;
            total += *w;
        }
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::DegenerateUpdate { outcome });
        }
        let inv = 1.0 / total;
        self.weights.iter_mut().for_each(|w| *w *= inv);
        Ok(())
    }

    /// Posterior mean `Σ_i w_i φ_i`, componentwise and linear.
    pub fn estimate_mean(&self) -> Vec<f64> {
        let dims = self.dims();
        let mut mean = vec![0.0; dims];
        for (w, p) in self.weights.iter().zip(self.positions.chunks_exact(dims)) {
            for (m, x) in mean.iter_mut().zip(p) {
                *m += w * x;
            }
        }
        mean
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        let dims = self.dims();
        let mean = self.estimate_mean();
        let mut cov = DMatrix::zeros(dims, dims);
        for (w, p) in self.weights.iter().zip(self.positions.chunks_exact(dims)) {
            for a in 0..dims {
                let da = p[a] - mean[a];
                for b in a..dims {
                    cov[(a, b)] += w * da * (p[b] - mean[b]);
                }
            }
        }
        for a in 0..dims {
            for b in 0..a {
                cov[(a, b)] = cov[(b, a)];
            }
        }
        cov
    }

    pub fn covariance_trace(&self) -> f64 {
        self.covariance().trace()
    }
}

/// Squared Euclidean error summed over components.
pub fn qloss(estimate: &[f64], truth: &[f64]) -> f64 {
    assert_eq!(estimate.len(), truth.len(), "estimate and truth differ in length");
    estimate.iter().zip(truth).map(|(e, t)| (e - t) * (e - t)).sum()
}
