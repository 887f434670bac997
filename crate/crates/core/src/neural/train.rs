use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::network::{PosteriorNetwork, ShotGroup};
use crate::dataset::GridDataset;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub hidden: Vec<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 60,
            batch_size: 256,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            hidden: PosteriorNetwork::DEFAULT_HIDDEN.to_vec(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch size must be positive".into()));
        }
        if !(self.learning_rate > 0.0) || !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("invalid optimiser hyper-parameters".into()));
        }
        if self.hidden.contains(&0) {
            return Err(Error::Config("hidden layers must have at least one unit".into()));
        }
        Ok(())
    }
}

/// ADAM with bias-corrected moment estimates.
#[derive(Clone, Debug)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(params: usize, lr: f64, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            epsilon,
            m: vec![0.0; params],
            v: vec![0.0; params],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub network: PosteriorNetwork,
    /// Cross-entropy over the full dataset after each epoch.
    pub epoch_losses: Vec<f64>,
}

/// Trains a posterior network on every shot of `dataset`, treating the grid
/// index as the class label of each recorded outcome.
pub fn train_posterior_network(dataset: &GridDataset, config: &TrainConfig) -> Result<TrainReport> {
    config.validate()?;
    let grid = dataset.grid();
    let outcomes = dataset.outcomes();
    let classes = grid.len();
    if classes > u32::MAX as usize {
        return Err(Error::Config("grid too large".into()));
    }
    let mut net = PosteriorNetwork::new(&config.hidden, classes, outcomes, &mut rng::stream(config.seed, &[0]))?;

    let mut shots: Vec<(u32, u32)> = Vec::with_capacity(dataset.total_events() as usize);
    let mut by_outcome = vec![vec![0u64; classes]; outcomes];
    for j in 0..classes {
        for (d, &c) in dataset.counts_at(j).iter().enumerate() {
            by_outcome[d][j] = c;
            shots.extend(std::iter::repeat_n((j as u32, d as u32), c as usize));
        }
    }
    if shots.is_empty() {
        return Err(Error::InsufficientData { point: 0 });
    }

    let n_params = net.mlp().params().len();
    let mut adam = Adam::new(n_params, config.learning_rate, config.beta1, config.beta2, config.epsilon);
    let mut grad = vec![0.0; n_params];
    let mut groups: Vec<ShotGroup> = (0..outcomes)
        .map(|d| ShotGroup {
            outcome: d,
            classes: Vec::new(),
        })
        .collect();
    let mut shuffle_rng = rng::stream(config.seed, &[1]);
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    for _ in 0..config.epochs {
        shots.shuffle(&mut shuffle_rng);
        for batch in shots.chunks(config.batch_size) {
            groups.iter_mut().for_each(|g| g.classes.clear());
            for &(class, outcome) in batch {
                groups[outcome as usize].classes.push(class);
            }
            net.loss_and_gradient(&groups, &mut grad)?;
            adam.step(net.mlp_mut().params_mut(), &grad);
        }
        let loss = net.dataset_loss(&by_outcome);
        if !loss.is_finite() {
            return Err(Error::NonFinite("training loss diverged".into()));
        }
        epoch_losses.push(loss);
    }
    Ok(TrainReport {
        network: net,
        epoch_losses,
    })
}
