use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::env::Environment;
use crate::error::{Error, Result};
use crate::rng;

pub const SIGMA_FLOOR: f64 = 1e-6;
pub const SIGMA_CONVERGED: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CemConfig {
    pub population: usize,
    pub elite_frac: f64,
    pub sigma0: f64,
    /// Episodes averaged into each candidate's score.
    pub episodes_per_candidate: usize,
    /// Score every candidate of an iteration on the same episode seeds.
    pub common_episodes: bool,
}

impl Default for CemConfig {
    fn default() -> Self {
        Self {
            population: 100,
            elite_frac: 0.10,
            sigma0: 0.5,
            episodes_per_candidate: 1,
            common_episodes: false,
        }
    }
}

/// Diagonal Gaussian search distribution over flat policy weights.
#[derive(Clone, Debug, PartialEq)]
pub struct CemState {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub population: usize,
    pub elite_frac: f64,
    pub iteration: usize,
}

impl CemState {
    /// `μ = 0`, `σ = sigma0` on every coordinate.
    pub fn new(n_params: usize, config: &CemConfig) -> Result<Self> {
        if config.population == 0 || !(config.elite_frac > 0.0 && config.elite_frac <= 1.0) {
            return Err(Error::Config("population must be positive and elite fraction in (0, 1]".into()));
        }
        if !(config.sigma0 > 0.0) {
            return Err(Error::Config("initial standard deviation must be positive".into()));
        }
        Ok(Self {
            mean: vec![0.0; n_params],
            std: vec![config.sigma0; n_params],
            population: config.population,
            elite_frac: config.elite_frac,
            iteration: 0,
        })
    }

    pub fn elite_count(&self) -> usize {
        ((self.elite_frac * self.population as f64).ceil() as usize).clamp(1, self.population)
    }
}

#[derive(Clone, Debug)]
pub struct CemIteration {
    pub candidates: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    pub elite: Vec<usize>,
    pub aborted: usize,
}

/// Indices of the `count` highest rewards; equal rewards keep the lower index first.
pub fn select_elite(rewards: &[f64], count: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..rewards.len()).collect();
    order.sort_by(|&a, &b| rewards[b].total_cmp(&rewards[a]).then(a.cmp(&b)));
    order.truncate(count);
    order
}

/// Elite mean and (population) standard deviation per coordinate.
pub fn elite_statistics(candidates: &[Vec<f64>], elite: &[usize]) -> (Vec<f64>, Vec<f64>) {
    let n = candidates[0].len();
    let k = elite.len() as f64;
    let mut mean = vec![0.0; n];
    for &e in elite {
        for (m, x) in mean.iter_mut().zip(&candidates[e]) {
            *m += x / k;
        }
    }
    let mut var = vec![0.0; n];
    for &e in elite {
        for ((v, x), m) in var.iter_mut().zip(&candidates[e]).zip(&mean) {
            *v += (x - m) * (x - m) / k;
        }
    }
    (mean, var.into_iter().map(f64::sqrt).collect())
}

/// Samples and scores one population. Candidate `i` of iteration `t` draws its
/// weights from a stream keyed by `(seed, t, i)`. Its episodes use the same key,
/// or `(seed, t)` alone when `common_episodes` is set.
pub fn cem_sample(
    env: &dyn Environment,
    state: &CemState,
    episodes_per_candidate: usize,
    common_episodes: bool,
    seed: u64,
) -> Result<CemIteration> {
    let t = state.iteration as u64;
    let results: Vec<(Vec<f64>, f64, usize)> = (0..state.population)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(seed, &[t, i as u64, 0]);
            let w: Vec<f64> = state
                .mean
                .iter()
                .zip(&state.std)
                .map(|(m, s)| {
                    let z: f64 = StandardNormal.sample(&mut r);
                    m + s * z
                })
                .collect();
            let mut total = 0.0;
            let mut aborted = 0;
            for e in 0..episodes_per_candidate {
                let key = if common_episodes {
                    [t, u64::MAX, 1 + e as u64]
                } else {
                    [t, i as u64, 1 + e as u64]
                };
                let o = env.episode(&w, rng::derive_seed(seed, &key))?;
                total += o.total_reward;
                aborted += o.aborted as usize;
            }
            Ok((w, total / episodes_per_candidate as f64, aborted))
        })
        .collect::<Result<_>>()?;
    let rewards: Vec<f64> = results.iter().map(|r| r.1).collect();
    let aborted = results.iter().map(|r| r.2).sum();
    let elite = select_elite(&rewards, state.elite_count());
    Ok(CemIteration {
        candidates: results.into_iter().map(|r| r.0).collect(),
        rewards,
        elite,
        aborted,
    })
}

#[derive(Clone, Debug)]
pub struct CemReport {
    pub weights: Vec<f64>,
    pub state: CemState,
    pub elite_mean_rewards: Vec<f64>,
    pub population_mean_rewards: Vec<f64>,
    pub aborted_episodes: usize,
    pub converged_early: bool,
}

/// Runs `n_episodes / (population · episodes_per_candidate)` iterations and
/// returns the final mean as the trained weights.
pub fn cem_train(
    env: &dyn Environment,
    mut state: CemState,
    config: &CemConfig,
    n_episodes: usize,
    seed: u64,
) -> Result<CemReport> {
    if state.mean.len() != env.param_count() || state.std.len() != env.param_count() {
        return Err(Error::Shape("search distribution does not match the environment".into()));
    }
    if config.episodes_per_candidate == 0 {
        return Err(Error::Config("episodes per candidate must be positive".into()));
    }
    let per_iteration = state.population * config.episodes_per_candidate;
    if n_episodes < per_iteration {
        return Err(Error::Config(format!(
            "{n_episodes} episodes cannot fill one population of {per_iteration}"
        )));
    }
    let iterations = n_episodes / per_iteration;
    let mut report = CemReport {
        weights: Vec::new(),
        state: state.clone(),
        elite_mean_rewards: Vec::with_capacity(iterations),
        population_mean_rewards: Vec::with_capacity(iterations),
        aborted_episodes: 0,
        converged_early: false,
    };
    for _ in 0..iterations {
        let it = cem_sample(env, &state, config.episodes_per_candidate, config.common_episodes, seed)?;
        let elite_reward = it.elite.iter().map(|&e| it.rewards[e]).sum::<f64>() / it.elite.len() as f64;
        report.elite_mean_rewards.push(elite_reward);
        report
            .population_mean_rewards
            .push(it.rewards.iter().sum::<f64>() / it.rewards.len() as f64);
        report.aborted_episodes += it.aborted;
        let (mean, std) = elite_statistics(&it.candidates, &it.elite);
        state.mean = mean;
        state.iteration += 1;
        if std.iter().all(|&s| s < SIGMA_CONVERGED) {
            state.std = std;
            report.converged_early = true;
            break;
        }
        state.std = std.into_iter().map(|s| s.max(SIGMA_FLOOR)).collect();
    }
    report.weights = state.mean.clone();
    report.state = state;
    Ok(report)
}
