use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;

use super::network::PolicyNetwork;
use crate::error::{Error, Result};
use crate::estimator::{bayes_update, FeedbackStrategy, Observation, OutcomeSource, Provider};
use crate::rng::{self, StreamRng};

/// `Tr[prev] − Tr[new]`.
pub fn reward(prev_cov: &DMatrix<f64>, new_cov: &DMatrix<f64>) -> f64 {
    assert_eq!(prev_cov.shape(), new_cov.shape(), "covariances differ in shape");
    prev_cov.trace() - new_cov.trace()
}

/// Anything CEM can optimise: a scalar episode reward for a flat weight vector.
pub trait Environment: Sync {
    fn param_count(&self) -> usize;

    fn episode(&self, weights: &[f64], seed: u64) -> Result<EpisodeOutcome>;
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeOutcome {
    pub total_reward: f64,
    pub rewards: Vec<f64>,
    pub initial_cov_trace: f64,
    pub final_cov_trace: f64,
    /// Set when an update collapsed; the reward is then `−Tr[cov_prior]`.
    pub aborted: bool,
}

/// Adaptive estimation as an episodic task: a truth is drawn uniformly from
/// the truth box, the policy picks controls before every probe, and each
/// update is rewarded by the drop in posterior covariance trace.
#[derive(Clone)]
pub struct EstimationEnv {
    pub source: OutcomeSource,
    pub provider: Provider,
    pub n_probes: usize,
    pub hidden: usize,
    pub truth_lo: f64,
    pub truth_hi: f64,
    pub control_lo: f64,
    pub control_hi: f64,
}

impl EstimationEnv {
    /// Truths over the particle grid shrunk by `margin` on each side, controls in `[−π, π]`.
    pub fn new(source: OutcomeSource, provider: Provider, n_probes: usize, margin: f64) -> Result<Self> {
        if source.dims() != provider.dims() || source.outcome_count() != provider.outcome_count() {
            return Err(Error::Shape("source and provider describe different devices".into()));
        }
        let grid = provider.particle_grid();
        let (truth_lo, truth_hi) = (grid.lo() + margin, grid.hi() - margin);
        if !(truth_lo < truth_hi) {
            return Err(Error::Config(format!("margin {margin} leaves no room for truths")));
        }
        Ok(Self {
            source,
            provider,
            n_probes,
            hidden: super::network::POLICY_HIDDEN,
            truth_lo,
            truth_hi,
            control_lo: -std::f64::consts::PI,
            control_hi: std::f64::consts::PI,
        })
    }

    pub fn dims(&self) -> usize {
        self.provider.dims()
    }

    pub fn policy(&self, weights: &[f64]) -> Result<PolicyNetwork> {
        PolicyNetwork::from_flat(self.dims(), self.hidden, weights)?.with_control_box(self.control_lo, self.control_hi)
    }

    pub fn sample_truth<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.dims()).map(|_| rng.random_range(self.truth_lo..self.truth_hi)).collect()
    }

    /// One episode under an arbitrary strategy, also returning the
    /// covariance trace after every probe.
    pub fn rollout(
        &self,
        strategy: &dyn FeedbackStrategy,
        truth: &[f64],
        seed: u64,
    ) -> Result<(EpisodeOutcome, Vec<f64>)> {
        let mut particles = self.provider.initial_particles();
        let mut outcome_rng = rng::stream(seed, &[0]);
        let mut strategy_rng: StreamRng = rng::stream(seed, &[1]);
        let mut cov = particles.covariance();
        let initial = cov.trace();
        let mut rewards = Vec::with_capacity(self.n_probes);
        let mut traces = vec![initial];
        for probe in 0..self.n_probes {
            let obs = Observation {
                estimate: particles.estimate_mean(),
                progress: probe as f64 / self.n_probes as f64,
                covariance: cov.transpose().as_slice().to_vec(),
            };
            let controls = strategy.controls(&obs, truth, &mut strategy_rng)?;
            let outcome = self.source.draw(truth, &controls, &mut outcome_rng)?;
            match bayes_update(&mut particles, outcome, &controls, &self.provider) {
                Ok(_) => {}
                Err(Error::DegenerateUpdate { .. }) => {
                    let outcome = EpisodeOutcome {
                        total_reward: -initial,
                        rewards,
                        initial_cov_trace: initial,
                        final_cov_trace: f64::NAN,
                        aborted: true,
                    };
                    return Ok((outcome, traces));
                }
                Err(e) => return Err(e),
            }
            let new_cov = particles.covariance();
            rewards.push(reward(&cov, &new_cov));
            cov = new_cov;
            traces.push(cov.trace());
        }
        let outcome = EpisodeOutcome {
            total_reward: rewards.iter().sum(),
            rewards,
            initial_cov_trace: initial,
            final_cov_trace: cov.trace(),
            aborted: false,
        };
        Ok((outcome, traces))
    }
}

/// Samples a truth from `seed` and plays one episode with the policy `weights`.
pub fn run_episode(env: &EstimationEnv, weights: &[f64], seed: u64) -> Result<EpisodeOutcome> {
    let policy = env.policy(weights)?;
    let truth = env.sample_truth(&mut rng::stream(seed, &[2]));
    env.rollout(&policy, &truth, seed).map(|(o, _)| o)
}

impl Environment for EstimationEnv {
    fn param_count(&self) -> usize {
        PolicyNetwork::param_count(self.dims(), self.hidden)
    }

    fn episode(&self, weights: &[f64], seed: u64) -> Result<EpisodeOutcome> {
        run_episode(self, weights, seed)
    }
}

/// Mean posterior covariance trace after `k = 0..=n_probes` probes, over
/// `n_truths × n_reps` episodes of `strategy`. Entry 0 is the prior's trace.
pub fn evaluate_bayes_risk(
    strategy: &dyn FeedbackStrategy,
    env: &EstimationEnv,
    n_truths: usize,
    n_reps: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let cells: Vec<(usize, usize)> = (0..n_truths).flat_map(|t| (0..n_reps).map(move |r| (t, r))).collect();
    let traces: Vec<Vec<f64>> = cells
        .par_iter()
        .map(|&(t, r)| {
            let truth = env.sample_truth(&mut rng::stream(seed, &[0, t as u64]));
            let (outcome, traces) = env.rollout(strategy, &truth, rng::derive_seed(seed, &[1, t as u64, r as u64]))?;
            if outcome.aborted {
                return Err(Error::DegenerateUpdate { outcome: usize::MAX });
            }
            Ok(traces)
        })
        .collect::<Result<_>>()?;
    let mut risk = vec![0.0; env.n_probes + 1];
    for tr in &traces {
        for (acc, v) in risk.iter_mut().zip(tr) {
            *acc += v;
        }
    }
    let n = traces.len().max(1) as f64;
    risk.iter_mut().for_each(|v| *v /= n);
    Ok(risk)
}
