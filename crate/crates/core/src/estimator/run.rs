use std::io::Write;
use std::sync::Arc;

use rand::Rng;

use super::particles::{qloss, ParticleSet};
use super::provider::{bayes_update, Provider};
use crate::dataset::GridDataset;
use crate::error::{Error, Result};
use crate::models::LikelihoodModel;
use crate::rng::{self, StreamRng};

/// Where measurement outcomes come from during an estimation run.
#[derive(Clone)]
pub enum OutcomeSource {
    /// Sampled from the model at `truth` with the applied controls.
    Model(Arc<dyn LikelihoodModel>),
    /// Drawn from the recorded counts of the calibration point nearest to
    /// `truth + c`.
    Offline(Arc<GridDataset>),
}

impl OutcomeSource {
    pub fn dims(&self) -> usize {
        match self {
            OutcomeSource::Model(m) => m.dims(),
            OutcomeSource::Offline(d) => d.grid().dims(),
        }
    }

    pub fn outcome_count(&self) -> usize {
        match self {
            OutcomeSource::Model(m) => m.outcome_count(),
            OutcomeSource::Offline(d) => d.outcomes(),
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, truth: &[f64], controls: &[f64], rng: &mut R) -> Result<usize> {
        match self {
            OutcomeSource::Model(m) => Ok(m.outcome_probs(truth, controls).sample(rng)),
            OutcomeSource::Offline(ds) => {
                let shifted: Vec<f64> = truth.iter().zip(controls).map(|(t, c)| t + c).collect();
                let point = ds.grid().nearest_point(&shifted);
                let counts = ds.counts_at(point);
                if ds.r() == 0 {
                    return Err(Error::InsufficientData { point });
                }
                let mut u = rng.random_range(0..ds.r());
                for (d, &c) in counts.iter().enumerate() {
                    if u < c {
                        return Ok(d);
                    }
                    u -= c;
                }
                unreachable!("row counts sum to r")
            }
        }
    }
}

/// What a feedback strategy sees before each probe.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub estimate: Vec<f64>,
    /// Probes used so far divided by the probe budget.
    pub progress: f64,
    /// Posterior covariance, row-major.
    pub covariance: Vec<f64>,
}

impl Observation {
    pub fn from_particles(particles: &ParticleSet, probes_used: usize, n_probes: usize) -> Self {
        let cov = particles.covariance();
        Self {
            estimate: particles.estimate_mean(),
            progress: if n_probes == 0 { 0.0 } else { probes_used as f64 / n_probes as f64 },
            covariance: cov.transpose().as_slice().to_vec(),
        }
    }

    pub fn dim_for(dims: usize) -> usize {
        dims + 1 + dims * dims
    }

    pub fn dim(&self) -> usize {
        self.estimate.len() + 1 + self.covariance.len()
    }

    /// `[estimate…, progress, covariance…]`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim());
        v.extend_from_slice(&self.estimate);
        v.push(self.progress);
        v.extend_from_slice(&self.covariance);
        v
    }

    pub fn covariance_trace(&self) -> f64 {
        let d = self.estimate.len();
        (0..d).map(|a| self.covariance[a * d + a]).sum()
    }
}

/// Chooses the controls for the next probe.
///
/// `truth` is passed so that oracle baselines can be expressed; adaptive
/// strategies must ignore it.
pub trait FeedbackStrategy: Send + Sync {
    fn controls(&self, obs: &Observation, truth: &[f64], rng: &mut StreamRng) -> Result<Vec<f64>>;

    fn name(&self) -> &str;
}

/// Controls fixed at zero.
#[derive(Clone, Copy, Debug, Default)]
pub struct ZeroFeedback;

impl FeedbackStrategy for ZeroFeedback {
    fn controls(&self, obs: &Observation, _truth: &[f64], _rng: &mut StreamRng) -> Result<Vec<f64>> {
        Ok(vec![0.0; obs.estimate.len()])
    }

    fn name(&self) -> &str {
        "none"
    }
}

/// Independent uniform controls in `[lo, hi)` per axis.
#[derive(Clone, Copy, Debug)]
pub struct RandomFeedback {
    pub lo: f64,
    pub hi: f64,
}

impl Default for RandomFeedback {
    fn default() -> Self {
        Self {
            lo: -std::f64::consts::PI,
            hi: std::f64::consts::PI,
        }
    }
}

impl FeedbackStrategy for RandomFeedback {
    fn controls(&self, obs: &Observation, _truth: &[f64], rng: &mut StreamRng) -> Result<Vec<f64>> {
        Ok((0..obs.estimate.len()).map(|_| rng.random_range(self.lo..self.hi)).collect())
    }

    fn name(&self) -> &str {
        "random"
    }
}

/// Uniform controls chosen so that `truth + c` stays inside `[lo, hi]`.
///
/// Uses knowledge of the truth, so it is only a reference for what random
/// probing achieves on a calibration grid that does not wrap.
#[derive(Clone, Copy, Debug)]
pub struct TruthWindowFeedback {
    pub lo: f64,
    pub hi: f64,
}

impl FeedbackStrategy for TruthWindowFeedback {
    fn controls(&self, _obs: &Observation, truth: &[f64], rng: &mut StreamRng) -> Result<Vec<f64>> {
        truth
            .iter()
            .map(|&t| {
                let (a, b) = (self.lo - t, self.hi - t);
                if b <= a {
                    return Err(Error::Domain(format!("truth {t} lies outside [{}, {}]", self.lo, self.hi)));
                }
                Ok(rng.random_range(a..b))
            })
            .collect()
    }

    fn name(&self) -> &str {
        "truth-window"
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeRecord {
    pub controls: Vec<f64>,
    pub snap_residue: f64,
    pub outcome: usize,
    pub estimate: Vec<f64>,
    pub cov_trace: f64,
    pub qloss: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EstimationTrace {
    pub truth: Vec<f64>,
    pub initial_estimate: Vec<f64>,
    pub initial_cov_trace: f64,
    pub records: Vec<ProbeRecord>,
}

impl EstimationTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn final_estimate(&self) -> &[f64] {
        self.records.last().map_or(&self.initial_estimate, |r| &r.estimate)
    }

    pub fn qloss_curve(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.qloss).collect()
    }

    /// Columns: `probe_index, c0.., outcome, est0.., cov_trace, qloss, snap_residue`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let dims = self.truth.len();
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["probe_index".to_string()];
        header.extend((0..dims).map(|a| format!("c{a}")));
        header.push("outcome".into());
        header.extend((0..dims).map(|a| format!("est{a}")));
        header.extend(["cov_trace".into(), "qloss".into(), "snap_residue".into()]);
        w.write_record(&header).map_err(csv_err)?;
        for (i, r) in self.records.iter().enumerate() {
            let mut row = vec![(i + 1).to_string()];
            row.extend(r.controls.iter().map(|c| c.to_string()));
            row.push(r.outcome.to_string());
            row.extend(r.estimate.iter().map(|e| e.to_string()));
            row.extend([r.cov_trace.to_string(), r.qloss.to_string(), r.snap_residue.to_string()]);
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

/// Runs `n_probes` adaptive measurements of `truth`, starting from `initial`.
///
/// Outcome draws and strategy randomness use separate streams derived from `seed`.
pub fn run_estimation(
    source: &OutcomeSource,
    provider: &Provider,
    initial: &ParticleSet,
    strategy: &dyn FeedbackStrategy,
    n_probes: usize,
    truth: &[f64],
    seed: u64,
) -> Result<EstimationTrace> {
    if truth.len() != provider.dims() || source.dims() != provider.dims() {
        return Err(Error::Shape("truth, source and provider disagree on dimension".into()));
    }
    if source.outcome_count() != provider.outcome_count() {
        return Err(Error::Shape("source and provider disagree on the outcome count".into()));
    }
    let mut particles = initial.clone();
    let mut outcome_rng = rng::stream(seed, &[0]);
    let mut strategy_rng = rng::stream(seed, &[1]);
    let mut obs = Observation::from_particles(&particles, 0, n_probes);
    let mut trace = EstimationTrace {
        truth: truth.to_vec(),
        initial_estimate: obs.estimate.clone(),
        initial_cov_trace: obs.covariance_trace(),
        records: Vec::with_capacity(n_probes),
    };
    for probe in 0..n_probes {
        let controls = strategy.controls(&obs, truth, &mut strategy_rng)?;
        let outcome = source.draw(truth, &controls, &mut outcome_rng)?;
        let snap_residue = bayes_update(&mut particles, outcome, &controls, provider)?;
        obs = Observation::from_particles(&particles, probe + 1, n_probes);
        trace.records.push(ProbeRecord {
            qloss: qloss(&obs.estimate, truth),
            cov_trace: obs.covariance_trace(),
            estimate: obs.estimate.clone(),
            controls,
            snap_residue,
            outcome,
        });
    }
    Ok(trace)
}
