//! Qloss curves aggregated over sampled truths and repeated runs.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{run_estimation, FeedbackStrategy, OutcomeSource, ParticleSet, Provider};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    /// Mean over every (truth, repetition) cell.
    Mean,
    /// Median over repetitions for each truth, then mean over truths.
    Median,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveSpec {
    pub n_truths: usize,
    pub n_reps: usize,
    pub n_probes: usize,
    /// Truths are uniform over `[lo + margin, hi − margin]` per axis.
    pub truth_lo: f64,
    pub truth_hi: f64,
    pub margin: f64,
    pub seed: u64,
    pub aggregation: Aggregation,
}

impl CurveSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_truths == 0 || self.n_reps == 0 || self.n_probes == 0 {
            return Err(Error::Config("truths, repetitions and probes must all be positive".into()));
        }
        if !(self.truth_lo + self.margin < self.truth_hi - self.margin) {
            return Err(Error::Config("the truth interval is empty after the margin".into()));
        }
        Ok(())
    }
}

/// Per-probe aggregates; index `k` holds the value after `k + 1` probes.
#[derive(Clone, Debug, PartialEq)]
pub struct QlossCurve {
    pub qloss: Vec<f64>,
    /// Standard error of `qloss` across truths.
    pub dispersion: Vec<f64>,
    /// Mean posterior covariance trace.
    pub cov_trace: Vec<f64>,
    pub truths: Vec<Vec<f64>>,
    /// Per-truth aggregate after the last probe, aligned with `truths`.
    pub final_per_truth: Vec<f64>,
}

impl QlossCurve {
    pub fn at(&self, probes: usize) -> f64 {
        self.qloss[probes - 1]
    }
}

pub fn sample_truths(dims: usize, spec: &CurveSpec) -> Vec<Vec<f64>> {
    let (lo, hi) = (spec.truth_lo + spec.margin, spec.truth_hi - spec.margin);
    (0..spec.n_truths)
        .map(|t| {
            let mut r = rng::stream(spec.seed, &[0, t as u64]);
            (0..dims).map(|_| r.random_range(lo..hi)).collect()
        })
        .collect()
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Runs every (truth, repetition) cell in parallel and reduces in a fixed order,
/// so the result depends only on `spec.seed`.
pub fn qloss_curve(
    source: &OutcomeSource,
    provider: &Provider,
    initial: &ParticleSet,
    strategy: &dyn FeedbackStrategy,
    spec: &CurveSpec,
) -> Result<QlossCurve> {
    spec.validate()?;
    let truths = sample_truths(provider.dims(), spec);
    let cells: Vec<(usize, usize)> = (0..spec.n_truths)
        .flat_map(|t| (0..spec.n_reps).map(move |r| (t, r)))
        .collect();
    let runs: Vec<(Vec<f64>, Vec<f64>)> = cells
        .par_iter()
        .map(|&(t, r)| {
            let seed = rng::derive_seed(spec.seed, &[1, t as u64, r as u64]);
            let trace = run_estimation(source, provider, initial, strategy, spec.n_probes, &truths[t], seed)?;
            let q = trace.records.iter().map(|p| p.qloss).collect();
            let c = trace.records.iter().map(|p| p.cov_trace).collect();
            Ok((q, c))
        })
        .collect::<Result<_>>()?;

    let n = spec.n_probes;
    let mut qloss = vec![0.0; n];
    let mut dispersion = vec![0.0; n];
    let mut cov_trace = vec![0.0; n];
    let mut per_truth = vec![0.0; spec.n_truths];
    let mut reps = vec![0.0; spec.n_reps];
    for k in 0..n {
        for (t, value) in per_truth.iter_mut().enumerate() {
            for (r, slot) in reps.iter_mut().enumerate() {
                *slot = runs[t * spec.n_reps + r].0[k];
            }
            *value = match spec.aggregation {
                Aggregation::Mean => reps.iter().sum::<f64>() / spec.n_reps as f64,
                Aggregation::Median => median(&mut reps),
            };
        }
        let m = per_truth.iter().sum::<f64>() / spec.n_truths as f64;
        let var = if spec.n_truths > 1 {
            per_truth.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (spec.n_truths - 1) as f64
        } else {
            0.0
        };
        qloss[k] = m;
        dispersion[k] = (var / spec.n_truths as f64).sqrt();
        cov_trace[k] = runs.iter().map(|r| r.1[k]).sum::<f64>() / runs.len() as f64;
    }
    Ok(QlossCurve {
        qloss,
        dispersion,
        cov_trace,
        truths,
        final_per_truth: per_truth,
    })
}
