use crate::error::{Error, Result};
use crate::grid::{PriorVector, ProbTable};

pub const PRIOR_TOLERANCE: f64 = 1e-10;
pub const PRIOR_MAX_ITERATIONS: usize = 100_000;

#[derive(Clone, Debug)]
pub struct PriorSolution {
    pub prior: PriorVector,
    pub eigenvalue: f64,
    pub iterations: usize,
    /// `‖M p − λ p‖∞` for the returned (normalised) prior.
    pub residual: f64,
}

/// Recovers the prior that generated the training data as the fixed point
/// `p_j = Σ_d P_NN(φ_j|d) Σ_k f(d|φ_k) p_k`.
///
/// `M = A B` with `A = P_NN` (points × outcomes) and `B = f` (outcomes ×
/// points), so the iteration runs on the small `B A` matrix and the prior is
/// read back as `A q`. The fixed point is the same as for the full matrix.
pub fn solve_prior(posterior: &ProbTable, freqs: &ProbTable) -> Result<PriorSolution> {
    if posterior.grid() != freqs.grid() || posterior.outcomes() != freqs.outcomes() {
        return Err(Error::Shape("posterior and frequency tables disagree on grid or outcomes".into()));
    }
    let n = posterior.grid().len();
    let d = posterior.outcomes();

    // K[a][b] = Σ_j f(a|j) P_NN(j|b)
    let mut k = vec![0.0; d * d];
    for a in 0..d {
        let fa = freqs.row(a);
        for b in 0..d {
            k[a * d + b] = fa.iter().zip(posterior.row(b)).map(|(x, y)| x * y).sum();
        }
    }

    let mut q = vec![1.0 / d as f64; d];
    let mut next = vec![0.0; d];
    let mut eigenvalue = 0.0;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < PRIOR_MAX_ITERATIONS {
        iterations += 1;
        for a in 0..d {
            next[a] = (0..d).map(|b| k[a * d + b] * q[b]).sum();
        }
        let norm: f64 = next.iter().sum();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::PriorRecovery("iteration collapsed to zero".into()));
        }
        eigenvalue = norm / q.iter().sum::<f64>();
        next.iter_mut().for_each(|x| *x /= norm);
        let change = q.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        std::mem::swap(&mut q, &mut next);
        if change < PRIOR_TOLERANCE {
            converged = true;
            break;
        }
    }
    if (eigenvalue - 1.0).abs() > 0.1 {
        return Err(Error::PriorRecovery(format!(
            "dominant eigenvalue {eigenvalue} is not close to 1; training data look inconsistent"
        )));
    }
    if !converged {
        return Err(Error::PriorRecovery(format!(
            "power iteration did not converge in {PRIOR_MAX_ITERATIONS} steps"
        )));
    }

    let mut p = vec![0.0; n];
    for (b, &qb) in q.iter().enumerate() {
        for (pj, &a) in p.iter_mut().zip(posterior.row(b)) {
            *pj += a * qb;
        }
    }
    let prior = PriorVector::from_weights(posterior.grid().clone(), p)?;
    let residual = prior_residual(posterior, freqs, prior.weights(), eigenvalue);
    Ok(PriorSolution {
        prior,
        eigenvalue,
        iterations,
        residual,
    })
}

/// `‖M p − λ p‖∞` evaluated in factored form.
pub fn prior_residual(posterior: &ProbTable, freqs: &ProbTable, p: &[f64], eigenvalue: f64) -> f64 {
    let d = posterior.outcomes();
    let marginal: Vec<f64> = (0..d)
        .map(|a| freqs.row(a).iter().zip(p).map(|(x, y)| x * y).sum())
        .collect();
    (0..p.len())
        .map(|j| {
            let mp: f64 = (0..d).map(|b| posterior.value(b, j) * marginal[b]).sum();
            (mp - eigenvalue * p[j]).abs()
        })
        .fold(0.0, f64::max)
}
