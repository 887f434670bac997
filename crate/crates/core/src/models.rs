//! Likelihood providers.
//!
//! * the two-outcome Mach-Zehnder interferometer, `P(0|φ) = cos²(φ/2)`;
//! * the ideal 4-arm interferometer built from two balanced quarters, probed
//!   with two indistinguishable photons and read out on the ten two-photon
//!   output events;
//! * the occurrence-frequency table estimated from a calibration grid.
//!
//! The module also computes the quantum Cramér-Rao coefficient of the
//! two-photon probe, `Tr[F⁻¹]`.

use std::f64::consts::FRAC_1_SQRT_2;

use nalgebra::{DMatrix, Matrix4};
use num_complex::Complex64;
use rand::Rng;

use crate::dataset::GridDataset;
use crate::error::{Error, Result};
use crate::grid::{ParameterGrid, ProbTable};

/// Lower clamp applied to outcome probabilities before they are used as
/// likelihood factors, so that finite-precision zeros of ideal models do not
/// irreversibly remove particles.
pub const PROBABILITY_FLOOR: f64 = 1e-12;

const DISTRIBUTION_TOL: f64 = 1e-10;
const UNITARITY_TOL: f64 = 1e-10;

/// A normalised distribution over the outcomes of one probe.
#[derive(Clone, Debug, PartialEq)]
pub struct OutcomeDistribution {
    probs: Vec<f64>,
}

impl OutcomeDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidModel(format!(
                "outcome probabilities must be nonnegative: {probs:?}"
            )));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > DISTRIBUTION_TOL {
            return Err(Error::InvalidModel(format!(
                "outcome probabilities sum to {total}"
            )));
        }
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Draws one outcome by inverting the cumulative distribution.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut last = 0;
        for (d, &p) in self.probs.iter().enumerate() {
            if p > 0.0 {
                last = d;
                acc += p;
                if u < acc {
                    return d;
                }
            }
        }
        last
    }
}

/// A device whose outcome statistics depend on the phases plus the controls.
pub trait LikelihoodModel: Send + Sync {
    fn dims(&self) -> usize;

    fn outcome_count(&self) -> usize;

    /// Outcome distribution at total phase `phases + controls`.
    fn outcome_probs(&self, phases: &[f64], controls: &[f64]) -> OutcomeDistribution;

    /// Floored likelihood `P(outcome | φ_i + c)` for every point of `grid`.
    fn likelihoods(&self, outcome: usize, grid: &ParameterGrid, controls: &[f64], out: &mut [f64]) {
        for (flat, slot) in out.iter_mut().enumerate().take(grid.len()) {
            let p = self.outcome_probs(&grid.point(flat), controls).probs()[outcome];
            *slot = p.max(PROBABILITY_FLOOR);
        }
    }
}

/// `[cos²((φ+c)/2), sin²((φ+c)/2)]`.
pub fn mz_outcome_probs(phase: f64, control: f64) -> OutcomeDistribution {
    let p0 = mz_p0(phase + control);
    OutcomeDistribution { probs: vec![p0, 1.0 - p0] }
}

fn mz_p0(total: f64) -> f64 {
    let c = (0.5 * total).cos();
    c * c
}

/// Single-phase Mach-Zehnder interferometer with two output ports.
#[derive(Clone, Copy, Debug, Default)]
pub struct MachZehnder;

impl LikelihoodModel for MachZehnder {
    fn dims(&self) -> usize {
        1
    }

    fn outcome_count(&self) -> usize {
        2
    }

    fn outcome_probs(&self, phases: &[f64], controls: &[f64]) -> OutcomeDistribution {
        mz_outcome_probs(phases[0], controls[0])
    }

    fn likelihoods(&self, outcome: usize, grid: &ParameterGrid, controls: &[f64], out: &mut [f64]) {
        for (k, slot) in out.iter_mut().enumerate().take(grid.len()) {
            let p0 = mz_p0(grid.axis_value(k) + controls[0]);
            let p = if outcome == 0 { p0 } else { 1.0 - p0 };
            *slot = p.max(PROBABILITY_FLOOR);
        }
    }
}

/// Ordering of the ten two-photon output events: the four bunched events
/// (both photons in mode m) followed by the six coincidences `{i, j}`, `i < j`,
/// in lexicographic order.
pub struct OutcomeIndexing;

impl OutcomeIndexing {
    pub const EVENTS: [(usize, usize); 10] = [
        (0, 0),
        (1, 1),
        (2, 2),
        (3, 3),
        (0, 1),
        (0, 2),
        (0, 3),
        (1, 2),
        (1, 3),
        (2, 3),
    ];

    pub fn event(index: usize) -> (usize, usize) {
        Self::EVENTS[index]
    }

    /// Index of the event with photons in output modes `r` and `s`.
    pub fn index(r: usize, s: usize) -> usize {
        let (r, s) = if r <= s { (r, s) } else { (s, r) };
        Self::EVENTS
            .iter()
            .position(|&e| e == (r, s))
            .expect("modes are in 0..4")
    }
}

/// 4×4 complex transformation of the interferometer modes.
#[derive(Clone, Debug, PartialEq)]
pub struct UnitaryMatrix(pub Matrix4<Complex64>);

impl UnitaryMatrix {
    pub fn entry(&self, r: usize, c: usize) -> Complex64 {
        self.0[(r, c)]
    }

    /// Frobenius norm of `U†U - I`.
    pub fn unitarity_defect(&self) -> f64 {
        (self.0.adjoint() * self.0 - Matrix4::identity()).norm()
    }

    pub fn is_unitary(&self) -> bool {
        self.unitarity_defect() <= UNITARITY_TOL
    }

    pub fn mul(&self, other: &UnitaryMatrix) -> UnitaryMatrix {
        UnitaryMatrix(self.0 * other.0)
    }
}

/// Balanced 4-mode splitter ("quarter") variants.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuarterKind {
    /// Two layers of symmetric 50:50 couplers, `B ⊗ B` with
    /// `B = [[1, i], [i, 1]]/√2`: couplers (0,1),(2,3) then (0,2),(1,3).
    #[default]
    FourCoupler,
    /// Discrete-Fourier multiport, `Q[j][k] = exp(iπjk/2)/2`.
    Fourier,
}

impl QuarterKind {
    pub fn unitary(self) -> UnitaryMatrix {
        match self {
            QuarterKind::FourCoupler => {
                let h = FRAC_1_SQRT_2;
                let b = [
                    [Complex64::new(h, 0.0), Complex64::new(0.0, h)],
                    [Complex64::new(0.0, h), Complex64::new(h, 0.0)],
                ];
                UnitaryMatrix(Matrix4::from_fn(|r, c| b[r / 2][c / 2] * b[r % 2][c % 2]))
            }
            QuarterKind::Fourier => UnitaryMatrix(Matrix4::from_fn(|j, k| {
                Complex64::from_polar(0.5, std::f64::consts::FRAC_PI_2 * (j * k) as f64)
            })),
        }
    }
}

/// The ideal quarter used by the device model.
pub fn quarter_unitary() -> UnitaryMatrix {
    QuarterKind::default().unitary()
}

fn phase_diag(phases: &[f64], controls: &[f64]) -> Matrix4<Complex64> {
    let mut d = Matrix4::identity();
    for m in 0..3 {
        d[(m + 1, m + 1)] = Complex64::cis(phases[m] + controls[m]);
    }
    d
}

/// `U = Q · diag(1, e^{i(φ1+c1)}, e^{i(φ2+c2)}, e^{i(φ3+c3)}) · Q`, with mode 0
/// the reference arm.
pub fn device_unitary(quarter: &UnitaryMatrix, phases: &[f64], controls: &[f64]) -> UnitaryMatrix {
    UnitaryMatrix(quarter.0 * phase_diag(phases, controls) * quarter.0)
}

fn check_modes(input: (usize, usize)) -> Result<()> {
    let (a, b) = input;
    if a == b || a > 3 || b > 3 {
        return Err(Error::InvalidModel(format!(
            "input modes {input:?} must be distinct and in 0..4"
        )));
    }
    Ok(())
}

/// Output distribution of two indistinguishable photons entering modes
/// `input` of `u`, ordered per [`OutcomeIndexing`].
pub fn two_photon_outcome_probs(u: &UnitaryMatrix, input: (usize, usize)) -> Result<OutcomeDistribution> {
    check_modes(input)?;
    if !u.is_unitary() {
        return Err(Error::InvalidModel(format!(
            "transformation is not unitary (defect {:.3e})",
            u.unitarity_defect()
        )));
    }
    let (a, b) = input;
    let probs = OutcomeIndexing::EVENTS
        .iter()
        .map(|&(r, s)| {
            if r == s {
                2.0 * (u.entry(r, a) * u.entry(r, b)).norm_sqr()
            } else {
                (u.entry(r, a) * u.entry(s, b) + u.entry(r, b) * u.entry(s, a)).norm_sqr()
            }
        })
        .collect();
    OutcomeDistribution::new(probs)
}

/// Ideal three-phase 4-arm interferometer seeded with two photons.
#[derive(Clone, Debug)]
pub struct FourArmDevice {
    quarter: UnitaryMatrix,
    input: (usize, usize),
    // kernel[photon][r][m] = Q[r][m] Q[m][input_photon]; the device amplitude is
    // U[r][input] = Σ_m kernel[r][m] z_m with z = (1, e^{iθ1}, e^{iθ2}, e^{iθ3}).
    kernel: [[[Complex64; 4]; 4]; 2],
}

impl FourArmDevice {
    /// The device of the experiment: four-coupler quarters, photons in the
    /// last two input modes (`|0011⟩`).
    pub fn ideal() -> Self {
        Self::new(QuarterKind::FourCoupler, (2, 3)).expect("valid input modes")
    }

    pub fn new(kind: QuarterKind, input: (usize, usize)) -> Result<Self> {
        check_modes(input)?;
        let quarter = kind.unitary();
        let mut kernel = [[[Complex64::new(0.0, 0.0); 4]; 4]; 2];
        for (p, &mode) in [input.0, input.1].iter().enumerate() {
            for r in 0..4 {
                for m in 0..4 {
                    kernel[p][r][m] = quarter.entry(r, m) * quarter.entry(m, mode);
                }
            }
        }
        Ok(Self {
            quarter,
            input,
            kernel,
        })
    }

    pub fn quarter(&self) -> &UnitaryMatrix {
        &self.quarter
    }

    pub fn input(&self) -> (usize, usize) {
        self.input
    }

    pub fn unitary(&self, phases: &[f64], controls: &[f64]) -> UnitaryMatrix {
        device_unitary(&self.quarter, phases, controls)
    }

    #[inline]
    fn amplitude(&self, photon: usize, r: usize, z: &[Complex64; 4]) -> Complex64 {
        let k = &self.kernel[photon][r];
        k[0] * z[0] + k[1] * z[1] + k[2] * z[2] + k[3] * z[3]
    }

    #[inline]
    fn event_prob(&self, event: (usize, usize), z: &[Complex64; 4]) -> f64 {
        let (r, s) = event;
        if r == s {
            2.0 * (self.amplitude(0, r, z) * self.amplitude(1, r, z)).norm_sqr()
        } else {
            (self.amplitude(0, r, z) * self.amplitude(1, s, z)
                + self.amplitude(1, r, z) * self.amplitude(0, s, z))
            .norm_sqr()
        }
    }
}

impl LikelihoodModel for FourArmDevice {
    fn dims(&self) -> usize {
        3
    }

    fn outcome_count(&self) -> usize {
        10
    }

    fn outcome_probs(&self, phases: &[f64], controls: &[f64]) -> OutcomeDistribution {
        let z = [
            Complex64::new(1.0, 0.0),
            Complex64::cis(phases[0] + controls[0]),
            Complex64::cis(phases[1] + controls[1]),
            Complex64::cis(phases[2] + controls[2]),
        ];
        let mut probs: Vec<f64> = OutcomeIndexing::EVENTS
            .iter()
            .map(|&e| self.event_prob(e, &z))
            .collect();
        // Absorb the ~1e-16 rounding so the distribution sums to one.
        let total: f64 = probs.iter().sum();
        probs.iter_mut().for_each(|p| *p /= total);
        OutcomeDistribution { probs }
    }

    fn likelihoods(&self, outcome: usize, grid: &ParameterGrid, controls: &[f64], out: &mut [f64]) {
        let event = OutcomeIndexing::event(outcome);
        let axis = grid.axis_values();
        let phasors: Vec<Vec<Complex64>> = (0..3)
            .map(|a| axis.iter().map(|&x| Complex64::cis(x + controls[a])).collect())
            .collect();
        let n = grid.n_per_axis();
        let mut flat = 0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let z = [
                        Complex64::new(1.0, 0.0),
                        phasors[0][i],
                        phasors[1][j],
                        phasors[2][k],
                    ];
                    out[flat] = self.event_prob(event, &z).max(PROBABILITY_FLOOR);
                    flat += 1;
                }
            }
        }
    }
}

/// Two-photon Fock amplitudes after the first quarter and the phase shifts,
/// in [`OutcomeIndexing`] order (bunched amplitudes carry the √2 factor).
fn probe_state(quarter: &UnitaryMatrix, input: (usize, usize), phases: &[f64]) -> Vec<Complex64> {
    let v = phase_diag(phases, &[0.0; 3]) * quarter.0;
    let (a, b) = input;
    OutcomeIndexing::EVENTS
        .iter()
        .map(|&(r, s)| {
            if r == s {
                std::f64::consts::SQRT_2 * v[(r, a)] * v[(r, b)]
            } else {
                v[(r, a)] * v[(s, b)] + v[(r, b)] * v[(s, a)]
            }
        })
        .collect()
}

/// Quantum Fisher information of the probe and the resulting bound.
#[derive(Clone, Debug)]
pub struct QcrbReport {
    /// 3×3 QFI matrix with respect to (φ1, φ2, φ3).
    pub fisher: DMatrix<f64>,
    /// `Tr[F⁻¹]`: the bound on the summed variances is this over `N`.
    pub coefficient: f64,
}

/// Default central-difference step for [`qcrb_bound`].
pub const QFI_STEP: f64 = 1e-6;

/// QFI matrix `F_ij = 4 Re(⟨∂iψ|∂jψ⟩ − ⟨∂iψ|ψ⟩⟨ψ|∂jψ⟩)` of the two-photon probe,
/// with derivatives by central differences of width `step`, and `Tr[F⁻¹]`.
pub fn qcrb_bound(kind: QuarterKind, input: (usize, usize), step: f64) -> Result<QcrbReport> {
    check_modes(input)?;
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::Config(format!("derivative step must be positive and finite, got {step}")));
    }
    let quarter = kind.unitary();
    let origin = [0.0; 3];
    let psi = probe_state(&quarter, input, &origin);
    let derivs: Vec<Vec<Complex64>> = (0..3)
        .map(|i| {
            let mut plus = origin;
            let mut minus = origin;
            plus[i] += step;
            minus[i] -= step;
            let up = probe_state(&quarter, input, &plus);
            let down = probe_state(&quarter, input, &minus);
            up.iter()
                .zip(&down)
                .map(|(u, d)| (u - d) / (2.0 * step))
                .collect()
        })
        .collect();
    let inner = |x: &[Complex64], y: &[Complex64]| -> Complex64 {
        x.iter().zip(y).map(|(a, b)| a.conj() * b).sum()
    };
    let fisher = DMatrix::from_fn(3, 3, |i, j| {
        let term = inner(&derivs[i], &derivs[j]) - inner(&derivs[i], &psi) * inner(&psi, &derivs[j]);
        4.0 * term.re
    });
    if fisher.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("quantum Fisher information matrix".into()));
    }
    let min_eig = fisher
        .clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    if min_eig <= 1e-9 {
        return Err(Error::DegenerateProbe);
    }
    let inverse = fisher.clone().try_inverse().ok_or(Error::DegenerateProbe)?;
    if !inverse.trace().is_finite() {
        return Err(Error::NonFinite("quantum Fisher information bound".into()));
    }
    Ok(QcrbReport {
        coefficient: inverse.trace(),
        fisher,
    })
}

/// Likelihood approximated by relative occurrence frequencies: the
/// calibration baseline against which the learned posterior is compared.
pub fn empirical_model_from_counts(dataset: &GridDataset) -> Result<ProbTable> {
    let d = dataset.outcomes();
    let n = dataset.grid().len();
    let mut values = vec![0.0; d * n];
    for j in 0..n {
        let row = dataset.counts_at(j);
        let total: u64 = row.iter().sum();
        if total == 0 {
            return Err(Error::InsufficientData { point: j });
        }
        for (outcome, &c) in row.iter().enumerate() {
            values[outcome * n + j] = c as f64 / total as f64;
        }
    }
    ProbTable::new(dataset.grid().clone(), d, values)
}
