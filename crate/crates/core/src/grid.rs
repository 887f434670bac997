//! Discretised parameter space and the tables defined over it.
//!
//! A [`ParameterGrid`] is an isotropic lattice over `[lo, hi]^D` with both
//! endpoints included, so the spacing is `(hi - lo) / (n - 1)`. Points are
//! flattened row-major with axis 0 most significant.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used when deciding whether a grid spans exactly one period or
/// whether a lattice coordinate lies inside a sub-interval.
const LATTICE_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterGrid {
    lo: f64,
    hi: f64,
    n_per_axis: usize,
    dims: usize,
}

impl ParameterGrid {
    pub fn new(lo: f64, hi: f64, n_per_axis: usize, dims: usize) -> Result<Self> {
        if n_per_axis < 2 {
            return Err(Error::DegenerateGrid(format!(
                "need at least 2 points per axis, got {n_per_axis}"
            )));
        }
        if !(lo.is_finite() && hi.is_finite()) || hi <= lo {
            return Err(Error::DegenerateGrid(format!(
                "interval [{lo}, {hi}] is empty or not finite"
            )));
        }
        if !(dims == 1 || dims == 3) {
            return Err(Error::DegenerateGrid(format!(
                "dimensionality must be 1 or 3, got {dims}"
            )));
        }
        Ok(Self {
            lo,
            hi,
            n_per_axis,
            dims,
        })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn n_per_axis(&self) -> usize {
        self.n_per_axis
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn spacing(&self) -> f64 {
        self.width() / (self.n_per_axis - 1) as f64
    }

    /// Volume element `δφ^D` of one lattice cell.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dims as i32)
    }

    /// Total number of lattice points, `N_φ^D`.
    pub fn len(&self) -> usize {
        self.n_per_axis.pow(self.dims as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// True when the interval spans exactly one 2π period, so that the two
    /// endpoints describe the same physical phase.
    pub fn is_periodic(&self) -> bool {
        (self.width() - TAU).abs() <= LATTICE_TOL
    }

    /// Coordinate of lattice index `k` along any axis.
    pub fn axis_value(&self, k: usize) -> f64 {
        if k + 1 == self.n_per_axis {
            self.hi
        } else {
            self.lo + k as f64 * self.spacing()
        }
    }

    pub fn axis_values(&self) -> Vec<f64> {
        (0..self.n_per_axis).map(|k| self.axis_value(k)).collect()
    }

    pub fn flatten(&self, index: &[usize]) -> usize {
        debug_assert_eq!(index.len(), self.dims);
        index
            .iter()
            .fold(0, |acc, &k| acc * self.n_per_axis + k)
    }

    pub fn unflatten(&self, mut flat: usize) -> Vec<usize> {
        let mut index = vec![0; self.dims];
        for slot in index.iter_mut().rev() {
            *slot = flat % self.n_per_axis;
            flat /= self.n_per_axis;
        }
        index
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        self.unflatten(flat)
            .into_iter()
            .map(|k| self.axis_value(k))
            .collect()
    }

    /// All lattice points, flattened as `len() × dims`.
    pub fn positions(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len() * self.dims);
        for flat in 0..self.len() {
            out.extend(self.point(flat));
        }
        out
    }

    /// Nearest axis index to `x`, clamped into the lattice.
    pub fn nearest_axis_index(&self, x: f64) -> usize {
        let k = ((x - self.lo) / self.spacing()).round();
        k.clamp(0.0, (self.n_per_axis - 1) as f64) as usize
    }

    /// Wraps `x` into `[lo, lo + 2π)`.
    pub fn wrap_phase(&self, x: f64) -> f64 {
        self.lo + (x - self.lo).rem_euclid(TAU)
    }

    /// Flat index of the lattice point nearest to `phases`. On a periodic grid
    /// the phases are first wrapped into the period; otherwise they are clamped.
    pub fn nearest_point(&self, phases: &[f64]) -> usize {
        let index: Vec<usize> = phases
            .iter()
            .map(|&x| {
                let x = if self.is_periodic() { self.wrap_phase(x) } else { x };
                self.nearest_axis_index(x)
            })
            .collect();
        self.flatten(&index)
    }

    /// The sub-lattice of points whose every coordinate lies in `[lo, hi]`.
    pub fn restrict(&self, lo: f64, hi: f64) -> Result<Restriction> {
        let inside: Vec<usize> = (0..self.n_per_axis)
            .filter(|&k| {
                let x = self.axis_value(k);
                x >= lo - LATTICE_TOL && x <= hi + LATTICE_TOL
            })
            .collect();
        if inside.len() < 2 {
            return Err(Error::Domain(format!(
                "restriction to [{lo}, {hi}] keeps {} lattice point(s) per axis",
                inside.len()
            )));
        }
        let first = inside[0];
        let count = inside.len();
        let sub = ParameterGrid::new(
            self.axis_value(first),
            self.axis_value(first + count - 1),
            count,
            self.dims,
        )?;
        Ok(Restriction {
            full: self.clone(),
            sub,
            first,
        })
    }

    /// Restriction onto `[0, π]^D`, the estimation domain of the adaptive protocol.
    pub fn restrict_to_half_period(&self) -> Result<Restriction> {
        self.restrict(0.0, PI)
    }

    /// The identity restriction, for providers whose particles cover the whole grid.
    pub fn full_restriction(&self) -> Restriction {
        Restriction {
            full: self.clone(),
            sub: self.clone(),
            first: 0,
        }
    }
}

/// A contiguous sub-lattice of a larger grid sharing its spacing.
#[derive(Clone, Debug, PartialEq)]
pub struct Restriction {
    full: ParameterGrid,
    sub: ParameterGrid,
    first: usize,
}

impl Restriction {
    pub fn full(&self) -> &ParameterGrid {
        &self.full
    }

    pub fn sub(&self) -> &ParameterGrid {
        &self.sub
    }

    /// Axis offset of the sub-lattice inside the full lattice.
    pub fn first(&self) -> usize {
        self.first
    }

    pub fn is_identity(&self) -> bool {
        self.first == 0 && self.sub.n_per_axis == self.full.n_per_axis
    }

    /// Full-grid flat index of each sub-grid point.
    pub fn full_indices(&self) -> Vec<usize> {
        (0..self.sub.len())
            .map(|flat| {
                let index: Vec<usize> = self
                    .sub
                    .unflatten(flat)
                    .into_iter()
                    .map(|k| k + self.first)
                    .collect();
                self.full.flatten(&index)
            })
            .collect()
    }
}

/// Probability values indexed by `(outcome, grid point)`, stored row-major
/// by outcome. Holds likelihood tables, occurrence frequencies and learned
/// single-shot posteriors alike.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbTable {
    grid: ParameterGrid,
    outcomes: usize,
    values: Vec<f64>,
}

impl ProbTable {
    pub fn new(grid: ParameterGrid, outcomes: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != outcomes * grid.len() {
            return Err(Error::Shape(format!(
                "table of {} values cannot hold {outcomes} outcomes × {} points",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self {
            grid,
            outcomes,
            values,
        })
    }

    pub fn grid(&self) -> &ParameterGrid {
        &self.grid
    }

    pub fn outcomes(&self) -> usize {
        self.outcomes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, outcome: usize, point: usize) -> f64 {
        self.values[outcome * self.grid.len() + point]
    }

    pub fn row(&self, outcome: usize) -> &[f64] {
        let n = self.grid.len();
        &self.values[outcome * n..(outcome + 1) * n]
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Shape(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let table: ProbTable = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        ProbTable::new(table.grid, table.outcomes, table.values)
    }
}

/// Prior density over grid points, normalised so that `Σ_j p_j δφ^D = 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorVector {
    grid: ParameterGrid,
    weights: Vec<f64>,
}

impl PriorVector {
    /// Normalises arbitrary nonnegative weights into a prior density.
    pub fn from_weights(grid: ParameterGrid, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != grid.len() {
            return Err(Error::Shape(format!(
                "prior of length {} on a grid of {} points",
                weights.len(),
                grid.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidPrior("weights must be finite and nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidPrior("all prior weights are zero".into()));
        }
        let scale = 1.0 / (total * grid.cell_volume());
        let weights = weights.into_iter().map(|w| w * scale).collect();
        Ok(Self { grid, weights })
    }

    pub fn uniform(grid: ParameterGrid) -> Self {
        let n = grid.len();
        Self::from_weights(grid, vec![1.0; n]).expect("uniform prior is valid")
    }

    pub fn grid(&self) -> &ParameterGrid {
        &self.grid
    }

    /// Density values `p(φ_j)`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Discrete probabilities `p(φ_j) δφ^D`, summing to one.
    pub fn probabilities(&self) -> Vec<f64> {
        let vol = self.grid.cell_volume();
        self.weights.iter().map(|w| w * vol).collect()
    }
}
