use crate::error::{Error, Result};
use crate::grid::{ParameterGrid, PriorVector, ProbTable, Restriction};

/// Controls rounded to whole lattice steps.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlSnap {
    pub steps: Vec<i64>,
    /// Largest per-axis distance between a control and its snapped value.
    pub residue: f64,
}

pub fn snap_controls(grid: &ParameterGrid, controls: &[f64]) -> ControlSnap {
    let dphi = grid.spacing();
    let mut residue: f64 = 0.0;
    let steps = controls
        .iter()
        .map(|&c| {
            let k = (c / dphi).round();
            residue = residue.max((c - k * dphi).abs());
            k as i64
        })
        .collect();
    ControlSnap { steps, residue }
}

/// Axis index reached from `k` after `step` lattice moves. Targets inside the
/// lattice are used as they are. On a periodic grid the two endpoints are the
/// same phase, so targets outside wrap modulo `n - 1`; otherwise they return
/// `None`.
pub fn shifted_axis_index(grid: &ParameterGrid, k: usize, step: i64) -> Option<usize> {
    let n = grid.n_per_axis() as i64;
    let target = k as i64 + step;
    if (0..n).contains(&target) {
        Some(target as usize)
    } else if grid.is_periodic() {
        Some(target.rem_euclid(n - 1) as usize)
    } else {
        None
    }
}

fn require_periodic(grid: &ParameterGrid) -> Result<()> {
    if grid.is_periodic() {
        Ok(())
    } else {
        Err(Error::ShiftUnsupported { width: grid.width() })
    }
}

/// Full-grid flat index read by point `flat` under a shift of `steps`.
fn source_index(grid: &ParameterGrid, flat: usize, steps: &[i64]) -> usize {
    let index: Vec<usize> = grid
        .unflatten(flat)
        .into_iter()
        .zip(steps)
        .map(|(k, &s)| shifted_axis_index(grid, k, s).expect("periodic grids always wrap"))
        .collect();
    grid.flatten(&index)
}

/// `out[d][φ] = table[d][φ + c]`, with `c` snapped to the lattice and the
/// period wrapped. Only defined on grids spanning exactly 2π per axis.
pub fn shift_table(table: &ProbTable, controls: &[f64]) -> Result<ProbTable> {
    let grid = table.grid();
    require_periodic(grid)?;
    check_controls(grid, controls)?;
    let snap = snap_controls(grid, controls);
    let n = grid.len();
    let sources: Vec<usize> = (0..n).map(|j| source_index(grid, j, &snap.steps)).collect();
    let mut values = Vec::with_capacity(table.values().len());
    for d in 0..table.outcomes() {
        let row = table.row(d);
        values.extend(sources.iter().map(|&s| row[s]));
    }
    ProbTable::new(grid.clone(), table.outcomes(), values)
}

/// Prior counterpart of [`shift_table`].
pub fn shift_prior(prior: &PriorVector, controls: &[f64]) -> Result<PriorVector> {
    let grid = prior.grid();
    require_periodic(grid)?;
    check_controls(grid, controls)?;
    let snap = snap_controls(grid, controls);
    let w = prior.weights();
    let shifted = (0..grid.len()).map(|j| w[source_index(grid, j, &snap.steps)]).collect();
    PriorVector::from_weights(grid.clone(), shifted)
}

fn check_controls(grid: &ParameterGrid, controls: &[f64]) -> Result<()> {
    if controls.len() != grid.dims() {
        return Err(Error::Shape(format!(
            "{} controls for a {}-dimensional grid",
            controls.len(),
            grid.dims()
        )));
    }
    Ok(())
}

/// Keeps the sub-grid points of `restriction` and renormalises every outcome
/// row to a discrete distribution.
pub fn restrict_renormalize(table: &ProbTable, restriction: &Restriction) -> Result<ProbTable> {
    if table.grid() != restriction.full() {
        return Err(Error::Shape("table is not defined on the restriction's full grid".into()));
    }
    let keep = restriction.full_indices();
    let mut values = Vec::with_capacity(keep.len() * table.outcomes());
    for d in 0..table.outcomes() {
        let row = table.row(d);
        let start = values.len();
        values.extend(keep.iter().map(|&j| row[j]));
        let total: f64 = values[start..].iter().sum();
        if !(total > 0.0) {
            return Err(Error::Domain(format!("outcome {d} has no mass on the restricted grid")));
        }
        values[start..].iter_mut().for_each(|v| *v /= total);
    }
    ProbTable::new(restriction.sub().clone(), table.outcomes(), values)
}

/// Restricts a prior to the sub-grid, renormalised as a density there.
pub fn restrict_prior(prior: &PriorVector, restriction: &Restriction) -> Result<PriorVector> {
    if prior.grid() != restriction.full() {
        return Err(Error::Shape("prior is not defined on the restriction's full grid".into()));
    }
    let w = prior.weights();
    let kept = restriction.full_indices().into_iter().map(|j| w[j]).collect();
    PriorVector::from_weights(restriction.sub().clone(), kept)
        .map_err(|_| Error::Domain("prior has no mass on the restricted grid".into()))
}
