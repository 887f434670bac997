use std::sync::Arc;

use super::particles::ParticleSet;
use super::shift::{shifted_axis_index, snap_controls};
use crate::error::{Error, Result};
use crate::grid::{ParameterGrid, PriorVector, ProbTable, Restriction};
use crate::models::{LikelihoodModel, PROBABILITY_FLOOR};

/// Exact likelihood evaluated at the particle positions, with continuous controls.
#[derive(Clone)]
pub struct ExactProvider {
    model: Arc<dyn LikelihoodModel>,
    grid: ParameterGrid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TableKind {
    /// Learned posterior divided by the recovered prior.
    Neural,
    /// Empirical outcome frequencies used as a likelihood.
    Frequency,
}

/// Update factors looked up in a table over a full grid; particles live on a
/// sub-grid of it. Controls move the lookup by whole lattice steps.
#[derive(Clone, Debug)]
pub struct TableProvider {
    kind: TableKind,
    table: ProbTable,
    /// Prior mass per full-grid point (density times cell volume).
    prior_mass: Option<Vec<f64>>,
    restriction: Restriction,
    /// Full-grid axis indices of every particle, `particles × dims`.
    particle_axes: Vec<usize>,
}

#[derive(Clone)]
pub enum Provider {
    Exact(ExactProvider),
    Table(TableProvider),
}

impl ExactProvider {
    pub fn new(model: Arc<dyn LikelihoodModel>, grid: ParameterGrid) -> Result<Self> {
        if model.dims() != grid.dims() {
            return Err(Error::Shape(format!(
                "model has {} phases, grid has {} axes",
                model.dims(),
                grid.dims()
            )));
        }
        Ok(Self { model, grid })
    }

    pub fn model(&self) -> &Arc<dyn LikelihoodModel> {
        &self.model
    }
}

impl TableProvider {
    /// `w_i ← w_i · P_NN(φ_i + c | d) / p(φ_i + c)`.
    pub fn neural(posterior: ProbTable, prior: &PriorVector, restriction: Restriction) -> Result<Self> {
        if prior.grid() != posterior.grid() {
            return Err(Error::Shape("posterior and prior live on different grids".into()));
        }
        let vol = prior.grid().cell_volume();
        let mass = prior.weights().iter().map(|w| w * vol).collect();
        Self::build(TableKind::Neural, posterior, Some(mass), restriction)
    }

    /// `w_i ← w_i · f(d | φ_i + c)`.
    pub fn frequency(freqs: ProbTable, restriction: Restriction) -> Result<Self> {
        Self::build(TableKind::Frequency, freqs, None, restriction)
    }

    fn build(
        kind: TableKind,
        table: ProbTable,
        prior_mass: Option<Vec<f64>>,
        restriction: Restriction,
    ) -> Result<Self> {
        if table.grid() != restriction.full() {
            return Err(Error::Shape("table is not defined on the restriction's full grid".into()));
        }
        let sub = restriction.sub();
        let mut particle_axes = Vec::with_capacity(sub.len() * sub.dims());
        for j in 0..sub.len() {
            particle_axes.extend(sub.unflatten(j).into_iter().map(|k| k + restriction.first()));
        }
        Ok(Self {
            kind,
            table,
            prior_mass,
            restriction,
            particle_axes,
        })
    }

    pub fn kind(&self) -> TableKind {
        self.kind
    }

    pub fn table(&self) -> &ProbTable {
        &self.table
    }

    pub fn restriction(&self) -> &Restriction {
        &self.restriction
    }

    /// Multiplicative factor for each particle; lookups that leave a
    /// non-periodic grid get the probability floor.
    fn factors(&self, outcome: usize, steps: &[i64], out: &mut [f64]) {
        let full = self.table.grid();
        let dims = full.dims();
        let n = full.n_per_axis();
        // Shifted index per axis and source coordinate, or usize::MAX when off-grid.
        let maps: Vec<Vec<usize>> = steps
            .iter()
            .map(|&s| {
                (0..n)
                    .map(|k| shifted_axis_index(full, k, s).unwrap_or(usize::MAX))
                    .collect()
            })
            .collect();
        let row = self.table.row(outcome);
        for (f, axes) in out.iter_mut().zip(self.particle_axes.chunks_exact(dims)) {
            let mut flat = 0usize;
            let mut inside = true;
            for (a, &k) in axes.iter().enumerate() {
                let m = maps[a][k];
                if m == usize::MAX {
                    inside = false;
                    break;
                }
                flat = flat * n + m;
            }
            *f = if !inside {
                PROBABILITY_FLOOR
            } else {
                match &self.prior_mass {
                    Some(mass) => row[flat].max(PROBABILITY_FLOOR) / mass[flat].max(PROBABILITY_FLOOR),
                    None => row[flat].max(PROBABILITY_FLOOR),
                }
            };
        }
    }
}

impl Provider {
    pub fn exact(model: Arc<dyn LikelihoodModel>, grid: ParameterGrid) -> Result<Self> {
        Ok(Provider::Exact(ExactProvider::new(model, grid)?))
    }

    /// Grid the particles live on.
    pub fn particle_grid(&self) -> &ParameterGrid {
        match self {
            Provider::Exact(p) => &p.grid,
            Provider::Table(t) => t.restriction.sub(),
        }
    }

    pub fn dims(&self) -> usize {
        self.particle_grid().dims()
    }

    pub fn outcome_count(&self) -> usize {
        match self {
            Provider::Exact(p) => p.model.outcome_count(),
            Provider::Table(t) => t.table.outcomes(),
        }
    }

    pub fn initial_particles(&self) -> ParticleSet {
        ParticleSet::uniform(self.particle_grid())
    }

    /// Shift applied to the lookups under `controls`: zero for the exact
    /// likelihood, the lattice snap residue for tables.
    pub fn snap_residue(&self, controls: &[f64]) -> f64 {
        match self {
            Provider::Exact(_) => 0.0,
            Provider::Table(t) => snap_controls(t.table.grid(), controls).residue,
        }
    }
}

/// One Bayesian update of `particles` after observing `outcome` with `controls`.
/// Returns the control snap residue (zero in exact mode).
pub fn bayes_update(
    particles: &mut ParticleSet,
    outcome: usize,
    controls: &[f64],
    provider: &Provider,
) -> Result<f64> {
    if particles.grid() != provider.particle_grid() {
        return Err(Error::Shape("particles do not live on the provider's grid".into()));
    }
    if outcome >= provider.outcome_count() {
        return Err(Error::InvalidOutcome {
            outcome,
            outcomes: provider.outcome_count(),
        });
    }
    if controls.len() != provider.dims() {
        return Err(Error::Shape(format!(
            "{} controls for {} phases",
            controls.len(),
            provider.dims()
        )));
    }
    let mut factors = vec![0.0; particles.len()];
    let residue = match provider {
        Provider::Exact(p) => {
            p.model.likelihoods(outcome, &p.grid, controls, &mut factors);
            0.0
        }
        Provider::Table(t) => {
            let snap = snap_controls(t.table.grid(), controls);
            t.factors(outcome, &snap.steps, &mut factors);
            snap.residue
        }
    };
    particles.reweight(&factors, outcome)?;
    Ok(residue)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::MachZehnder;
    use std::f64::consts::PI;

    #[test]
    fn three_particle_mz_update() {
        let grid = ParameterGrid::new(0.0, PI, 3, 1).unwrap();
        let provider = Provider::exact(Arc::new(MachZehnder), grid.clone()).unwrap();
        let mut p = ParticleSet::uniform(&grid);
        bayes_update(&mut p, 0, &[0.0], &provider).unwrap();
        let w = p.weights();
        assert!((w[0] - 2.0 / 3.0).abs() < 1e-11);
        assert!((w[1] - 1.0 / 3.0).abs() < 1e-11);
        assert!(w[2] < 1e-11);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn positions_never_move() {
        let grid = ParameterGrid::new(0.0, PI, 17, 1).unwrap();
        let provider = Provider::exact(Arc::new(MachZehnder), grid.clone()).unwrap();
        let mut p = ParticleSet::uniform(&grid);
        let before = p.positions().to_vec();
        for d in [0, 1, 1, 0, 1] {
            bayes_update(&mut p, d, &[0.4], &provider).unwrap();
        }
        assert_eq!(p.positions(), before.as_slice());
    }

    #[test]
    fn invalid_outcome_is_rejected() {
        let grid = ParameterGrid::new(0.0, PI, 4, 1).unwrap();
        let provider = Provider::exact(Arc::new(MachZehnder), grid.clone()).unwrap();
        let mut p = ParticleSet::uniform(&grid);
        assert!(matches!(
            bayes_update(&mut p, 2, &[0.0], &provider),
            Err(Error::InvalidOutcome { outcome: 2, .. })
        ));
    }

    #[test]
    fn frequency_table_restricted_lookups() {
        let grid = ParameterGrid::new(-PI, PI, 9, 1).unwrap();
        let restriction = grid.restrict_to_half_period().unwrap();
        let values: Vec<f64> = (0..18)
            .map(|i| {
                let x = (i % 9) as f64 / 8.0;
                if i < 9 {
                    x
                } else {
                    1.0 - x
                }
            })
            .collect();
        let table = ProbTable::new(grid.clone(), 2, values).unwrap();
        let provider = Provider::Table(TableProvider::frequency(table.clone(), restriction.clone()).unwrap());
        let mut p = provider.initial_particles();
        assert_eq!(p.len(), 5);
        let dphi = grid.spacing();
        bayes_update(&mut p, 0, &[dphi], &provider).unwrap();
        // Particle k sits at full index 4 + k and reads index 5 + k; index 9
        // lies past the endpoint and wraps to 1.
        let expected: Vec<f64> = [5, 6, 7, 8, 1]
            .iter()
            .map(|&j| table.value(0, j).max(PROBABILITY_FLOOR))
            .collect();
        let total: f64 = expected.iter().sum();
        for (w, e) in p.weights().iter().zip(&expected) {
            assert!((w - e / total).abs() < 1e-14);
        }
    }
}
