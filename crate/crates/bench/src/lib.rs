//! Shared fixtures for the benchmarks.

use std::f64::consts::PI;
use std::sync::Arc;

use qmetro_core::dataset::{outcome_frequencies, sample_grid_dataset, GridDataset};
use qmetro_core::estimator::{Provider, TableProvider};
use qmetro_core::grid::ParameterGrid;
use qmetro_core::models::{FourArmDevice, LikelihoodModel};
use qmetro_core::neural::{posterior_table, solve_prior, PosteriorNetwork};
use qmetro_core::rng;

pub fn fourarm() -> Arc<dyn LikelihoodModel> {
    Arc::new(FourArmDevice::ideal())
}

/// Exact provider over `n³` particles on `[0, π]³`.
pub fn exact_fourarm(n: usize) -> Provider {
    Provider::exact(fourarm(), ParameterGrid::new(0.0, PI, n, 3).unwrap()).unwrap()
}

/// Simulated 4-arm calibration data on `[−π, π]³`.
pub fn fourarm_dataset(n: usize, r: u64) -> GridDataset {
    let grid = ParameterGrid::new(-PI, PI, n, 3).unwrap();
    sample_grid_dataset(&FourArmDevice::ideal(), &grid, r, 1).unwrap()
}

/// Neural-mode provider from an untrained network, restricted to `[0, π]³`.
/// Timing does not depend on the weights.
pub fn neural_fourarm(data: &GridDataset) -> Provider {
    let grid = data.grid();
    let net = PosteriorNetwork::new(&PosteriorNetwork::DEFAULT_HIDDEN, grid.len(), 10, &mut rng::stream(2, &[])).unwrap();
    let post = posterior_table(&net, grid, 10).unwrap();
    let prior = solve_prior(&post, &outcome_frequencies(data)).unwrap();
    Provider::Table(TableProvider::neural(post, &prior.prior, grid.restrict_to_half_period().unwrap()).unwrap())
}
