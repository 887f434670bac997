//! Calibration-free adaptive phase estimation on a fixed parameter grid.
//!
//! The crate covers the whole pipeline: simulated interferometers
//! ([`models`]), calibration grids ([`dataset`]), a posterior classifier and
//! prior recovery ([`neural`]), fixed-grid Bayesian updating with feedback
//! ([`estimator`]), control policies trained with the cross-entropy method
//! ([`policy`]) and aggregated Qloss curves ([`experiment`]).

pub mod dataset;
pub mod error;
pub mod estimator;
pub mod experiment;
pub mod grid;
pub mod models;
pub mod neural;
pub mod policy;
pub mod rng;

pub use dataset::{build_grid, outcome_frequencies, sample_grid_dataset, GridDataset};
pub use error::{Error, Result};
pub use estimator::{bayes_update, run_estimation, OutcomeSource, ParticleSet, Provider};
pub use experiment::{qloss_curve, Aggregation, CurveSpec, QlossCurve};
pub use grid::{ParameterGrid, PriorVector, ProbTable, Restriction};
pub use models::{FourArmDevice, LikelihoodModel, MachZehnder, QuarterKind};
pub use neural::{PosteriorNetwork, TrainConfig};
pub use policy::{CemConfig, CemState, EstimationEnv, PolicyNetwork};
