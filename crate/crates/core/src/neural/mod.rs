//! Posterior classifier trained on calibration grids, and recovery of the
//! prior implied by its outputs.

mod layers;
mod network;
mod prior;
mod train;

pub use layers::{sigmoid, softmax_in_place, Activation, Mlp, WeightDocument, WEIGHTS_FORMAT, WEIGHTS_VERSION};

pub use network::{posterior_table, PosteriorNetwork, ShotGroup};
pub use prior::{prior_residual, solve_prior, PriorSolution, PRIOR_MAX_ITERATIONS, PRIOR_TOLERANCE};
pub use train::{train_posterior_network, Adam, TrainConfig, TrainReport};
