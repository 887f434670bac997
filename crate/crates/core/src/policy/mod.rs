//! Control policies trained with the cross-entropy method.

mod cem;
mod env;
mod network;

pub use cem::{
    cem_sample, cem_train, elite_statistics, select_elite, CemConfig, CemIteration, CemReport, CemState,
    SIGMA_CONVERGED, SIGMA_FLOOR,
};
pub use env::{evaluate_bayes_risk, reward, run_episode, EpisodeOutcome, Environment, EstimationEnv};
pub use network::{policy_forward, PolicyNetwork, POLICY_HIDDEN};
