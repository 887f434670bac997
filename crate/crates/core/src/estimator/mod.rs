//! Fixed-grid sequential Monte Carlo estimation with feedback controls.

mod particles;
mod provider;
mod run;
mod shift;

pub use particles::{qloss, ParticleSet};
pub use provider::{bayes_update, ExactProvider, Provider, TableKind, TableProvider};
pub use run::{
    run_estimation, EstimationTrace, FeedbackStrategy, Observation, OutcomeSource, ProbeRecord, RandomFeedback,
    TruthWindowFeedback, ZeroFeedback,
};
pub use shift::{
    restrict_prior, restrict_renormalize, shift_prior, shift_table, shifted_axis_index, snap_controls, ControlSnap,
};
