//! Federated gradient descent over the simulated uplink, on a synthetic
//! ridge-regression task, plus the closed-form convergence bound.

mod bound;
mod task;
mod train;

pub use bound::{convergence_bound, BoundInputs};
pub use task::{Dataset, SyntheticTask, TaskSpec};
pub use train::{
    train_centralized, train_over_air, train_with_link, LearningRate, TrainOptions, TrainState,
    DIVERGENCE_FACTOR,
};
