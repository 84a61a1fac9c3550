//! MMD training of IQP circuits: targets, spectral estimators and SGD.

pub mod estimate;
pub mod sgd;
pub mod target;

pub use estimate::{mmd_gradient_estimate, mmd_loss_estimate, CharSource, GradientEstimate};
pub use sgd::{theta_hash, train, train_setup, StepRecord, TrainConfig, TrainSetup, TrainTrace};
pub use target::{
    dirichlet_sigma2, dirichlet_target, parse_dataset, planted_target, target_char, PlantedTerm, Target, TargetSpec,
};
