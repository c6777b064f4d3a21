//! Permutation-equivariant graph variational autoencoder.

pub mod elbo;
pub mod model;
pub mod synthetic;
pub mod train;

pub use elbo::{draw_noise, kl_divergence, reparam_sample, ElboTerms};
pub use model::{Logits, Posterior, Stage, VaeParams, VaeShape, PARAMS_FORMAT};
pub use synthetic::{generate_synthetic, Motif, PropertyModel, SyntheticSpec};
pub use train::{train, train_from, EpochStats, TrainConfig, TrainOutcome};
