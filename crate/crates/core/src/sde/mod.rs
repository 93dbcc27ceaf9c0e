//! Latent SDE: a fixed prior drift `-z`, a learned posterior drift MLP over
//! `[PE(t) | z]`, constant diagonal diffusion, affine encoder and decoder.
//! Trained by maximizing the ELBO with gradients backpropagated through the
//! unrolled Euler–Maruyama solver.

mod config;
mod elbo;
mod model;
mod solver;
mod train;

pub use config::{SdeConfig, TrainConfig};
pub use elbo::{elbo, elbo_with_drift, ElboGraph, ElboParts};
pub use model::{LatentSdeModel, ModelVars};
pub use solver::{sample_posterior, simulate, NoiseSpec, StepSchedule, TrajectoryBundle};
pub use train::{train, train_with_callback, TrainOutcome};
