//! Change point detection with latent neural stochastic differential equations.
//!
//! The crate is `no_std` (it needs `alloc`) and contains everything that is
//! pure computation:
//!
//! * [`timeseries`]: series, labels, scores and detections.
//! * [`preprocess`]: standard scaling, ARIMA(p, d, 0) residual features and
//!   sinusoidal positional encodings.
//! * [`autodiff`]: a small reverse-mode tape over dense `f64` arrays, the
//!   drift MLP and Adam.
//! * [`sde`]: the latent SDE model, its Euler–Maruyama solver, the ELBO and
//!   the training loop.
//! * [`scoring`]: the lag-window Monte-Carlo likelihood-ratio score and peak
//!   extraction.
//! * [`oracle`]: closed-form scores for Gaussian latent processes.
//! * [`synth`]: seeded synthetic benchmark generators.
//! * [`metrics`]: F1, Covering, NAB and RCPD plus best-threshold evaluation.
//!
//! File formats, the CLI and the corpus runner live in the `cpd-sde` crate.
#![no_std]
#![deny(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod autodiff;
mod error;
pub mod metrics;
pub mod oracle;
pub mod preprocess;
pub mod rng;
pub mod scoring;
pub mod sde;
pub mod synth;
pub mod timeseries;

pub use error::{Error, Result};
pub use timeseries::{ChangePointLabels, Detections, ScoreSeries, TimeSeries};
