use serde::{Deserialize, Serialize};

use crate::error::input_err;
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SdeConfig {
    /// Observation dimension after augmentation.
    pub obs_dim: usize,
    /// Latent dimension; `0` means "same as `obs_dim`".
    pub latent_dim: usize,
    /// Width of both hidden layers of the drift network.
    pub hidden: usize,
    pub n_pos_encodings: usize,
    pub diffusion_const: f64,
    /// Observation noise variance `c` in `C = c I`.
    pub obs_variance_c: f64,
    /// Model time between consecutive observations. With unit diffusion a
    /// step of 1 lets the posterior chase every noisy sample; 0.01 keeps
    /// the latent path smooth enough for the lag score to localise changes.
    pub dt: f64,
    /// Solver steps per observation interval.
    pub substeps: usize,
}

impl Default for SdeConfig {
    fn default() -> Self {
        Self {
            obs_dim: 1,
            latent_dim: 0,
            hidden: 200,
            n_pos_encodings: 8,
            diffusion_const: 1.0,
            obs_variance_c: 0.1,
            dt: 0.01,
            substeps: 1,
        }
    }
}

impl SdeConfig {
    pub fn for_obs_dim(obs_dim: usize) -> Self {
        Self {
            obs_dim,
            ..Self::default()
        }
    }

    /// Latent dimension with the `0 = obs_dim` default resolved.
    pub fn latent(&self) -> usize {
        if self.latent_dim == 0 {
            self.obs_dim
        } else {
            self.latent_dim
        }
    }

    /// Solver step size.
    pub fn step(&self) -> f64 {
        self.dt / self.substeps as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.obs_dim == 0 || self.hidden == 0 || self.substeps == 0 {
            return Err(input_err!("obs_dim, hidden and substeps must be at least 1"));
        }
        if self.n_pos_encodings < 2 || self.n_pos_encodings % 2 != 0 {
            return Err(input_err!("n_pos_encodings must be even and at least 2"));
        }
        for (name, v) in [
            ("diffusion_const", self.diffusion_const),
            ("obs_variance_c", self.obs_variance_c),
            ("dt", self.dt),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(input_err!("{name} must be positive, got {v}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Posterior trajectories simulated per ELBO estimate.
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
    /// Rescale the full gradient to at most this Euclidean norm.
    pub grad_clip: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch: 32,
            lr: 1e-2,
            seed: 0,
            grad_clip: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 {
            return Err(input_err!("batch must be at least 1"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(input_err!("lr must be positive, got {}", self.lr));
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0 && c.is_finite()) {
                return Err(input_err!("grad_clip must be positive, got {c}"));
            }
        }
        Ok(())
    }
}
