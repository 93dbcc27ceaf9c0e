use alloc::format;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{LatentSdeModel, SdeConfig};
use crate::autodiff::Array;
use crate::error::input_err;
use crate::rng::{self, tags};
use crate::{Error, Result, TimeSeries};

/// Path `i` of a simulation draws its Gaussian increments from stream
/// `path_offset + i` of the generator seeded with `seed`, step after step,
/// so the noise of a path is a function of (seed, path index, step) only.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoiseSpec {
    pub seed: u64,
    pub path_offset: u64,
}

impl NoiseSpec {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            path_offset: 0,
        }
    }
}

pub(crate) struct NoiseStreams {
    rngs: Vec<ChaCha8Rng>,
    dim: usize,
}

impl NoiseStreams {
    pub(crate) fn new(spec: NoiseSpec, n_paths: usize, dim: usize) -> Self {
        let rngs = (0..n_paths as u64)
            .map(|i| rng::substream(spec.seed, spec.path_offset + i))
            .collect();
        Self { rngs, dim }
    }

    /// One `n_paths x dim` block of standard normals.
    pub(crate) fn draw(&mut self) -> Array {
        let mut data = Vec::with_capacity(self.rngs.len() * self.dim);
        for r in &mut self.rngs {
            for _ in 0..self.dim {
                data.push(StandardNormal.sample(r));
            }
        }
        Array::from_vec(self.rngs.len(), self.dim, data).expect("noise block shape")
    }
}

/// Time discretization and diffusion of the Euler–Maruyama scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSchedule {
    /// Model time between observations.
    pub dt: f64,
    pub substeps: usize,
    /// Constant diagonal diffusion `σ`.
    pub sigma: f64,
}

impl StepSchedule {
    pub fn from_config(cfg: &SdeConfig) -> Self {
        Self {
            dt: cfg.dt,
            substeps: cfg.substeps,
            sigma: cfg.diffusion_const,
        }
    }

    pub fn step(&self) -> f64 {
        self.dt / self.substeps as f64
    }
}

/// Simulates `z_{k+1} = z_k + μ(z_k, t_k) h + σ sqrt(h) ξ_k` for `n_paths`
/// paths started at `z0`, returning the state at each of the `n_obs`
/// observation indices. `drift` receives the `n_paths x d` state and the
/// index time. With a constant diffusion the Itô and Stratonovich solutions
/// coincide, so this is also the Stratonovich scheme.
pub fn simulate(
    z0: &[f64],
    n_paths: usize,
    n_obs: usize,
    schedule: StepSchedule,
    noise: NoiseSpec,
    mut drift: impl FnMut(&Array, f64) -> Result<Array>,
) -> Result<Vec<Array>> {
    if n_paths == 0 || n_obs == 0 {
        return Err(input_err!("need at least one path and one observation"));
    }
    let dim = z0.len();
    let h = schedule.step();
    let noise_scale = schedule.sigma * libm::sqrt(h);
    let mut streams = NoiseStreams::new(noise, n_paths, dim);
    let mut z = Array::from_vec(n_paths, dim, z0.repeat(n_paths))?;
    let mut out = Vec::with_capacity(n_obs);
    out.push(z.clone());
    for i in 0..n_obs - 1 {
        for k in 0..schedule.substeps {
            let t = i as f64 + k as f64 / schedule.substeps as f64;
            let mu = drift(&z, t)?;
            if mu.shape() != z.shape() {
                return Err(Error::Shape {
                    op: "drift",
                    lhs: mu.shape(),
                    rhs: z.shape(),
                });
            }
            let xi = streams.draw();
            for ((zv, m), e) in z.data_mut().iter_mut().zip(mu.data()).zip(xi.data()) {
                *zv += m * h + noise_scale * e;
            }
            if !z.all_finite() {
                return Err(Error::Numerical {
                    stage: "solver step",
                    index: i * schedule.substeps + k,
                    detail: format!("non-finite latent state at index time {t}"),
                });
            }
        }
        out.push(z.clone());
    }
    Ok(out)
}

/// Sampled latent paths and their decoded observation-space means.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryBundle {
    latent_paths: Vec<Array>,
    decoded_means: Vec<Array>,
    seed: u64,
}

impl TrajectoryBundle {
    /// `latent_paths[t]` is `N x d`, `decoded_means[t]` is `N x D`.
    pub fn new(latent_paths: Vec<Array>, decoded_means: Vec<Array>, seed: u64) -> Result<Self> {
        let Some(first) = decoded_means.first() else {
            return Err(input_err!("trajectory bundle needs at least one time step"));
        };
        let (n, d) = first.shape();
        if n == 0 {
            return Err(input_err!("trajectory bundle needs at least one path"));
        }
        if latent_paths.len() != decoded_means.len() {
            return Err(input_err!(
                "{} latent steps but {} decoded steps",
                latent_paths.len(),
                decoded_means.len()
            ));
        }
        if decoded_means.iter().any(|a| a.shape() != (n, d))
            || latent_paths.iter().any(|a| a.rows() != n || a.cols() != latent_paths[0].cols())
        {
            return Err(input_err!("inconsistent trajectory shapes"));
        }
        Ok(Self {
            latent_paths,
            decoded_means,
            seed,
        })
    }

    /// A bundle whose samples already live in observation space.
    pub fn from_decoded(decoded_means: Vec<Array>, seed: u64) -> Result<Self> {
        Self::new(decoded_means.clone(), decoded_means, seed)
    }

    pub fn n_paths(&self) -> usize {
        self.decoded_means[0].rows()
    }

    pub fn len(&self) -> usize {
        self.decoded_means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.decoded_means.is_empty()
    }

    pub fn obs_dim(&self) -> usize {
        self.decoded_means[0].cols()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// `N x d` latent states at time `t`.
    pub fn latent(&self, t: usize) -> &Array {
        &self.latent_paths[t]
    }

    /// `N x D` decoded means at time `t`.
    pub fn decoded(&self, t: usize) -> &Array {
        &self.decoded_means[t]
    }

    /// Mean over paths of the decoded state at every time (`T x D`).
    pub fn mean_decoded(&self) -> Vec<Vec<f64>> {
        self.decoded_means
            .iter()
            .map(|a| {
                let sums = a.column_sums();
                sums.data().iter().map(|s| s / a.rows() as f64).collect()
            })
            .collect()
    }
}

/// Draws `n` posterior paths started at `ψ(x_0)` and decodes them.
pub fn sample_posterior(
    model: &LatentSdeModel,
    series: &TimeSeries,
    n: usize,
    seed: u64,
) -> Result<TrajectoryBundle> {
    if series.dim() != model.config.obs_dim {
        return Err(input_err!(
            "series has {} channels, model expects {}",
            series.dim(),
            model.config.obs_dim
        ));
    }
    let z0 = model.encode(series.row(0))?;
    let noise = NoiseSpec::new(rng::derive_seed(seed, tags::SAMPLE));
    let latent = simulate(
        &z0,
        n,
        series.len(),
        StepSchedule::from_config(&model.config),
        noise,
        |z, t| model.drift_at(z, t),
    )?;
    let decoded = latent
        .iter()
        .map(|z| model.decode(z))
        .collect::<Result<Vec<_>>>()?;
    TrajectoryBundle::new(latent, decoded, seed)
}
