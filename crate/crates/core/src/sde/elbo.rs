use alloc::format;
use alloc::vec::Vec;

use super::solver::NoiseStreams;
use super::{LatentSdeModel, ModelVars, NoiseSpec, SdeConfig};
use crate::autodiff::{Array, LinearVars, Tape, Var};
use crate::error::input_err;
use crate::preprocess::positional_encoding;
use crate::{Error, Result, TimeSeries};

/// Handles to the ELBO estimate on a tape, plus the values of its two terms
/// (both averaged over paths).
#[derive(Debug, Clone, Copy)]
pub struct ElboParts {
    pub elbo: Var,
    pub reconstruction: f64,
    pub kl: f64,
}

/// A complete ELBO graph for one model: backward from `parts.elbo` and
/// read gradients at `vars`.
#[derive(Debug)]
pub struct ElboGraph {
    pub tape: Tape,
    pub vars: ModelVars,
    pub parts: ElboParts,
}

impl ElboGraph {
    pub fn value(&self) -> f64 {
        self.tape.value(self.parts.elbo).item()
    }

    /// Gradient of the ELBO for every model parameter, in `params()` order.
    pub fn gradients(&self) -> Result<Vec<Array>> {
        let grads = self.tape.backward(self.parts.elbo)?;
        Ok(self.vars.vars().into_iter().map(|v| grads.wrt(v)).collect())
    }
}

/// Monte-Carlo ELBO of `batch` posterior paths:
///
/// `(1/B) Σ_paths [ Σ_t log N(x_t | f(z_t), c I) - Σ_k ½ |u(z_k, t_k)|² h ]`
///
/// with `u = (μ_θ - μ_φ) / σ`, `μ_θ(z) = -z`, and `drift(tape, pe, z)`
/// supplying `μ_φ`. Paths start at `ψ(x_0)`.
#[allow(clippy::too_many_arguments)]
pub fn elbo_with_drift(
    tape: &mut Tape,
    encoder: LinearVars,
    decoder: LinearVars,
    cfg: &SdeConfig,
    series: &TimeSeries,
    batch: usize,
    noise: NoiseSpec,
    mut drift: impl FnMut(&mut Tape, Var, Var) -> Result<Var>,
) -> Result<ElboParts> {
    cfg.validate()?;
    if series.dim() != cfg.obs_dim {
        return Err(input_err!(
            "series has {} channels, model expects {}",
            series.dim(),
            cfg.obs_dim
        ));
    }
    if batch == 0 {
        return Err(input_err!("batch must be at least 1"));
    }
    let latent = cfg.latent();
    let h = cfg.step();
    let sigma = cfg.diffusion_const;
    let noise_scale = sigma * libm::sqrt(h);
    let mut streams = NoiseStreams::new(noise, batch, latent);

    let x0 = tape.constant(Array::row_vector(series.row(0).to_vec()));
    let z0 = encoder.forward(tape, x0)?;
    let mut z = tape.repeat_rows(z0, batch)?;

    let mut recon_terms = Vec::with_capacity(series.len());
    let mut kl_terms = Vec::with_capacity((series.len() - 1) * cfg.substeps);
    for t in 0..series.len() {
        let decoded = decoder.forward(tape, z)?;
        let x = tape.constant(Array::row_vector(series.row(t).to_vec()));
        recon_terms.push(tape.gaussian_log_density(x, decoded, cfg.obs_variance_c)?);
        if t + 1 == series.len() {
            break;
        }
        for k in 0..cfg.substeps {
            let time = t as f64 + k as f64 / cfg.substeps as f64;
            let pe_row = positional_encoding(time, cfg.n_pos_encodings);
            let pe = tape.constant(Array::from_vec(batch, pe_row.len(), pe_row.repeat(batch))?);
            let mu = drift(tape, pe, z)?;

            let prior = tape.neg(z);
            let diff = tape.sub(prior, mu)?;
            let u = tape.scale(diff, 1.0 / sigma);
            let u_sq = tape.square(u);
            let u_sum = tape.sum(u_sq);
            kl_terms.push(tape.scale(u_sum, 0.5 * h));

            let mu_h = tape.scale(mu, h);
            let moved = tape.add(z, mu_h)?;
            let xi = tape.constant(streams.draw().map(|e| noise_scale * e));
            z = tape.add(moved, xi)?;
            if let Some(node) = tape.first_non_finite() {
                return Err(Error::Numerical {
                    stage: "solver step",
                    index: t * cfg.substeps + k,
                    detail: format!("non-finite value at tape node {node}"),
                });
            }
        }
    }
    let recon = sum_scalars(tape, &recon_terms)?;
    let kl = sum_scalars(tape, &kl_terms)?;
    let diff = tape.sub(recon, kl)?;
    let elbo = tape.scale(diff, 1.0 / batch as f64);
    Ok(ElboParts {
        elbo,
        reconstruction: tape.value(recon).item() / batch as f64,
        kl: tape.value(kl).item() / batch as f64,
    })
}

fn sum_scalars(tape: &mut Tape, terms: &[Var]) -> Result<Var> {
    let Some((&first, rest)) = terms.split_first() else {
        return Ok(tape.constant(Array::scalar(0.0)));
    };
    let mut acc = first;
    for &term in rest {
        acc = tape.add(acc, term)?;
    }
    Ok(acc)
}

/// ELBO of `model` on a fresh tape.
pub fn elbo(
    model: &LatentSdeModel,
    series: &TimeSeries,
    batch: usize,
    noise: NoiseSpec,
) -> Result<ElboGraph> {
    let mut tape = Tape::new();
    let vars = model.register(&mut tape);
    let drift_vars = vars.clone();
    let parts = elbo_with_drift(
        &mut tape,
        vars.encoder,
        vars.decoder,
        &model.config,
        series,
        batch,
        noise,
        |tape, pe, z| drift_vars.drift(tape, pe, z),
    )?;
    Ok(ElboGraph { tape, vars, parts })
}
