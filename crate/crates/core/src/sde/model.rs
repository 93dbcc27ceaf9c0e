use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::SdeConfig;
use crate::autodiff::{Array, Linear, LinearVars, Mlp, MlpVars, Tape, Var};
use crate::preprocess::write_positional_encoding;
use crate::rng::{self, tags};
use crate::error::input_err;
use crate::Result;

/// Encoder `ψ`, decoder `f` and posterior drift `μ_φ` of a latent SDE. The
/// prior drift `μ_θ(z, t) = -z` and the diffusion constant are fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentSdeModel {
    pub config: SdeConfig,
    pub encoder: Linear,
    pub decoder: Linear,
    pub drift: Mlp,
}

/// Tape handles for every trainable array, in [`LatentSdeModel::params`] order.
#[derive(Debug, Clone)]
pub struct ModelVars {
    pub encoder: LinearVars,
    pub decoder: LinearVars,
    pub drift: MlpVars,
}

impl ModelVars {
    pub fn vars(&self) -> Vec<Var> {
        let mut out = vec![
            self.encoder.weight,
            self.encoder.bias,
            self.decoder.weight,
            self.decoder.bias,
        ];
        out.extend(self.drift.vars());
        out
    }

    /// `μ_φ([PE(t) | z])` on the tape.
    pub fn drift(&self, tape: &mut Tape, pe: Var, z: Var) -> Result<Var> {
        let input = tape.concat_cols(pe, z)?;
        self.drift.forward(tape, input)
    }
}

impl LatentSdeModel {
    /// Identity encoder/decoder, uniformly initialized drift network.
    pub fn new(config: SdeConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let latent = config.latent();
        let mut r = rng::stream(rng::derive_seed(seed, tags::INIT));
        let drift = Mlp::new(
            config.n_pos_encodings + latent,
            &[config.hidden, config.hidden],
            latent,
            &mut r,
        );
        Ok(Self {
            encoder: Linear::identity(config.obs_dim, latent),
            decoder: Linear::identity(latent, config.obs_dim),
            drift,
            config,
        })
    }

    /// Reassembles a model from stored parts, checking every shape against
    /// `config`.
    pub fn from_parts(config: SdeConfig, encoder: Linear, decoder: Linear, drift: Mlp) -> Result<Self> {
        config.validate()?;
        let (obs, latent) = (config.obs_dim, config.latent());
        let mut expected = vec![(&encoder, obs, latent), (&decoder, latent, obs)];
        let dims = [config.n_pos_encodings + latent, config.hidden, config.hidden, latent];
        if drift.layers.len() != dims.len() - 1 {
            return Err(input_err!(
                "drift network has {} layers, expected {}",
                drift.layers.len(),
                dims.len() - 1
            ));
        }
        expected.extend(drift.layers.iter().zip(dims.windows(2)).map(|(l, w)| (l, w[0], w[1])));
        for (k, (layer, fan_in, fan_out)) in expected.into_iter().enumerate() {
            if layer.weight.shape() != (fan_in, fan_out) || layer.bias.shape() != (1, fan_out) {
                return Err(input_err!(
                    "layer {k}: weight {:?} / bias {:?}, expected ({fan_in}, {fan_out}) / (1, {fan_out})",
                    layer.weight.shape(),
                    layer.bias.shape()
                ));
            }
            if !(layer.weight.all_finite() && layer.bias.all_finite()) {
                return Err(input_err!("layer {k} has non-finite parameters"));
            }
        }
        Ok(Self {
            config,
            encoder,
            decoder,
            drift,
        })
    }

    pub fn params(&self) -> impl Iterator<Item = &Array> {
        self.encoder
            .params()
            .into_iter()
            .chain(self.decoder.params())
            .chain(self.drift.params())
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Array> {
        self.encoder
            .params_mut()
            .into_iter()
            .chain(self.decoder.params_mut())
            .chain(self.drift.params_mut())
    }

    pub fn register(&self, tape: &mut Tape) -> ModelVars {
        ModelVars {
            encoder: self.encoder.register(tape),
            decoder: self.decoder.register(tape),
            drift: self.drift.register(tape),
        }
    }

    /// Posterior drift for every row of `z` at index time `t`.
    pub fn drift_at(&self, z: &Array, t: f64) -> Result<Array> {
        let n_pe = self.config.n_pos_encodings;
        let latent = z.cols();
        let mut input = Array::zeros(z.rows(), n_pe + latent);
        let mut pe = vec![0.0; n_pe];
        write_positional_encoding(t, &mut pe);
        for r in 0..z.rows() {
            let row = input.row_mut(r);
            row[..n_pe].copy_from_slice(&pe);
            row[n_pe..].copy_from_slice(z.row(r));
        }
        self.drift.forward(&input)
    }

    /// `ψ(x)` for a single observation.
    pub fn encode(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self
            .encoder
            .forward(&Array::row_vector(x.to_vec()))?
            .into_data())
    }

    /// `f(z)` for every row of `z`.
    pub fn decode(&self, z: &Array) -> Result<Array> {
        self.decoder.forward(z)
    }
}
