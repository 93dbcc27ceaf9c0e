use alloc::format;
use alloc::vec::Vec;

use super::{elbo, LatentSdeModel, NoiseSpec, SdeConfig, TrainConfig};
use crate::autodiff::{Adam, AdamConfig};
use crate::rng::{self, tags};
use crate::{Error, Result, TimeSeries};

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: LatentSdeModel,
    /// `-ELBO` evaluated at the start of each epoch.
    pub loss_history: Vec<f64>,
}

/// Maximizes the ELBO with Adam for `epochs` steps. Each epoch draws fresh
/// path noise derived from the training seed.
pub fn train(series: &TimeSeries, sde: &SdeConfig, cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_with_callback(series, sde, cfg, |_, _, _| {})
}

/// [`train`], calling `on_epoch(epoch, model_after_update, loss)` after every
/// parameter update.
pub fn train_with_callback(
    series: &TimeSeries,
    sde: &SdeConfig,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(usize, &LatentSdeModel, f64),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut model = LatentSdeModel::new(sde.clone(), cfg.seed)?;
    let adam_cfg = AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    };
    let mut adam = Adam::new(adam_cfg, model.params());
    let noise_root = rng::derive_seed(cfg.seed, tags::TRAIN_NOISE);
    let mut loss_history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let noise = NoiseSpec::new(rng::derive_seed(noise_root, epoch as u64));
        let graph = elbo(&model, series, cfg.batch, noise)?;
        let loss = -graph.value();
        if !loss.is_finite() {
            return Err(Error::Numerical {
                stage: "epoch",
                index: epoch,
                detail: format!("non-finite loss {loss}"),
            });
        }
        let mut grads = graph.gradients()?;
        drop(graph);
        if let Some(bad) = grads.iter().position(|g| !g.all_finite()) {
            return Err(Error::Numerical {
                stage: "epoch",
                index: epoch,
                detail: format!("non-finite gradient for parameter {bad}"),
            });
        }
        // Ascent on the ELBO is descent on its negation.
        let mut factor = -1.0;
        if let Some(max_norm) = cfg.grad_clip {
            let norm = libm::sqrt(grads.iter().flat_map(|g| g.data()).map(|v| v * v).sum::<f64>());
            if norm > max_norm {
                factor *= max_norm / norm;
            }
        }
        for g in &mut grads {
            g.data_mut().iter_mut().for_each(|v| *v *= factor);
        }
        adam.step(model.params_mut(), &grads)?;
        loss_history.push(loss);
        on_epoch(epoch, &model, loss);
    }
    Ok(TrainOutcome {
        model,
        loss_history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn small() -> SdeConfig {
        SdeConfig {
            hidden: 16,
            n_pos_encodings: 4,
            ..SdeConfig::for_obs_dim(1)
        }
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let series = TimeSeries::from_columns(&[vec![0.0; 10]]).unwrap();
        let cfg = TrainConfig {
            epochs: 0,
            seed: 3,
            ..TrainConfig::default()
        };
        let out = train(&series, &small(), &cfg).unwrap();
        assert_eq!(out.model, LatentSdeModel::new(small(), 3).unwrap());
        assert!(out.loss_history.is_empty());
    }

    #[test]
    fn training_is_deterministic() {
        let series = TimeSeries::from_columns(&[(0..12).map(|t| (t % 3) as f64).collect()]).unwrap();
        let cfg = TrainConfig {
            epochs: 3,
            batch: 2,
            seed: 8,
            ..TrainConfig::default()
        };
        let a = train(&series, &small(), &cfg).unwrap();
        let b = train(&series, &small(), &cfg).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.loss_history, b.loss_history);
    }

    #[test]
    fn zero_series_loss_decreases() {
        let series = TimeSeries::from_columns(&[vec![0.0; 30]]).unwrap();
        let cfg = TrainConfig {
            epochs: 100,
            batch: 4,
            seed: 1,
            ..TrainConfig::default()
        };
        let out = train(&series, &small(), &cfg).unwrap();
        let h = &out.loss_history;
        let head: f64 = h[..10].iter().sum::<f64>() / 10.0;
        let tail: f64 = h[h.len() - 10..].iter().sum::<f64>() / 10.0;
        assert!(tail <= head, "head {head} tail {tail}");
    }

    #[test]
    fn callback_sees_every_epoch() {
        let series = TimeSeries::from_columns(&[vec![0.0, 1.0, 0.5, 0.2]]).unwrap();
        let cfg = TrainConfig {
            epochs: 4,
            batch: 1,
            ..TrainConfig::default()
        };
        let mut seen = vec![];
        train_with_callback(&series, &small(), &cfg, |e, _, loss| seen.push((e, loss))).unwrap();
        assert_eq!(seen.iter().map(|s| s.0).collect::<Vec<_>>(), vec![0, 1, 2, 3]);
    }
}
