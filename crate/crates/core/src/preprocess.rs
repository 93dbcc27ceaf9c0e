//! Input conditioning: per-channel standard scaling, ARIMA(p, d, 0) residual
//! features and sinusoidal positional encodings for the drift network.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::input_err;
use crate::{Error, Result, TimeSeries};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub use_residuals: bool,
    pub ar_order: usize,
    pub diff_order: usize,
    pub n_pos_encodings: usize,
    pub scale_eps: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            use_residuals: true,
            ar_order: 5,
            diff_order: 1,
            n_pos_encodings: 8,
            scale_eps: 1e-8,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ar_order < 1 {
            return Err(input_err!("ar_order must be at least 1"));
        }
        if self.diff_order > 1 {
            return Err(input_err!("diff_order must be 0 or 1"));
        }
        if self.n_pos_encodings < 2 || self.n_pos_encodings % 2 != 0 {
            return Err(input_err!("n_pos_encodings must be even and at least 2"));
        }
        if !(self.scale_eps > 0.0) {
            return Err(input_err!("scale_eps must be positive"));
        }
        Ok(())
    }
}

/// Output of [`standard_scale`]: the scaled series plus the names of
/// channels that were (near-)constant and therefore zeroed.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaled {
    pub series: TimeSeries,
    pub degenerate_channels: Vec<String>,
}

/// Scales each channel to mean 0 and population variance 1.
pub fn standard_scale(series: &TimeSeries, eps: f64) -> Scaled {
    let (len, dim) = (series.len(), series.dim());
    let mut values = vec![0.0; len * dim];
    let mut degenerate_channels = Vec::new();
    for j in 0..dim {
        let col = series.column(j);
        let mean = col.iter().sum::<f64>() / len as f64;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / len as f64;
        if var < eps {
            degenerate_channels.push(series.channel_names()[j].clone());
            continue;
        }
        let std = libm::sqrt(var);
        for (t, v) in col.iter().enumerate() {
            values[t * dim + j] = (v - mean) / std;
        }
    }
    Scaled {
        series: series.with_values(values).expect("scaling keeps values finite"),
        degenerate_channels,
    }
}

/// ARIMA(p, d, 0) fitted by conditional least squares.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArModel {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub diff_order: usize,
}

impl ArModel {
    /// The model that predicts the (differenced) series by a constant.
    pub fn constant(order: usize, intercept: f64, diff_order: usize) -> Self {
        Self {
            coefficients: vec![0.0; order],
            intercept,
            diff_order,
        }
    }

    pub fn order(&self) -> usize {
        self.coefficients.len()
    }

    /// Rows before this index have no complete one-step prediction.
    pub fn warm_up(&self) -> usize {
        self.order() + self.diff_order
    }
}

fn difference(x: &[f64], d: usize) -> Vec<f64> {
    match d {
        0 => x.to_vec(),
        _ => x.windows(2).map(|w| w[1] - w[0]).collect(),
    }
}

/// Fits AR(`order`) with intercept by ordinary least squares on the
/// `diff_order`-times differenced channel, conditioning on the first
/// `order` differenced values.
pub fn fit_ar(channel: &[f64], order: usize, diff_order: usize) -> Result<ArModel> {
    if order == 0 || diff_order > 1 {
        return Err(input_err!("unsupported ARIMA order ({order}, {diff_order}, 0)"));
    }
    if channel.len() <= diff_order + 2 * order {
        return Err(input_err!(
            "{} rows are too few for AR({order}) with d={diff_order}",
            channel.len()
        ));
    }
    let y = difference(channel, diff_order);
    let k = order + 1;
    // Normal equations over regressors [1, y_{t-1}, ..., y_{t-p}].
    let mut gram = vec![0.0; k * k];
    let mut rhs = vec![0.0; k];
    let mut regressors = vec![0.0; k];
    for t in order..y.len() {
        regressors[0] = 1.0;
        for lag in 1..=order {
            regressors[lag] = y[t - lag];
        }
        for a in 0..k {
            rhs[a] += regressors[a] * y[t];
            for b in 0..k {
                gram[a * k + b] += regressors[a] * regressors[b];
            }
        }
    }
    let beta = solve_spd(&mut gram, &mut rhs, k).ok_or(Error::RankDeficient {
        rows: y.len() - order,
        cols: k,
    })?;
    Ok(ArModel {
        intercept: beta[0],
        coefficients: beta[1..].to_vec(),
        diff_order,
    })
}

/// [`fit_ar`], falling back to a zero-coefficient model whose intercept is
/// the mean of the differenced channel when the design is rank-deficient.
pub fn fit_ar_or_constant(channel: &[f64], order: usize, diff_order: usize) -> Result<ArModel> {
    match fit_ar(channel, order, diff_order) {
        Err(Error::RankDeficient { .. }) => {
            let y = difference(channel, diff_order);
            let tail = &y[order..];
            let mean = tail.iter().sum::<f64>() / tail.len() as f64;
            Ok(ArModel::constant(order, mean, diff_order))
        }
        other => other,
    }
}

/// Cholesky solve of the symmetric system `a x = b`; `None` when a pivot
/// collapses relative to the matrix scale.
fn solve_spd(a: &mut [f64], b: &mut [f64], n: usize) -> Option<Vec<f64>> {
    let scale = (0..n).map(|i| a[i * n + i]).fold(0.0f64, f64::max);
    if !(scale > 0.0) {
        return None;
    }
    for j in 0..n {
        let mut diag = a[j * n + j];
        for k in 0..j {
            diag -= a[j * n + k] * a[j * n + k];
        }
        if diag <= 1e-11 * scale {
            return None;
        }
        let diag = libm::sqrt(diag);
        a[j * n + j] = diag;
        for i in j + 1..n {
            let mut v = a[i * n + j];
            for k in 0..j {
                v -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = v / diag;
        }
    }
    for i in 0..n {
        let mut v = b[i];
        for k in 0..i {
            v -= a[i * n + k] * b[k];
        }
        b[i] = v / a[i * n + i];
    }
    for i in (0..n).rev() {
        let mut v = b[i];
        for k in i + 1..n {
            v -= a[k * n + i] * b[k];
        }
        b[i] = v / a[i * n + i];
    }
    Some(b.to_vec())
}

/// In-sample one-step residuals `x_t - x̂_t` in the original scale; rows
/// before [`ArModel::warm_up`] are zero.
pub fn channel_residuals(channel: &[f64], model: &ArModel) -> Vec<f64> {
    let y = difference(channel, model.diff_order);
    let mut out = vec![0.0; channel.len()];
    for t in model.warm_up()..channel.len() {
        // Index of x_t in the differenced series.
        let ty = t - model.diff_order;
        let mut pred = model.intercept;
        for (lag, coef) in model.coefficients.iter().enumerate() {
            pred += coef * y[ty - lag - 1];
        }
        if model.diff_order == 1 {
            pred += channel[t - 1];
        }
        out[t] = channel[t] - pred;
    }
    out
}

/// Residual series for every channel given one model per channel.
pub fn residuals(series: &TimeSeries, models: &[ArModel]) -> Result<TimeSeries> {
    if models.len() != series.dim() {
        return Err(input_err!(
            "{} models for {} channels",
            models.len(),
            series.dim()
        ));
    }
    let columns: Vec<Vec<f64>> = models
        .iter()
        .enumerate()
        .map(|(j, m)| channel_residuals(&series.column(j), m))
        .collect();
    let mut out = TimeSeries::from_columns(&columns)?;
    let names = series
        .channel_names()
        .iter()
        .map(|n| alloc::format!("{n}_resid"))
        .collect();
    out = TimeSeries::with_dt(out.values().to_vec(), names, series.dt())?;
    Ok(out)
}

/// The model input: scaled channels, followed (when enabled) by the
/// standard-scaled ARIMA residual of each scaled channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Augmented {
    pub series: TimeSeries,
    pub models: Vec<ArModel>,
    pub degenerate_channels: Vec<String>,
}

pub fn augment(series: &TimeSeries, cfg: &PreprocessConfig) -> Result<Augmented> {
    cfg.validate()?;
    let scaled = standard_scale(series, cfg.scale_eps);
    if !cfg.use_residuals {
        return Ok(Augmented {
            series: scaled.series,
            models: Vec::new(),
            degenerate_channels: scaled.degenerate_channels,
        });
    }
    let models = (0..scaled.series.dim())
        .map(|j| fit_ar_or_constant(&scaled.series.column(j), cfg.ar_order, cfg.diff_order))
        .collect::<Result<Vec<_>>>()?;
    let resid = residuals(&scaled.series, &models)?;
    let resid_scaled = standard_scale(&resid, cfg.scale_eps);
    let mut degenerate_channels = scaled.degenerate_channels;
    degenerate_channels.extend(resid_scaled.degenerate_channels);
    Ok(Augmented {
        series: scaled.series.hstack(&resid_scaled.series)?,
        models,
        degenerate_channels,
    })
}

/// Sinusoidal features of time index `t`: entry `2k` is
/// `sin(t / 10000^(2k/n))`, entry `2k + 1` the matching cosine.
pub fn positional_encoding(t: f64, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    write_positional_encoding(t, &mut out);
    out
}

pub(crate) fn write_positional_encoding(t: f64, out: &mut [f64]) {
    let n = out.len();
    for k in 0..n / 2 {
        let freq = libm::pow(10_000.0, -((2 * k) as f64) / n as f64);
        let (s, c) = libm::sincos(t * freq);
        out[2 * k] = s;
        out[2 * k + 1] = c;
    }
}
