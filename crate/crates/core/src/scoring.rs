//! Lag-window likelihood-ratio scores from sampled trajectories, and peak
//! extraction from the aggregated score.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::input_err;
use crate::preprocess::{augment, Augmented, PreprocessConfig};
use crate::sde::{sample_posterior, LatentSdeModel, TrajectoryBundle};
use crate::{Detections, Result, ScoreSeries, TimeSeries};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoreConfig {
    pub lags: usize,
    pub obs_variance_c: f64,
    pub n_trajectories: usize,
    pub prominence: f64,
    pub min_peak_distance: usize,
    /// Minimum peak height for detections; `None` keeps every peak.
    pub threshold: Option<f64>,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        Self {
            lags: 5,
            obs_variance_c: 0.1,
            n_trajectories: 100,
            prominence: 0.0,
            min_peak_distance: 1,
            threshold: None,
        }
    }
}

impl ScoreConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lags == 0 || self.n_trajectories == 0 {
            return Err(input_err!("lags and n_trajectories must be at least 1"));
        }
        if !(self.obs_variance_c > 0.0) {
            return Err(input_err!("obs_variance_c must be positive"));
        }
        if !(self.prominence >= 0.0) {
            return Err(input_err!("prominence must be non-negative"));
        }
        Ok(())
    }
}

/// Per-dimension scores, `T x D`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    len: usize,
    dim: usize,
    values: Vec<f64>,
}

impl ScoreMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if dim == 0 || rows.iter().any(|r| r.len() != dim) {
            return Err(input_err!("score matrix rows must be non-empty and equally long"));
        }
        Ok(Self {
            len: rows.len(),
            dim,
            values: rows.concat(),
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.dim..(t + 1) * self.dim]
    }

    pub fn get(&self, t: usize, j: usize) -> f64 {
        self.values[t * self.dim + j]
    }
}

/// For each dimension `j`, `log((1/N) Σ_i N(x[j] | m_i[v][j], c))` over the
/// decoded means `m_i` of the bundle at time `v`, via log-sum-exp.
pub fn mc_log_likelihood(x: &[f64], bundle: &TrajectoryBundle, v: usize, c: f64) -> Vec<f64> {
    let means = bundle.decoded(v);
    let n = means.rows();
    let norm = -0.5 * libm::log(2.0 * PI * c);
    let mut out = vec![0.0; x.len()];
    let mut exponents = vec![0.0; n];
    for (j, o) in out.iter_mut().enumerate() {
        let mut top = f64::NEG_INFINITY;
        for (i, e) in exponents.iter_mut().enumerate() {
            let d = x[j] - means.get(i, j);
            *e = -d * d / (2.0 * c);
            top = top.max(*e);
        }
        let sum: f64 = exponents.iter().map(|e| libm::exp(e - top)).sum();
        *o = norm + top + libm::log(sum / n as f64);
    }
    out
}

/// `score[t][j] = Σ_{l=1..min(L,t)} ll(x_t | t)[j] - ll(x_t | t-l)[j]`,
/// zero at `t = 0`.
pub fn cpd_score(series: &TimeSeries, bundle: &TrajectoryBundle, cfg: &ScoreConfig) -> Result<ScoreMatrix> {
    cfg.validate()?;
    if bundle.len() < series.len() {
        return Err(input_err!(
            "bundle covers {} steps, series has {}",
            bundle.len(),
            series.len()
        ));
    }
    if bundle.obs_dim() != series.dim() {
        return Err(input_err!(
            "bundle has {} dimensions, series has {}",
            bundle.obs_dim(),
            series.dim()
        ));
    }
    let dim = series.dim();
    let mut values = vec![0.0; series.len() * dim];
    for t in 1..series.len() {
        let x = series.row(t);
        let here = mc_log_likelihood(x, bundle, t, cfg.obs_variance_c);
        let row = &mut values[t * dim..(t + 1) * dim];
        for l in 1..=cfg.lags.min(t) {
            let before = mc_log_likelihood(x, bundle, t - l, cfg.obs_variance_c);
            for ((r, h), b) in row.iter_mut().zip(&here).zip(&before) {
                *r += h - b;
            }
        }
    }
    Ok(ScoreMatrix {
        len: series.len(),
        dim,
        values,
    })
}

/// Maximum over dimensions at each time.
pub fn max_aggregate(m: &ScoreMatrix) -> ScoreSeries {
    let scores = (0..m.len())
        .map(|t| m.row(t).iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    ScoreSeries::new(scores).expect("finite scores")
}

/// Topographic prominence of the strict local maximum at `i`: its height
/// above the higher of the two lowest points separating it from a higher
/// value (or the series edge) on either side.
pub fn peak_prominence(scores: &[f64], i: usize) -> f64 {
    let h = scores[i];
    let mut left_min = h;
    for &v in scores[..i].iter().rev() {
        if v > h {
            break;
        }
        left_min = left_min.min(v);
    }
    let mut right_min = h;
    for &v in &scores[i + 1..] {
        if v > h {
            break;
        }
        right_min = right_min.min(v);
    }
    h - left_min.max(right_min)
}

/// Strict interior local maxima of `scores`, ascending by index.
pub fn local_maxima(scores: &[f64]) -> Vec<usize> {
    (1..scores.len().saturating_sub(1))
        .filter(|&i| scores[i] > scores[i - 1] && scores[i] > scores[i + 1])
        .collect()
}

/// Peaks with prominence `>= prominence`, thinned so no two are closer than
/// `min_distance` (the higher survives; ties keep the earlier index).
/// Returned ascending by index. Thresholding commutes with this filter.
pub fn candidate_peaks(scores: &[f64], prominence: f64, min_distance: usize) -> Vec<usize> {
    let mut peaks: Vec<usize> = local_maxima(scores)
        .into_iter()
        .filter(|&i| peak_prominence(scores, i) >= prominence)
        .collect();
    if min_distance > 1 {
        let mut order = peaks.clone();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        let mut kept: Vec<usize> = Vec::with_capacity(order.len());
        for i in order {
            if kept.iter().all(|&k| k.abs_diff(i) >= min_distance) {
                kept.push(i);
            }
        }
        kept.sort_unstable();
        peaks = kept;
    }
    peaks
}

/// Detections at peaks scoring at least `threshold`.
pub fn prominence_peaks(s: &ScoreSeries, threshold: f64, prominence: f64, min_distance: usize) -> Detections {
    let scores = s.scores();
    let positions: Vec<usize> = candidate_peaks(scores, prominence, min_distance)
        .into_iter()
        .filter(|&i| scores[i] >= threshold)
        .collect();
    let peak_scores = positions.iter().map(|&i| scores[i]).collect();
    Detections::new(positions, peak_scores, s.len()).expect("peaks are sorted and in range")
}

/// Everything produced by [`score_pipeline`].
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub augmented: Augmented,
    pub bundle: TrajectoryBundle,
    pub matrix: ScoreMatrix,
    pub scores: ScoreSeries,
    pub detections: Detections,
}

/// Preprocess, sample posterior paths, score every dimension, take the
/// maximum over dimensions and extract peaks.
pub fn score_pipeline(
    raw: &TimeSeries,
    model: &LatentSdeModel,
    pre: &PreprocessConfig,
    cfg: &ScoreConfig,
    seed: u64,
) -> Result<PipelineOutput> {
    let augmented = augment(raw, pre)?;
    score_augmented(augmented, model, cfg, seed)
}

/// [`score_pipeline`] for a series that is already preprocessed.
pub fn score_augmented(
    augmented: Augmented,
    model: &LatentSdeModel,
    cfg: &ScoreConfig,
    seed: u64,
) -> Result<PipelineOutput> {
    cfg.validate()?;
    let bundle = sample_posterior(model, &augmented.series, cfg.n_trajectories, seed)?;
    let matrix = cpd_score(&augmented.series, &bundle, cfg)?;
    let scores = max_aggregate(&matrix);
    let detections = prominence_peaks(
        &scores,
        cfg.threshold.unwrap_or(f64::NEG_INFINITY),
        cfg.prominence,
        cfg.min_peak_distance,
    );
    Ok(PipelineOutput {
        augmented,
        bundle,
        matrix,
        scores,
        detections,
    })
}
