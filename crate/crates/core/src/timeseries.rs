//! Data model shared by every stage: observations, ground-truth labels,
//! per-timestamp scores and thresholded detections.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::input_err;
use crate::Result;

/// A `T x D` matrix of finite observations indexed by integer time.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    values: Vec<f64>,
    len: usize,
    dim: usize,
    channel_names: Vec<String>,
    dt: f64,
}

impl TimeSeries {
    /// Builds a series from row-major `values` (`len * channel_names.len()` entries).
    pub fn new(values: Vec<f64>, channel_names: Vec<String>) -> Result<Self> {
        Self::with_dt(values, channel_names, 1.0)
    }

    pub fn with_dt(values: Vec<f64>, channel_names: Vec<String>, dt: f64) -> Result<Self> {
        let dim = channel_names.len();
        if dim == 0 {
            return Err(input_err!("time series needs at least one channel"));
        }
        if values.len() % dim != 0 {
            return Err(input_err!(
                "{} values do not fill rows of {} channels",
                values.len(),
                dim
            ));
        }
        let len = values.len() / dim;
        if len < 2 {
            return Err(input_err!("time series needs at least 2 rows, got {len}"));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(input_err!("time step must be positive and finite, got {dt}"));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(input_err!(
                "non-finite value at row {}, column {}",
                pos / dim,
                pos % dim
            ));
        }
        let mut seen = BTreeSet::new();
        for name in &channel_names {
            if !seen.insert(name.as_str()) {
                return Err(input_err!("duplicate channel name {name:?}"));
            }
        }
        Ok(Self {
            values,
            len,
            dim,
            channel_names,
            dt,
        })
    }

    /// Builds a series from rows, naming channels `x0, x1, ...`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != dim) {
            return Err(input_err!("row {bad} has {} values, expected {dim}", rows[bad].len()));
        }
        Self::new(rows.concat(), default_names(dim))
    }

    /// Builds a series from equally long columns, naming channels `x0, x1, ...`.
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let dim = columns.len();
        let len = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != len) {
            return Err(input_err!("columns have different lengths"));
        }
        let mut values = Vec::with_capacity(len * dim);
        for t in 0..len {
            values.extend(columns.iter().map(|c| c[t]));
        }
        Self::new(values, default_names(dim))
    }

    /// Number of timestamps `T`.
    pub fn len(&self) -> usize {
        self.len
    }

    /// Always false: a valid series has at least two rows.
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Number of channels `D`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn channel_names(&self) -> &[String] {
        &self.channel_names
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.dim..(t + 1) * self.dim]
    }

    pub fn get(&self, t: usize, j: usize) -> f64 {
        self.values[t * self.dim + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.len).map(|t| self.get(t, j)).collect()
    }

    pub fn columns(&self) -> Vec<Vec<f64>> {
        (0..self.dim).map(|j| self.column(j)).collect()
    }

    /// Same shape and metadata with new values (validated).
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::with_dt(values, self.channel_names.clone(), self.dt)
    }

    /// Column-wise concatenation `[self | other]`; name clashes in `other` get a suffix.
    pub fn hstack(&self, other: &TimeSeries) -> Result<Self> {
        if self.len != other.len {
            return Err(input_err!(
                "cannot stack series of lengths {} and {}",
                self.len,
                other.len
            ));
        }
        let dim = self.dim + other.dim;
        let mut values = Vec::with_capacity(self.len * dim);
        for t in 0..self.len {
            values.extend_from_slice(self.row(t));
            values.extend_from_slice(other.row(t));
        }
        let mut names = self.channel_names.clone();
        for name in &other.channel_names {
            let mut candidate = name.clone();
            while names.contains(&candidate) {
                candidate.push('_');
            }
            names.push(candidate);
        }
        Self::with_dt(values, names, self.dt)
    }
}

fn default_names(dim: usize) -> Vec<String> {
    (0..dim).map(|j| format!("x{j}")).collect()
}

/// `x^Δ_t = x_t - x_{t-1}` with row 0 set to zero.
pub fn first_difference(series: &TimeSeries) -> TimeSeries {
    let dim = series.dim();
    let mut values = alloc::vec![0.0; series.values().len()];
    for t in 1..series.len() {
        for j in 0..dim {
            values[t * dim + j] = series.get(t, j) - series.get(t - 1, j);
        }
    }
    series
        .with_values(values)
        .expect("differences of finite values are finite")
}

/// Ground-truth change points: strictly increasing positions in `[1, T-1]`.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(try_from = "RawLabels")]
pub struct ChangePointLabels {
    series_length: usize,
    positions: Vec<usize>,
}

#[derive(serde::Deserialize)]
struct RawLabels {
    series_length: usize,
    positions: Vec<usize>,
}

impl TryFrom<RawLabels> for ChangePointLabels {
    type Error = crate::Error;

    fn try_from(raw: RawLabels) -> Result<Self> {
        Self::new(raw.positions, raw.series_length)
    }
}

impl ChangePointLabels {
    pub fn new(positions: Vec<usize>, series_length: usize) -> Result<Self> {
        if series_length < 2 {
            return Err(input_err!("series length must be at least 2"));
        }
        check_increasing(&positions)?;
        if let Some(&bad) = positions.iter().find(|&&p| p == 0 || p >= series_length) {
            return Err(input_err!(
                "change point {bad} outside [1, {}]",
                series_length - 1
            ));
        }
        Ok(Self {
            series_length,
            positions,
        })
    }

    pub fn positions(&self) -> &[usize] {
        &self.positions
    }

    pub fn series_length(&self) -> usize {
        self.series_length
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// One CPD score per timestamp.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(try_from = "RawScores")]
pub struct ScoreSeries {
    series_length: usize,
    scores: Vec<f64>,
}

#[derive(serde::Deserialize)]
struct RawScores {
    series_length: usize,
    scores: Vec<f64>,
}

impl TryFrom<RawScores> for ScoreSeries {
    type Error = crate::Error;

    fn try_from(raw: RawScores) -> Result<Self> {
        if raw.scores.len() != raw.series_length {
            return Err(input_err!(
                "{} scores for a series of length {}",
                raw.scores.len(),
                raw.series_length
            ));
        }
        Self::new(raw.scores)
    }
}

impl ScoreSeries {
    pub fn new(scores: Vec<f64>) -> Result<Self> {
        if let Some(pos) = scores.iter().position(|s| !s.is_finite()) {
            return Err(input_err!("non-finite score at index {pos}"));
        }
        Ok(Self {
            series_length: scores.len(),
            scores,
        })
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn len(&self) -> usize {
        self.series_length
    }

    pub fn is_empty(&self) -> bool {
        self.series_length == 0
    }
}

/// Detected change points with the score of the peak that produced each one.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(try_from = "RawDetections")]
pub struct Detections {
    series_length: usize,
    positions: Vec<usize>,
    peak_scores: Vec<f64>,
}

#[derive(serde::Deserialize)]
struct RawDetections {
    series_length: usize,
    positions: Vec<usize>,
    peak_scores: Vec<f64>,
}

impl TryFrom<RawDetections> for Detections {
    type Error = crate::Error;

    fn try_from(raw: RawDetections) -> Result<Self> {
        Self::new(raw.positions, raw.peak_scores, raw.series_length)
    }
}

impl Detections {
    pub fn new(positions: Vec<usize>, peak_scores: Vec<f64>, series_length: usize) -> Result<Self> {
        check_increasing(&positions)?;
        if positions.len() != peak_scores.len() {
            return Err(input_err!(
                "{} positions but {} peak scores",
                positions.len(),
                peak_scores.len()
            ));
        }
        if let Some(&bad) = positions.iter().find(|&&p| p >= series_length) {
            return Err(input_err!("detection {bad} beyond series length {series_length}"));
        }
        Ok(Self {
            series_length,
            positions,
            peak_scores,
        })
    }

    /// Detections without scores (each peak score set to 1).
    pub fn from_positions(positions: Vec<usize>, series_length: usize) -> Result<Self> {
        let scores = alloc::vec![1.0; positions.len()];
        Self::new(positions, scores, series_length)
    }

    pub fn empty(series_length: usize) -> Self {
        Self {
            series_length,
            positions: Vec::new(),
            peak_scores: Vec::new(),
        }
    }

    pub fn positions(&self) -> &[usize] {
        &self.positions
    }

    pub fn peak_scores(&self) -> &[f64] {
        &self.peak_scores
    }

    pub fn series_length(&self) -> usize {
        self.series_length
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

fn check_increasing(positions: &[usize]) -> Result<()> {
    match positions.windows(2).find(|w| w[0] >= w[1]) {
        Some(w) => Err(input_err!(
            "positions must be strictly increasing ({} then {})",
            w[0],
            w[1]
        )),
        None => Ok(()),
    }
}
