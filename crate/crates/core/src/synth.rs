//! Seeded synthetic series with labelled change points: mean steps, slope
//! fractures and noise-scale changes, plus the thirteen-row benchmark corpus.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Open01, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::input_err;
use crate::rng::{derive_seed, stream};
use crate::{ChangePointLabels, Result, TimeSeries};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseFamily {
    Gaussian,
    /// Gumbel noise shifted to zero mean, so a scale change moves no level.
    Gumbel,
}

/// One stationary stretch of a synthetic series. All vectors are per
/// dimension. Within the segment, at local index `k`,
/// `value = level + slope * k + scale * noise`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentSpec {
    pub length: usize,
    pub noise: Vec<NoiseFamily>,
    /// Level at the segment start. With `continuous`, an offset added to
    /// where the previous segment's trend would have been next.
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub slope: Vec<f64>,
    /// Correlation of the two Gaussian channels of a 2-D segment.
    #[serde(default)]
    pub correlation: f64,
    #[serde(default)]
    pub continuous: bool,
}

impl SegmentSpec {
    /// Unit-scale Gaussian noise around a constant zero level.
    pub fn gaussian(length: usize, dim: usize) -> Self {
        Self {
            length,
            noise: vec![NoiseFamily::Gaussian; dim],
            mean: vec![0.0; dim],
            scale: vec![1.0; dim],
            slope: vec![0.0; dim],
            correlation: 0.0,
            continuous: true,
        }
    }

    pub fn dim(&self) -> usize {
        self.noise.len()
    }

    fn validate(&self) -> Result<()> {
        let d = self.dim();
        if self.length < 2 {
            return Err(input_err!("segment length {} is below 2", self.length));
        }
        if d == 0 || self.mean.len() != d || self.scale.len() != d || self.slope.len() != d {
            return Err(input_err!("segment vectors must all have {d} > 0 entries"));
        }
        if self.scale.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(input_err!("noise scales must be positive"));
        }
        if self.mean.iter().chain(&self.slope).any(|v| !v.is_finite()) {
            return Err(input_err!("means and slopes must be finite"));
        }
        if self.correlation != 0.0 {
            if d != 2 || self.noise.iter().any(|n| *n != NoiseFamily::Gaussian) {
                return Err(input_err!("correlation needs two Gaussian channels"));
            }
            if !(self.correlation.abs() < 1.0) {
                return Err(input_err!("correlation must lie in (-1, 1)"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CpType {
    Jump,
    Trend,
    Volatility,
    Mixed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    /// Corpus row, 0 for ad-hoc datasets.
    pub index: usize,
    pub name: String,
    pub cp_type: CpType,
    pub seed: u64,
    pub segments: Vec<SegmentSpec>,
    pub series: TimeSeries,
    pub labels: ChangePointLabels,
}

impl SyntheticDataset {
    /// `<index>_<name>`, the corpus directory name.
    pub fn dir_name(&self) -> String {
        format!("{}_{}", self.index, self.name)
    }
}

/// `location - scale * ln(-ln U)` with `U` uniform on (0, 1).
pub fn gumbel_sample<R: Rng + ?Sized>(location: f64, scale: f64, rng: &mut R) -> f64 {
    let u: f64 = Open01.sample(rng);
    location - scale * libm::log(-libm::log(u))
}

fn draw(family: NoiseFamily, rng: &mut ChaCha8Rng) -> f64 {
    match family {
        NoiseFamily::Gaussian => StandardNormal.sample(rng),
        NoiseFamily::Gumbel => gumbel_sample(-EULER_GAMMA, 1.0, rng),
    }
}

/// Concatenates the segments with labels at their boundaries.
pub fn generate(segments: &[SegmentSpec], seed: u64) -> Result<(TimeSeries, ChangePointLabels)> {
    if segments.len() < 2 {
        return Err(input_err!("need at least two segments"));
    }
    let dim = segments[0].dim();
    for s in segments {
        s.validate()?;
        if s.dim() != dim {
            return Err(input_err!("segments disagree on dimension"));
        }
    }
    let total: usize = segments.iter().map(|s| s.length).sum();
    let mut rng = stream(seed);
    let mut values = Vec::with_capacity(total * dim);
    let mut labels = Vec::with_capacity(segments.len() - 1);
    // Where each channel's trend would continue at the next index.
    let mut carry = vec![0.0; dim];
    let mut noise = vec![0.0; dim];
    for (i, seg) in segments.iter().enumerate() {
        if i > 0 {
            labels.push(values.len() / dim);
        }
        let level: Vec<f64> = (0..dim)
            .map(|j| if seg.continuous { carry[j] + seg.mean[j] } else { seg.mean[j] })
            .collect();
        let rho = seg.correlation;
        for k in 0..seg.length {
            for (j, n) in noise.iter_mut().enumerate() {
                *n = draw(seg.noise[j], &mut rng);
            }
            if rho != 0.0 {
                noise[1] = rho * noise[0] + libm::sqrt(1.0 - rho * rho) * noise[1];
            }
            for j in 0..dim {
                values.push(level[j] + seg.slope[j] * k as f64 + seg.scale[j] * noise[j]);
            }
        }
        for j in 0..dim {
            carry[j] = level[j] + seg.slope[j] * seg.length as f64;
        }
    }
    let names = (0..dim).map(|j| format!("x{j}")).collect();
    let series = TimeSeries::new(values, names)?;
    let labels = ChangePointLabels::new(labels, total)?;
    Ok((series, labels))
}

/// Effect sizes used by the corpus rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusParams {
    pub mean_jump: f64,
    pub slope_change: f64,
    pub volatility_factor: f64,
    pub correlation: f64,
}

impl Default for CorpusParams {
    fn default() -> Self {
        Self {
            mean_jump: 2.0,
            slope_change: 0.02,
            volatility_factor: 3.0,
            correlation: 0.8,
        }
    }
}

pub const CORPUS_ROWS: usize = 13;

const ROWS: [(&str, CpType); CORPUS_ROWS] = [
    ("gumbel_change_with_gaussian", CpType::Volatility),
    ("both_gumbel_change", CpType::Volatility),
    ("gumbel_change_with_gumbel", CpType::Volatility),
    ("gaussian_covariance_change", CpType::Volatility),
    // Tagged volatility in the benchmark table even though it is a fracture.
    ("fracture_both_2d", CpType::Volatility),
    ("gaussian_noise_both_2d", CpType::Volatility),
    ("gaussian_noise_one_2d", CpType::Volatility),
    ("fracture_one_2d", CpType::Trend),
    ("single_fracture_1d", CpType::Trend),
    ("steps_and_fractures_1d", CpType::Mixed),
    ("step_one_2d", CpType::Jump),
    ("single_step_1d", CpType::Jump),
    ("step_both_2d", CpType::Jump),
];

/// Splits `length` into `parts` near-equal pieces, the remainder going last.
fn split(length: usize, parts: usize) -> Vec<usize> {
    let base = length / parts;
    let mut v = vec![base; parts];
    v[parts - 1] += length - base * parts;
    v
}

fn row_segments(index: usize, length: usize, p: &CorpusParams) -> Vec<SegmentSpec> {
    use NoiseFamily::{Gaussian, Gumbel};
    let halves = split(length, 2);
    let pair = |before: SegmentSpec, after: SegmentSpec| vec![before, after];
    let base = |dim: usize, half: usize| SegmentSpec::gaussian(halves[half], dim);
    let with_noise = |mut s: SegmentSpec, noise: [NoiseFamily; 2]| {
        s.noise = noise.to_vec();
        s
    };
    let f = p.volatility_factor;
    match index {
        1 | 2 | 3 => {
            let second = if index == 1 { Gaussian } else { Gumbel };
            let a = with_noise(base(2, 0), [Gumbel, second]);
            let mut b = with_noise(base(2, 1), [Gumbel, second]);
            b.scale = if index == 2 { vec![f, f] } else { vec![f, 1.0] };
            pair(a, b)
        }
        4 => {
            let mut b = base(2, 1);
            b.correlation = p.correlation;
            pair(base(2, 0), b)
        }
        5 | 8 => {
            let mut b = base(2, 1);
            b.slope = if index == 5 { vec![p.slope_change; 2] } else { vec![p.slope_change, 0.0] };
            pair(base(2, 0), b)
        }
        6 | 7 => {
            let mut b = base(2, 1);
            b.scale = if index == 6 { vec![f, f] } else { vec![f, 1.0] };
            pair(base(2, 0), b)
        }
        9 => {
            let mut b = base(1, 1);
            b.slope = vec![p.slope_change];
            pair(base(1, 0), b)
        }
        10 => {
            let q = split(length, 4);
            let seg = |k: usize, mean: f64, slope: f64| SegmentSpec {
                mean: vec![mean],
                slope: vec![slope],
                ..SegmentSpec::gaussian(q[k], 1)
            };
            vec![
                seg(0, 0.0, 0.0),
                seg(1, p.mean_jump, 0.0),
                seg(2, 0.0, p.slope_change),
                seg(3, -p.mean_jump, p.slope_change),
            ]
        }
        11 | 13 => {
            let mut b = base(2, 1);
            b.mean = if index == 13 { vec![p.mean_jump; 2] } else { vec![p.mean_jump, 0.0] };
            pair(base(2, 0), b)
        }
        12 => {
            let mut b = base(1, 1);
            b.mean = vec![p.mean_jump];
            pair(base(1, 0), b)
        }
        _ => unreachable!("row index checked by caller"),
    }
}

/// Corpus row `index` (1-based) of total length `length`.
pub fn corpus_row(index: usize, seed: u64, length: usize, params: &CorpusParams) -> Result<SyntheticDataset> {
    if !(1..=CORPUS_ROWS).contains(&index) {
        return Err(input_err!("corpus rows are 1..={CORPUS_ROWS}, got {index}"));
    }
    if length < 8 {
        return Err(input_err!("corpus series need at least 8 samples"));
    }
    let (name, cp_type) = ROWS[index - 1];
    let segments = row_segments(index, length, params);
    let row_seed = derive_seed(seed, index as u64);
    let (series, labels) = generate(&segments, row_seed)?;
    Ok(SyntheticDataset {
        index,
        name: String::from(name),
        cp_type,
        seed: row_seed,
        segments,
        series,
        labels,
    })
}

/// All thirteen corpus rows with default effect sizes.
pub fn corpus(seed: u64, length: usize) -> Result<Vec<SyntheticDataset>> {
    (1..=CORPUS_ROWS)
        .map(|i| corpus_row(i, seed, length, &CorpusParams::default()))
        .collect()
}

/// One-dimensional fixture of a single change type at the midpoint: a mean
/// step, a slope fracture or a noise-scale change.
pub fn family_fixture(kind: CpType, seed: u64, length: usize, params: &CorpusParams) -> Result<SyntheticDataset> {
    let (index, name) = match kind {
        CpType::Jump => (12, "single_step_1d"),
        CpType::Trend => (9, "single_fracture_1d"),
        CpType::Volatility => (0, "noise_change_1d"),
        CpType::Mixed => return Err(input_err!("no single-family fixture for mixed changes")),
    };
    if index != 0 {
        return corpus_row(index, seed, length, params);
    }
    let halves = split(length, 2);
    let mut b = SegmentSpec::gaussian(halves[1], 1);
    b.scale = vec![params.volatility_factor];
    let segments = vec![SegmentSpec::gaussian(halves[0], 1), b];
    let (series, labels) = generate(&segments, seed)?;
    Ok(SyntheticDataset {
        index,
        name: String::from(name),
        cp_type: kind,
        seed,
        segments,
        series,
        labels,
    })
}

/// Three 200-sample Gaussian segments with mean steps at 200 and 400.
pub fn demo_series(seed: u64) -> Result<SyntheticDataset> {
    let seg = |mean: f64| SegmentSpec {
        mean: vec![mean],
        continuous: false,
        ..SegmentSpec::gaussian(200, 1)
    };
    let segments = vec![seg(0.0), seg(2.0), seg(-1.0)];
    let (series, labels) = generate(&segments, seed)?;
    Ok(SyntheticDataset {
        index: 0,
        name: String::from("demo"),
        cp_type: CpType::Jump,
        seed,
        segments,
        series,
        labels,
    })
}
