//! Change point evaluation metrics: margin-matched F1, segmentation
//! covering, NAB under three cost profiles, and relative change point
//! distance, plus a best-threshold sweep over score peaks.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::input_err;
use crate::scoring::candidate_peaks;
use crate::{ChangePointLabels, Detections, Error, Result, ScoreSeries};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatchConfig {
    /// A prediction matches a truth when `|pred - truth| < margin`.
    pub margin: usize,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self { margin: 5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NabProfile {
    pub a_tp: f64,
    pub a_fp: f64,
    pub a_fn: f64,
    pub a_tn: f64,
}

impl NabProfile {
    pub const STANDARD: Self = Self {
        a_tp: 1.0,
        a_fp: -0.11,
        a_fn: -1.0,
        a_tn: 1.0,
    };
    pub const LOW_FP: Self = Self {
        a_tp: 1.0,
        a_fp: -0.22,
        a_fn: -1.0,
        a_tn: 1.0,
    };
    pub const LOW_FN: Self = Self {
        a_tp: 1.0,
        a_fp: -0.11,
        a_fn: -2.0,
        a_tn: 1.0,
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NabConfig {
    /// Total window length as a fraction of the series, split across labels.
    pub window_fraction: f64,
    /// Sigmoid steepness; `None` means `5 / window`.
    pub steepness: Option<f64>,
}

impl Default for NabConfig {
    fn default() -> Self {
        Self {
            window_fraction: 0.1,
            steepness: None,
        }
    }
}

impl NabConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.window_fraction > 0.0 && self.window_fraction.is_finite()) {
            return Err(input_err!("window_fraction must be positive"));
        }
        if let Some(d) = self.steepness {
            if !(d >= 0.0 && d.is_finite()) {
                return Err(input_err!("steepness must be non-negative"));
            }
        }
        Ok(())
    }

    /// Window length in samples for `n_truths` labels on a length-`t` series.
    pub fn window(&self, t: usize, n_truths: usize) -> usize {
        let w = libm::round(self.window_fraction * t as f64 / n_truths as f64);
        (w as usize).max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct F1Score {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn same_length(truth: &ChangePointLabels, preds: &Detections) -> Result<()> {
    if truth.series_length() != preds.series_length() {
        return Err(input_err!(
            "labels cover {} samples, detections {}",
            truth.series_length(),
            preds.series_length()
        ));
    }
    Ok(())
}

/// Number of one-to-one matches: truths in ascending order each claim the
/// nearest unclaimed prediction closer than `margin` (ties to the earlier).
fn true_positives(truth: &[usize], preds: &[usize], margin: usize) -> usize {
    let mut claimed = vec![false; preds.len()];
    let mut tp = 0;
    for &t in truth {
        let best = preds
            .iter()
            .enumerate()
            .filter(|&(i, &p)| !claimed[i] && p.abs_diff(t) < margin)
            .min_by_key(|&(i, &p)| (p.abs_diff(t), i));
        if let Some((i, _)) = best {
            claimed[i] = true;
            tp += 1;
        }
    }
    tp
}

pub fn f1(truth: &ChangePointLabels, preds: &Detections, cfg: MatchConfig) -> Result<F1Score> {
    same_length(truth, preds)?;
    let (nt, np) = (truth.positions().len(), preds.positions().len());
    if nt == 0 && np == 0 {
        return Ok(F1Score {
            precision: 1.0,
            recall: 1.0,
            f1: 1.0,
        });
    }
    let tp = true_positives(truth.positions(), preds.positions(), cfg.margin) as f64;
    let precision = if np == 0 { 0.0 } else { tp / np as f64 };
    let recall = if nt == 0 { 0.0 } else { tp / nt as f64 };
    let f1 = if tp == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(F1Score {
        precision,
        recall,
        f1,
    })
}

/// Half-open segments `[a, b)` cut at each boundary, empty ones dropped.
fn segments(boundaries: &[usize], t: usize) -> Vec<(usize, usize)> {
    let mut cuts = vec![0];
    cuts.extend(boundaries.iter().copied().filter(|&b| b > 0 && b < t));
    cuts.push(t);
    cuts.windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| (w[0], w[1]))
        .collect()
}

fn jaccard(a: (usize, usize), b: (usize, usize)) -> f64 {
    let inter = a.1.min(b.1).saturating_sub(a.0.max(b.0));
    let union = (a.1 - a.0) + (b.1 - b.0) - inter;
    inter as f64 / union as f64
}

/// Length-weighted best Jaccard overlap of each true segment with any
/// predicted segment.
pub fn covering(truth: &ChangePointLabels, preds: &Detections) -> Result<f64> {
    same_length(truth, preds)?;
    let t = truth.series_length();
    let predicted = segments(preds.positions(), t);
    let total: f64 = segments(truth.positions(), t)
        .into_iter()
        .map(|a| {
            let best = predicted.iter().map(|&b| jaccard(a, b)).fold(0.0, f64::max);
            (a.1 - a.0) as f64 * best
        })
        .sum();
    Ok(total / t as f64)
}

/// NAB result before and after clamping to `[0, 100]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NabScore {
    pub raw: f64,
    pub normalized: f64,
    pub score: f64,
}

fn sigmoid_score(profile: &NabProfile, steepness: f64, distance: usize) -> f64 {
    (profile.a_tp - profile.a_fp) / (1.0 + libm::exp(steepness * distance as f64)) - 1.0
}

pub fn nab(
    truth: &ChangePointLabels,
    preds: &Detections,
    profile: &NabProfile,
    cfg: &NabConfig,
) -> Result<NabScore> {
    same_length(truth, preds)?;
    cfg.validate()?;
    let taus = truth.positions();
    if taus.is_empty() {
        return Err(Error::MetricUndefined(String::from(
            "NAB needs at least one labelled change point",
        )));
    }
    let w = cfg.window(truth.series_length(), taus.len());
    let steepness = cfg.steepness.unwrap_or(5.0 / w as f64);
    let in_any_window = |p: usize| taus.iter().any(|&t| p >= t && p < t + w);

    let mut used = vec![false; preds.positions().len()];
    let mut raw = 0.0;
    for &tau in taus {
        let nearest = preds
            .positions()
            .iter()
            .enumerate()
            .filter(|&(i, &p)| !used[i] && p >= tau && p < tau + w)
            .min_by_key(|&(_, &p)| p - tau);
        match nearest {
            Some((i, &p)) => {
                used[i] = true;
                raw += sigmoid_score(profile, steepness, p - tau);
            }
            None => raw += profile.a_fn,
        }
    }
    let false_positives = preds.positions().iter().filter(|&&p| !in_any_window(p)).count();
    raw += profile.a_fp * false_positives as f64;

    let n = taus.len() as f64;
    let perfect = n * sigmoid_score(profile, steepness, 0);
    let null = n * profile.a_fn;
    let normalized = 100.0 * (raw - null) / (perfect - null);
    Ok(NabScore {
        raw,
        normalized,
        score: normalized.clamp(0.0, 100.0),
    })
}

/// Mean distance from each prediction to its nearest truth, relative to the
/// series length; infinite with no predictions.
pub fn rcpd(truth: &ChangePointLabels, preds: &Detections) -> Result<f64> {
    same_length(truth, preds)?;
    let p = preds.positions();
    if p.is_empty() {
        return Ok(f64::INFINITY);
    }
    if truth.is_empty() {
        return Err(Error::MetricUndefined(String::from(
            "relative distance needs a labelled change point when detections exist",
        )));
    }
    let total: usize = p
        .iter()
        .map(|&x| truth.positions().iter().map(|&t| t.abs_diff(x)).min().unwrap())
        .sum();
    Ok(total as f64 / (truth.series_length() * p.len()) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    NabStandard,
    NabLowFp,
    NabLowFn,
    F1,
    Covering,
    Rcpd,
}

impl Metric {
    /// Report column order.
    pub const ALL: [Metric; 6] = [
        Metric::NabStandard,
        Metric::NabLowFp,
        Metric::NabLowFn,
        Metric::F1,
        Metric::Covering,
        Metric::Rcpd,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::NabStandard => "nab_standard",
            Metric::NabLowFp => "nab_lowfp",
            Metric::NabLowFn => "nab_lowfn",
            Metric::F1 => "f1",
            Metric::Covering => "covering",
            Metric::Rcpd => "rcpd",
        }
    }

    pub fn lower_is_better(self) -> bool {
        self == Metric::Rcpd
    }

    pub fn evaluate(
        self,
        truth: &ChangePointLabels,
        preds: &Detections,
        matching: MatchConfig,
        nab_cfg: &NabConfig,
    ) -> Result<f64> {
        match self {
            Metric::NabStandard => nab(truth, preds, &NabProfile::STANDARD, nab_cfg).map(|s| s.score),
            Metric::NabLowFp => nab(truth, preds, &NabProfile::LOW_FP, nab_cfg).map(|s| s.score),
            Metric::NabLowFn => nab(truth, preds, &NabProfile::LOW_FN, nab_cfg).map(|s| s.score),
            Metric::F1 => f1(truth, preds, matching).map(|s| s.f1),
            Metric::Covering => covering(truth, preds),
            Metric::Rcpd => rcpd(truth, preds),
        }
    }
}

/// Peak extraction settings shared by every threshold in a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakConfig {
    pub prominence: f64,
    pub min_distance: usize,
}

impl Default for PeakConfig {
    fn default() -> Self {
        Self {
            prominence: 0.0,
            min_distance: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BestThreshold {
    pub value: f64,
    /// `+inf` when the empty detection set wins.
    pub threshold: f64,
    pub detections: Detections,
}

/// Sweeps thresholds over the distinct peak heights plus `+inf` and keeps
/// the best value of `metric`; ties go to the higher threshold.
pub fn best_threshold_eval(
    scores: &ScoreSeries,
    truth: &ChangePointLabels,
    metric: Metric,
    peaks: PeakConfig,
    matching: MatchConfig,
    nab_cfg: &NabConfig,
) -> Result<BestThreshold> {
    if scores.len() != truth.series_length() {
        return Err(input_err!(
            "{} scores for labels over {} samples",
            scores.len(),
            truth.series_length()
        ));
    }
    let s = scores.scores();
    let candidates = candidate_peaks(s, peaks.prominence, peaks.min_distance);
    let mut thresholds: Vec<f64> = candidates.iter().map(|&i| s[i]).collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    thresholds.push(f64::INFINITY);

    let mut best: Option<BestThreshold> = None;
    for thr in thresholds {
        let positions: Vec<usize> = candidates.iter().copied().filter(|&i| s[i] >= thr).collect();
        let heights = positions.iter().map(|&i| s[i]).collect();
        let detections = Detections::new(positions, heights, s.len())?;
        let value = metric.evaluate(truth, &detections, matching, nab_cfg)?;
        let better = match &best {
            None => true,
            Some(b) if metric.lower_is_better() => value <= b.value,
            Some(b) => value >= b.value,
        };
        if better {
            best = Some(BestThreshold {
                value,
                threshold: thr,
                detections,
            });
        }
    }
    Ok(best.expect("the sweep always includes +inf"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scoring::prominence_peaks;
    use alloc::vec;

    fn labels(p: &[usize], t: usize) -> ChangePointLabels {
        ChangePointLabels::new(p.to_vec(), t).unwrap()
    }

    fn dets(p: &[usize], t: usize) -> Detections {
        Detections::from_positions(p.to_vec(), t).unwrap()
    }

    const M: MatchConfig = MatchConfig { margin: 5 };

    #[test]
    fn f1_examples() {
        let s = f1(&labels(&[100], 400), &dets(&[102], 400), M).unwrap();
        assert_eq!((s.precision, s.recall, s.f1), (1.0, 1.0, 1.0));
        assert_eq!(f1(&labels(&[100], 400), &dets(&[106], 400), M).unwrap().f1, 0.0);
        assert_eq!(f1(&labels(&[100], 400), &dets(&[105], 400), M).unwrap().f1, 0.0);
        let s = f1(&labels(&[100, 200], 400), &dets(&[101], 400), M).unwrap();
        assert_eq!((s.precision, s.recall), (1.0, 0.5));
        assert!((s.f1 - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn f1_conventions() {
        assert_eq!(f1(&labels(&[], 50), &dets(&[], 50), M).unwrap().f1, 1.0);
        assert_eq!(f1(&labels(&[10], 50), &dets(&[], 50), M).unwrap().f1, 0.0);
        assert_eq!(f1(&labels(&[], 50), &dets(&[10], 50), M).unwrap().f1, 0.0);
        assert!(f1(&labels(&[10], 50), &dets(&[10], 60), M).is_err());
    }

    #[test]
    fn one_prediction_cannot_serve_two_truths() {
        let s = f1(&labels(&[10, 12], 50), &dets(&[11], 50), M).unwrap();
        assert_eq!(s.recall, 0.5);
        // The first truth takes its nearest prediction, the second takes what is left.
        let s = f1(&labels(&[10, 14], 50), &dets(&[11, 16], 50), M).unwrap();
        assert_eq!(s.f1, 1.0);
    }

    #[test]
    fn covering_examples() {
        assert_eq!(covering(&labels(&[50], 100), &dets(&[50], 100)).unwrap(), 1.0);
        let c = covering(&labels(&[50], 100), &dets(&[60], 100)).unwrap();
        assert!((c - (0.5 * 50.0 / 60.0 + 0.5 * 40.0 / 50.0)).abs() < 1e-15);
        assert_eq!(covering(&labels(&[50], 100), &dets(&[], 100)).unwrap(), 0.5);
        assert_eq!(covering(&labels(&[], 100), &dets(&[], 100)).unwrap(), 1.0);
    }

    #[test]
    fn nab_perfect_and_null() {
        for profile in [NabProfile::STANDARD, NabProfile::LOW_FP, NabProfile::LOW_FN] {
            let truth = labels(&[100, 250], 400);
            let perfect = nab(&truth, &dets(&[100, 250], 400), &profile, &NabConfig::default()).unwrap();
            assert_eq!(perfect.score, 100.0);
            let null = nab(&truth, &dets(&[], 400), &profile, &NabConfig::default()).unwrap();
            assert_eq!(null.score, 0.0);
        }
    }

    #[test]
    fn nab_edge_detection_plus_false_positive() {
        // T = 400, one truth at 200: window = round(0.1 * 400) = 40, so [200, 240),
        // steepness 5/40. Detection at 239 is the TP, 300 is outside.
        let truth = labels(&[200], 400);
        let s = nab(&truth, &dets(&[239, 300], 400), &NabProfile::STANDARD, &NabConfig::default()).unwrap();
        let tp = 1.11 / (1.0 + (0.125f64 * 39.0).exp()) - 1.0;
        let raw = tp - 0.11;
        let perfect = 1.11 / 2.0 - 1.0;
        let null = -1.0;
        assert!((s.raw - raw).abs() < 1e-12);
        assert!((s.normalized - 100.0 * (raw - null) / (perfect - null)).abs() < 1e-10);
        assert_eq!(s.score, s.normalized.clamp(0.0, 100.0));
    }

    #[test]
    fn nab_early_detection_is_false_positive() {
        let truth = labels(&[200], 400);
        let s = nab(&truth, &dets(&[199], 400), &NabProfile::STANDARD, &NabConfig::default()).unwrap();
        assert!((s.raw - (-1.0 - 0.11)).abs() < 1e-12);
        assert_eq!(s.score, 0.0);
    }

    #[test]
    fn nab_needs_truths() {
        let r = nab(&labels(&[], 100), &dets(&[5], 100), &NabProfile::STANDARD, &NabConfig::default());
        assert!(matches!(r, Err(Error::MetricUndefined(_))));
    }

    #[test]
    fn rcpd_examples() {
        assert_eq!(rcpd(&labels(&[100], 200), &dets(&[100], 200)).unwrap(), 0.0);
        assert!((rcpd(&labels(&[100], 200), &dets(&[90, 120], 200)).unwrap() - 0.075).abs() < 1e-15);
        assert_eq!(rcpd(&labels(&[100], 200), &dets(&[], 200)).unwrap(), f64::INFINITY);
        assert!(matches!(
            rcpd(&labels(&[], 200), &dets(&[3], 200)),
            Err(Error::MetricUndefined(_))
        ));
    }

    fn sweep(scores: &[f64], truth: &ChangePointLabels, metric: Metric) -> BestThreshold {
        let s = ScoreSeries::new(scores.to_vec()).unwrap();
        best_threshold_eval(&s, truth, metric, PeakConfig::default(), M, &NabConfig::default()).unwrap()
    }

    #[test]
    fn sweep_isolates_dominant_peak() {
        let mut scores = vec![0.0; 100];
        scores[50] = 10.0;
        scores[20] = 1.0;
        let truth = labels(&[50], 100);
        let best = sweep(&scores, &truth, Metric::F1);
        assert_eq!(best.value, 1.0);
        assert_eq!(best.detections.positions(), &[50]);
        assert_eq!(best.threshold, 10.0);
    }

    #[test]
    fn sweep_on_constant_scores() {
        let truth = labels(&[50], 100);
        let best = sweep(&[0.0; 100], &truth, Metric::F1);
        assert_eq!(best.value, 0.0);
        assert!(best.detections.positions().is_empty());
        assert_eq!(sweep(&[0.0; 100], &truth, Metric::Rcpd).value, f64::INFINITY);
    }

    #[test]
    fn sweep_excludes_spurious_lower_peak() {
        let mut scores = vec![0.0; 100];
        scores[30] = 4.0;
        scores[70] = 6.0;
        let truth = labels(&[70], 100);
        // Thresholds: 4 -> {30, 70} F1 2/3; 6 -> {70} F1 1; inf -> {} F1 0.
        let best = sweep(&scores, &truth, Metric::F1);
        assert_eq!((best.value, best.threshold), (1.0, 6.0));
        let best = sweep(&scores, &truth, Metric::Rcpd);
        assert_eq!((best.value, best.detections.positions()), (0.0, &[70usize][..]));
    }

    #[test]
    fn sweep_ties_prefer_higher_threshold() {
        let mut scores = vec![0.0; 100];
        scores[50] = 6.0;
        scores[52] = 4.0;
        let truth = labels(&[50], 100);
        // {50, 52} scores F1 2/3 and {50} scores 1.
        let best = sweep(&scores, &truth, Metric::F1);
        assert_eq!(best.threshold, 6.0);
        // Constant scores: every threshold gives F1 0, +inf wins the tie.
        assert_eq!(sweep(&[1.0; 10], &labels(&[5], 10), Metric::F1).threshold, f64::INFINITY);
    }

    #[test]
    fn sweep_matches_direct_peak_extraction() {
        let scores = [0.0, 2.0, 1.0, 3.0, 0.5, 3.0, 0.0, 1.5, 1.0, 0.0];
        let s = ScoreSeries::new(scores.to_vec()).unwrap();
        let truth = labels(&[3], 10);
        let best = best_threshold_eval(&s, &truth, Metric::F1, PeakConfig::default(), M, &NabConfig::default()).unwrap();
        let direct = prominence_peaks(&s, best.threshold, 0.0, 1);
        assert_eq!(best.detections, direct);
    }
}
