//! Best-threshold evaluation rows and the tables built from them.

use cpd_sde_core::metrics::{best_threshold_eval, Metric, PeakConfig};
use cpd_sde_core::{ChangePointLabels, ScoreSeries};

use crate::config::RunConfig;
use crate::error::Result;

/// Every metric at its own best threshold for one scored series.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub dataset: String,
    pub seed: Option<u64>,
    /// In [`Metric::ALL`] order.
    pub values: [f64; 6],
    pub thresholds: [f64; 6],
}

pub fn evaluate(
    dataset: &str,
    seed: Option<u64>,
    scores: &ScoreSeries,
    labels: &ChangePointLabels,
    cfg: &RunConfig,
) -> Result<EvalRow> {
    let peaks = evaluation_peaks(scores, cfg);
    let mut values = [0.0; 6];
    let mut thresholds = [0.0; 6];
    for (k, metric) in Metric::ALL.into_iter().enumerate() {
        let best = best_threshold_eval(scores, labels, metric, peaks, cfg.matching, &cfg.nab)?;
        values[k] = best.value;
        thresholds[k] = best.threshold;
    }
    Ok(EvalRow {
        dataset: dataset.to_string(),
        seed,
        values,
        thresholds,
    })
}

/// Peak settings for one series: the configured ones, with the prominence
/// floor raised by the relative rule when it is enabled.
pub fn evaluation_peaks(scores: &ScoreSeries, cfg: &RunConfig) -> PeakConfig {
    let mut peaks = cfg.peaks();
    if let (Some(f), false) = (cfg.runner.relative_prominence, scores.is_empty()) {
        let mut sorted = scores.scores().to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let median = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
        };
        peaks.prominence = peaks.prominence.max(f * (sorted[n - 1] - median));
    }
    peaks
}

pub fn header() -> Vec<String> {
    let mut h = vec!["dataset".to_string(), "seed".to_string()];
    h.extend(Metric::ALL.iter().map(|m| m.name().to_string()));
    h.extend(Metric::ALL.iter().map(|m| format!("threshold_{}", m.name())));
    h
}

impl EvalRow {
    pub fn record(&self) -> Vec<String> {
        let mut r = vec![
            self.dataset.clone(),
            self.seed.map_or_else(String::new, |s| s.to_string()),
        ];
        r.extend(self.values.iter().map(f64::to_string));
        r.extend(self.thresholds.iter().map(f64::to_string));
        r
    }
}

pub fn rows_csv(rows: &[EvalRow]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header()).expect("in-memory write");
    for row in rows {
        w.write_record(row.record()).expect("in-memory write");
    }
    w.into_inner().expect("in-memory write")
}

/// Mean and population standard deviation (zero for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.iter().any(|v| v.is_infinite()) {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// `statistic` rows `mean` and `std` over all rows, one column per metric.
pub fn aggregate_csv(rows: &[EvalRow]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut head = vec!["statistic".to_string()];
    head.extend(Metric::ALL.iter().map(|m| m.name().to_string()));
    w.write_record(&head).expect("in-memory write");
    let stats: Vec<(f64, f64)> = (0..6)
        .map(|k| mean_std(&rows.iter().map(|r| r.values[k]).collect::<Vec<_>>()))
        .collect();
    for (label, pick) in [("mean", 0usize), ("std", 1)] {
        let mut rec = vec![label.to_string()];
        rec.extend(stats.iter().map(|s| if pick == 0 { s.0 } else { s.1 }.to_string()));
        w.write_record(&rec).expect("in-memory write");
    }
    w.into_inner().expect("in-memory write")
}

/// One row per dataset (in first-appearance order) with the mean and std of
/// `metric` over its seeds.
pub fn per_dataset_csv(rows: &[EvalRow], metric: Metric) -> Vec<u8> {
    let k = Metric::ALL.iter().position(|&m| m == metric).expect("known metric");
    let mut order: Vec<&str> = Vec::new();
    for r in rows {
        if !order.contains(&r.dataset.as_str()) {
            order.push(&r.dataset);
        }
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["dataset", "mean", "std"]).expect("in-memory write");
    for name in order {
        let vals: Vec<f64> = rows.iter().filter(|r| r.dataset == name).map(|r| r.values[k]).collect();
        let (m, s) = mean_std(&vals);
        w.write_record([name.to_string(), m.to_string(), s.to_string()])
            .expect("in-memory write");
    }
    w.into_inner().expect("in-memory write")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_std_of_one_value_has_zero_spread() {
        assert_eq!(mean_std(&[0.7]), (0.7, 0.0));
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!((m, s), (2.0, 1.0));
        let (m, s) = mean_std(&[1.0, f64::INFINITY]);
        assert!(m.is_infinite() && s.is_nan());
    }

    #[test]
    fn relative_prominence_uses_max_minus_median() {
        let mut cfg = RunConfig::default();
        let s = ScoreSeries::new(vec![0.0, 4.0, 1.0, 2.0, 1.0]).unwrap();
        assert_eq!(evaluation_peaks(&s, &cfg).prominence, 1.5);
        cfg.score.prominence = 2.0;
        assert_eq!(evaluation_peaks(&s, &cfg).prominence, 2.0);
        cfg.runner.relative_prominence = None;
        cfg.score.prominence = 0.0;
        assert_eq!(evaluation_peaks(&s, &cfg).prominence, 0.0);
    }
}
