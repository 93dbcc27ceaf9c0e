//! Train, score and evaluate every (dataset, seed) pair of a corpus on a
//! bounded worker pool, then write the run tables.

use std::fs;
use std::path::Path;

use cpd_sde_core::metrics::Metric;
use cpd_sde_core::preprocess::augment;
use cpd_sde_core::scoring::score_augmented;
use cpd_sde_core::sde::{train_with_callback, LatentSdeModel};
use cpd_sde_core::{ChangePointLabels, ScoreSeries, TimeSeries};
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::io::{load_csv, load_json, write_atomic};
use crate::report::{aggregate_csv, evaluate, per_dataset_csv, rows_csv, EvalRow};

/// Environment variable capping the worker pool size.
pub const THREADS_ENV: &str = "CPD_SDE_THREADS";

/// A labelled series to run on.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub series: TimeSeries,
    pub labels: ChangePointLabels,
}

#[derive(Debug, Clone)]
pub struct JobOutput {
    pub row: EvalRow,
    pub scores: ScoreSeries,
}

#[derive(Debug)]
pub struct JobFailure {
    pub dataset: String,
    pub seed: u64,
    pub error: CliError,
}

/// Results in (dataset, seed) order.
#[derive(Debug, Default)]
pub struct CorpusOutcome {
    pub outputs: Vec<JobOutput>,
    pub failures: Vec<JobFailure>,
}

/// Score the trained model and evaluate every metric at its best threshold.
fn score_and_evaluate(
    ds: &Dataset,
    seed: u64,
    model: &LatentSdeModel,
    augmented: &cpd_sde_core::preprocess::Augmented,
    cfg: &RunConfig,
) -> Result<JobOutput> {
    let out = score_augmented(augmented.clone(), model, &cfg.score, seed)?;
    let row = evaluate(&ds.name, Some(seed), &out.scores, &ds.labels, cfg)?;
    Ok(JobOutput {
        row,
        scores: out.scores,
    })
}

/// One training run and its evaluation. With best-epoch tracking, every
/// metric keeps its best value over the per-epoch evaluations.
pub fn run_job(ds: &Dataset, seed: u64, cfg: &RunConfig) -> Result<JobOutput> {
    let augmented = augment(&ds.series, &cfg.preprocess)?;
    let sde = cfg
        .sde
        .resolve(augmented.series.dim(), cfg.preprocess.n_pos_encodings);
    let train_cfg = cfg.train.resolve(seed);

    let mut best: Option<JobOutput> = None;
    let mut epoch_error: Option<CliError> = None;
    let outcome = train_with_callback(&augmented.series, &sde, &train_cfg, |_, model, _| {
        if !cfg.runner.track_best_epoch || epoch_error.is_some() {
            return;
        }
        match score_and_evaluate(ds, seed, model, &augmented, cfg) {
            Ok(out) => best = Some(merge_best(best.take(), out)),
            Err(e) => epoch_error = Some(e),
        }
    })?;
    if let Some(e) = epoch_error {
        return Err(e);
    }
    let last = score_and_evaluate(ds, seed, &outcome.model, &augmented, cfg)?;
    Ok(match best {
        Some(b) => merge_best(Some(b), last),
        None => last,
    })
}

/// Metric-wise best of two evaluations; the scores of `current` are kept
/// when it wins the F1 column, otherwise those of `prev`.
fn merge_best(prev: Option<JobOutput>, current: JobOutput) -> JobOutput {
    let Some(mut prev) = prev else {
        return current;
    };
    for (k, metric) in Metric::ALL.into_iter().enumerate() {
        let (a, b) = (prev.row.values[k], current.row.values[k]);
        let better = if metric.lower_is_better() { b < a } else { b > a };
        if better {
            prev.row.values[k] = b;
            prev.row.thresholds[k] = current.row.thresholds[k];
            if metric == Metric::F1 {
                prev.scores = current.scores.clone();
            }
        }
    }
    prev
}

/// Worker count from [`THREADS_ENV`], if set to a positive integer.
pub fn thread_cap() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Input(format!("{THREADS_ENV} must be a positive integer, got '{v}'"))),
        },
    }
}

pub fn run_corpus(datasets: &[Dataset], cfg: &RunConfig, threads: Option<usize>) -> Result<CorpusOutcome> {
    let jobs: Vec<(&Dataset, u64)> = datasets
        .iter()
        .flat_map(|d| cfg.seeds.iter().map(move |&s| (d, s)))
        .collect();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Input(format!("cannot start worker pool: {e}")))?;
    let results: Vec<Result<JobOutput>> = pool.install(|| jobs.par_iter().map(|&(d, s)| run_job(d, s, cfg)).collect());
    let mut outcome = CorpusOutcome::default();
    for ((d, seed), r) in jobs.into_iter().zip(results) {
        match r {
            Ok(out) => outcome.outputs.push(out),
            Err(error) => outcome.failures.push(JobFailure {
                dataset: d.name.clone(),
                seed,
                error,
            }),
        }
    }
    Ok(outcome)
}

/// Reads a corpus directory written by `generate`: one subdirectory per
/// dataset holding `series.csv` and `labels.json`, taken in name order.
pub fn load_corpus_dir(dir: &Path) -> Result<Vec<Dataset>> {
    let mut entries: Vec<_> = fs::read_dir(dir)
        .map_err(|e| CliError::io(dir, e))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.join("series.csv").is_file())
        .collect();
    entries.sort_by_key(|p| {
        let name = p.file_name().unwrap_or_default().to_string_lossy().to_string();
        let index = name.split('_').next().and_then(|i| i.parse::<usize>().ok());
        (index.unwrap_or(usize::MAX), name)
    });
    if entries.is_empty() {
        return Err(CliError::Input(format!("{}: no datasets found", dir.display())));
    }
    entries
        .into_iter()
        .map(|p| {
            let series = load_csv(&p.join("series.csv"))?;
            let labels: ChangePointLabels = load_json(&p.join("labels.json"))?;
            if labels.series_length() != series.len() {
                return Err(CliError::Input(format!(
                    "{}: labels cover {} samples, series has {}",
                    p.display(),
                    labels.series_length(),
                    series.len()
                )));
            }
            Ok(Dataset {
                name: p.file_name().unwrap_or_default().to_string_lossy().to_string(),
                series,
                labels,
            })
        })
        .collect()
}

/// `t`, the signal channels and the score, for external plotting.
pub fn plot_csv(series: &TimeSeries, scores: &ScoreSeries) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut head = vec!["t".to_string()];
    head.extend(series.channel_names().iter().cloned());
    head.push("score".to_string());
    w.write_record(&head).expect("in-memory write");
    for t in 0..series.len() {
        let mut rec = vec![t.to_string()];
        rec.extend(series.row(t).iter().map(f64::to_string));
        rec.push(scores.scores()[t].to_string());
        w.write_record(&rec).expect("in-memory write");
    }
    w.into_inner().expect("in-memory write")
}

/// Writes `runs.csv`, `aggregate.csv`, `tables/<metric>.csv`,
/// `plots/<dataset>_seed<seed>.csv` and `failures.csv` under `out`.
pub fn write_outputs(out: &Path, datasets: &[Dataset], outcome: &CorpusOutcome) -> Result<()> {
    let rows: Vec<EvalRow> = outcome.outputs.iter().map(|o| o.row.clone()).collect();
    write_atomic(&out.join("runs.csv"), &rows_csv(&rows))?;
    if !rows.is_empty() {
        write_atomic(&out.join("aggregate.csv"), &aggregate_csv(&rows))?;
        for metric in Metric::ALL {
            write_atomic(
                &out.join("tables").join(format!("{}.csv", metric.name())),
                &per_dataset_csv(&rows, metric),
            )?;
        }
    }
    for o in &outcome.outputs {
        let ds = datasets
            .iter()
            .find(|d| d.name == o.row.dataset)
            .expect("outputs come from these datasets");
        let seed = o.row.seed.unwrap_or_default();
        write_atomic(
            &out.join("plots").join(format!("{}_seed{seed}.csv", ds.name)),
            &plot_csv(&ds.series, &o.scores),
        )?;
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["dataset", "seed", "exit_code", "error"]).expect("in-memory write");
    for f in &outcome.failures {
        w.write_record([
            f.dataset.clone(),
            f.seed.to_string(),
            f.error.exit_code().to_string(),
            f.error.to_string(),
        ])
        .expect("in-memory write");
    }
    write_atomic(&out.join("failures.csv"), &w.into_inner().expect("in-memory write"))
}
