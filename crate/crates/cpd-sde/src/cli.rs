//! Command-line interface: `generate`, `train`, `score`, `evaluate` and
//! `run-corpus`.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use cpd_sde_core::preprocess::augment;
use cpd_sde_core::scoring::score_augmented;
use cpd_sde_core::sde::train;
use cpd_sde_core::synth::{corpus_row, SyntheticDataset, CORPUS_ROWS};
use cpd_sde_core::{ChangePointLabels, ScoreSeries};
use serde::Serialize;

use crate::config::{Profile, RunConfig};
use crate::error::{CliError, Result};
use crate::io::{load_csv, load_json, loss_history_bytes, save_json, to_json_bytes, write_atomic, write_csv, ModelFile};
use crate::report::{evaluate, rows_csv};
use crate::runner::{load_corpus_dir, run_corpus, thread_cap, write_outputs, Dataset};

#[derive(Debug, Parser)]
#[command(name = "cpd-sde", version, about = "Change point detection with latent neural SDEs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the synthetic benchmark corpus.
    Generate(GenerateArgs),
    /// Fit a model to one series.
    Train(TrainArgs),
    /// Score a series with a trained model.
    Score(ScoreArgs),
    /// Evaluate scores against labels at each metric's best threshold.
    Evaluate(EvaluateArgs),
    /// Train, score and evaluate every corpus dataset for every seed.
    RunCorpus(RunCorpusArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Corpus rows to write (1-13), comma separated; all by default.
    #[arg(long, value_delimiter = ',')]
    pub rows: Vec<usize>,
    #[arg(long, default_value_t = 400)]
    pub length: usize,
}

#[derive(Debug, Args)]
pub struct ProfileArg {
    #[arg(long, value_enum, default_value_t = Profile::Desk)]
    pub profile: Profile,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Loss history CSV; defaults to the model path with a `.loss.csv` suffix.
    #[arg(long)]
    pub loss: Option<PathBuf>,
    /// Training seed; defaults to the first seed of the config.
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub profile: ProfileArg,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub detections: Option<PathBuf>,
    /// Scoring settings come from the `score` section.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Sampling seed; defaults to the model's training seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Dataset column value; defaults to the scores file stem.
    #[arg(long)]
    pub name: Option<String>,
}

#[derive(Debug, Args)]
pub struct RunCorpusArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Existing corpus directory; the corpus is generated from the config otherwise.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Overrides the config's seed list.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Vec<u64>,
    #[command(flatten)]
    pub profile: ProfileArg,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(a) => generate(&a),
        Command::Train(a) => train_cmd(&a),
        Command::Score(a) => score_cmd(&a),
        Command::Evaluate(a) => evaluate_cmd(&a),
        Command::RunCorpus(a) => run_corpus_cmd(&a),
    }
}

#[derive(Serialize)]
struct DatasetParams<'a> {
    index: usize,
    name: &'a str,
    cp_type: cpd_sde_core::synth::CpType,
    seed: u64,
    length: usize,
    effects: &'a cpd_sde_core::synth::CorpusParams,
    segments: &'a [cpd_sde_core::synth::SegmentSpec],
}

fn build_corpus(seed: u64, rows: &[usize], length: usize, cfg: &RunConfig) -> Result<Vec<SyntheticDataset>> {
    let rows: Vec<usize> = if rows.is_empty() {
        (1..=CORPUS_ROWS).collect()
    } else {
        rows.to_vec()
    };
    rows.iter()
        .map(|&r| Ok(corpus_row(r, seed, length, &cfg.corpus.params)?))
        .collect()
}

fn generate(a: &GenerateArgs) -> Result<()> {
    let cfg = RunConfig::default();
    let datasets = build_corpus(a.seed, &a.rows, a.length, &cfg)?;
    for d in &datasets {
        let dir = a.out.join(d.dir_name());
        let mut csv = Vec::new();
        write_csv(&mut csv, &d.series).map_err(|e| CliError::csv(&dir, e))?;
        write_atomic(&dir.join("series.csv"), &csv)?;
        save_json(&dir.join("labels.json"), &d.labels)?;
        let params = DatasetParams {
            index: d.index,
            name: &d.name,
            cp_type: d.cp_type,
            seed: d.seed,
            length: d.series.len(),
            effects: &cfg.corpus.params,
            segments: &d.segments,
        };
        save_json(&dir.join("params.json"), &params)?;
    }
    Ok(())
}

fn default_loss_path(model: &Path) -> PathBuf {
    let mut s = model.as_os_str().to_owned();
    s.push(".loss.csv");
    PathBuf::from(s)
}

fn train_cmd(a: &TrainArgs) -> Result<()> {
    let mut cfg = RunConfig::load_or_default(a.config.as_deref())?;
    cfg.apply_profile(a.profile.profile);
    let series = load_csv(&a.data)?;
    let seed = a.seed.unwrap_or(cfg.seeds[0]);
    let augmented = augment(&series, &cfg.preprocess)?;
    let sde = cfg
        .sde
        .resolve(augmented.series.dim(), cfg.preprocess.n_pos_encodings);
    let outcome = train(&augmented.series, &sde, &cfg.train.resolve(seed))?;
    let file = ModelFile::new(&outcome.model, &cfg.preprocess, seed);
    // Both artifacts are produced before either is written.
    let model_bytes = to_json_bytes(&file);
    let loss_bytes = loss_history_bytes(&outcome.loss_history);
    write_atomic(&a.out, &model_bytes)?;
    write_atomic(&a.loss.clone().unwrap_or_else(|| default_loss_path(&a.out)), &loss_bytes)
}

fn score_cmd(a: &ScoreArgs) -> Result<()> {
    let cfg = RunConfig::load_or_default(a.config.as_deref())?;
    let series = load_csv(&a.data)?;
    let file: ModelFile = load_json(&a.model)?;
    let model = file.model()?;
    let augmented = augment(&series, &file.preprocess)?;
    if augmented.series.dim() != model.config.obs_dim {
        return Err(CliError::Input(format!(
            "series preprocesses to {} channels but the model expects {}",
            augmented.series.dim(),
            model.config.obs_dim
        )));
    }
    let out = score_augmented(augmented, &model, &cfg.score, a.seed.unwrap_or(file.seed))?;
    let score_bytes = to_json_bytes(&out.scores);
    let det_bytes = to_json_bytes(&out.detections);
    write_atomic(&a.out, &score_bytes)?;
    if let Some(path) = &a.detections {
        write_atomic(path, &det_bytes)?;
    }
    Ok(())
}

fn evaluate_cmd(a: &EvaluateArgs) -> Result<()> {
    let cfg = RunConfig::load_or_default(a.config.as_deref())?;
    let scores: ScoreSeries = load_json(&a.scores)?;
    let labels: ChangePointLabels = load_json(&a.labels)?;
    if scores.len() != labels.series_length() {
        return Err(CliError::Input(format!(
            "{} scores but labels cover {} samples",
            scores.len(),
            labels.series_length()
        )));
    }
    let name = a.name.clone().unwrap_or_else(|| {
        a.scores
            .file_stem()
            .map_or_else(String::new, |s| s.to_string_lossy().to_string())
    });
    let row = evaluate(&name, None, &scores, &labels, &cfg)?;
    write_atomic(&a.out, &rows_csv(&[row]))
}

fn run_corpus_cmd(a: &RunCorpusArgs) -> Result<()> {
    let mut cfg = RunConfig::load_or_default(a.config.as_deref())?;
    cfg.apply_profile(a.profile.profile);
    if !a.seeds.is_empty() {
        cfg.seeds = a.seeds.clone();
    }
    let out = a
        .out
        .clone()
        .or_else(|| cfg.paths.out_dir.clone())
        .ok_or_else(|| CliError::Input("no output directory: pass --out or set paths.out_dir".into()))?;
    let threads = thread_cap()?;
    let datasets = match a.corpus.clone().or_else(|| cfg.paths.corpus_dir.clone()) {
        Some(dir) => load_corpus_dir(&dir)?,
        None => build_corpus(cfg.corpus.seed, &cfg.corpus.rows, cfg.corpus.length, &cfg)?
            .into_iter()
            .map(|d| Dataset {
                name: d.dir_name(),
                series: d.series,
                labels: d.labels,
            })
            .collect(),
    };
    let outcome = run_corpus(&datasets, &cfg, threads)?;
    write_outputs(&out, &datasets, &outcome)?;
    if outcome.failures.is_empty() {
        return Ok(());
    }
    let numerical = outcome.failures.iter().all(|f| f.error.exit_code() == 3);
    Err(CliError::CorpusFailures {
        failed: outcome.failures.len(),
        total: outcome.failures.len() + outcome.outputs.len(),
        numerical,
    })
}
