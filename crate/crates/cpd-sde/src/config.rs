//! The JSON run configuration shared by every command.

use std::path::{Path, PathBuf};

use cpd_sde_core::metrics::{MatchConfig, NabConfig, PeakConfig};
use cpd_sde_core::preprocess::PreprocessConfig;
use cpd_sde_core::scoring::ScoreConfig;
use cpd_sde_core::sde::{SdeConfig, TrainConfig};
use cpd_sde_core::synth::{CorpusParams, CORPUS_ROWS};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::io::load_json;

/// Model settings; the observation dimension comes from the data and the
/// positional-encoding width from the preprocessing section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SdeSettings {
    pub latent_dim: usize,
    pub hidden: usize,
    pub diffusion_const: f64,
    pub obs_variance_c: f64,
    pub dt: f64,
    pub substeps: usize,
}

impl Default for SdeSettings {
    fn default() -> Self {
        let d = SdeConfig::default();
        Self {
            latent_dim: d.latent_dim,
            hidden: d.hidden,
            diffusion_const: d.diffusion_const,
            obs_variance_c: d.obs_variance_c,
            dt: d.dt,
            substeps: d.substeps,
        }
    }
}

impl SdeSettings {
    pub fn resolve(&self, obs_dim: usize, n_pos_encodings: usize) -> SdeConfig {
        SdeConfig {
            obs_dim,
            latent_dim: self.latent_dim,
            hidden: self.hidden,
            n_pos_encodings,
            diffusion_const: self.diffusion_const,
            obs_variance_c: self.obs_variance_c,
            dt: self.dt,
            substeps: self.substeps,
        }
    }
}

/// Optimizer settings; the seed comes from the run's seed list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub grad_clip: Option<f64>,
}

impl Default for TrainSettings {
    fn default() -> Self {
        let d = TrainConfig::default();
        Self {
            epochs: d.epochs,
            batch: d.batch,
            lr: d.lr,
            grad_clip: d.grad_clip,
        }
    }
}

impl TrainSettings {
    pub fn resolve(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch: self.batch,
            lr: self.lr,
            seed,
            grad_clip: self.grad_clip,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSettings {
    pub seed: u64,
    pub length: usize,
    pub rows: Vec<usize>,
    pub params: CorpusParams,
}

impl Default for CorpusSettings {
    fn default() -> Self {
        Self {
            seed: 0,
            length: 400,
            rows: (1..=CORPUS_ROWS).collect(),
            params: CorpusParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunnerSettings {
    /// Evaluate after every epoch and keep each metric's best value.
    pub track_best_epoch: bool,
    /// During evaluation the minimum peak prominence is raised to this
    /// fraction of `max - median` of each score series.
    pub relative_prominence: Option<f64>,
}

impl Default for RunnerSettings {
    fn default() -> Self {
        Self {
            track_best_epoch: false,
            relative_prominence: Some(0.5),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathSettings {
    /// Existing corpus directory for `run-corpus`; generated in memory when unset.
    pub corpus_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub preprocess: PreprocessConfig,
    pub sde: SdeSettings,
    pub train: TrainSettings,
    pub score: ScoreConfig,
    pub nab: NabConfig,
    #[serde(rename = "match")]
    pub matching: MatchConfig,
    pub seeds: Vec<u64>,
    pub corpus: CorpusSettings,
    pub runner: RunnerSettings,
    pub paths: PathSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            preprocess: PreprocessConfig::default(),
            sde: SdeSettings::default(),
            train: TrainSettings::default(),
            score: ScoreConfig::default(),
            nab: NabConfig::default(),
            matching: MatchConfig::default(),
            seeds: (0..5).collect(),
            corpus: CorpusSettings::default(),
            runner: RunnerSettings::default(),
            paths: PathSettings::default(),
        }
    }
}

/// Named overrides applied on top of a config file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Profile {
    /// Defaults sized for one CPU core: 32 trajectories per ELBO estimate.
    #[default]
    Desk,
    /// 512 trajectories per ELBO estimate.
    Paper,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let cfg: Self = load_json(path)?;
        cfg.validate()
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        Ok(cfg)
    }

    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    pub fn apply_profile(&mut self, profile: Profile) {
        if profile == Profile::Paper {
            self.train.batch = 512;
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.preprocess.validate()?;
        self.sde.resolve(1, self.preprocess.n_pos_encodings).validate()?;
        self.train.resolve(0).validate()?;
        self.score.validate()?;
        self.nab.validate()?;
        if self.seeds.is_empty() {
            return Err(CliError::Input("seeds must not be empty".into()));
        }
        if let Some(f) = self.runner.relative_prominence {
            if !(f.is_finite() && f >= 0.0) {
                return Err(CliError::Input("runner.relative_prominence must be a nonnegative number".into()));
            }
        }
        if self.corpus.rows.iter().any(|r| !(1..=CORPUS_ROWS).contains(r)) {
            return Err(CliError::Input(format!("corpus rows must lie in 1..={CORPUS_ROWS}")));
        }
        Ok(())
    }

    pub fn peaks(&self) -> PeakConfig {
        PeakConfig {
            prominence: self.score.prominence,
            min_distance: self.score.min_peak_distance,
        }
    }
}
