//! File formats: series CSV, JSON documents (labels, scores, detections,
//! models, configs) and the training loss CSV.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use cpd_sde_core::autodiff::{Linear, Mlp};
use cpd_sde_core::preprocess::PreprocessConfig;
use cpd_sde_core::sde::{LatentSdeModel, SdeConfig};
use cpd_sde_core::TimeSeries;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Writes `bytes` to a sibling temporary file and renames it into place, so
/// a failed command never leaves a truncated artifact behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = Path::new(&tmp);
    fs::write(tmp, bytes).map_err(|e| CliError::io(tmp, e))?;
    fs::rename(tmp, path).map_err(|e| CliError::io(path, e))
}

fn is_time_header(name: &str) -> bool {
    let n = name.trim();
    n.eq_ignore_ascii_case("t") || n.eq_ignore_ascii_case("time")
}

/// Parses a series from CSV text. A header row is required; a first column
/// named `t` or `time` must be strictly increasing and is dropped, its mean
/// spacing becoming the series `dt`.
pub fn read_csv<R: Read>(reader: R, origin: &Path) -> Result<TimeSeries> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| CliError::csv(origin, e))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let has_time = headers.first().is_some_and(|h| is_time_header(h));
    let skip = usize::from(has_time);
    let names: Vec<String> = headers[skip..].to_vec();
    if names.is_empty() {
        return Err(CliError::Input(format!("{}: no data columns", origin.display())));
    }
    let mut values = Vec::new();
    let mut times = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| CliError::csv(origin, e))?;
        let line = r + 2;
        for (c, cell) in record.iter().enumerate() {
            let parsed: f64 = cell.trim().parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| {
                CliError::Input(format!(
                    "{}: line {line}, column '{}': '{cell}' is not a finite number",
                    origin.display(),
                    headers[c]
                ))
            })?;
            if c < skip {
                times.push(parsed);
            } else {
                values.push(parsed);
            }
        }
    }
    if let Some(i) = times.windows(2).position(|w| w[1] <= w[0]) {
        return Err(CliError::Input(format!(
            "{}: time column is not strictly increasing at line {}",
            origin.display(),
            i + 3
        )));
    }
    let dt = if times.len() >= 2 {
        (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64
    } else {
        1.0
    };
    TimeSeries::with_dt(values, names, dt).map_err(|e| CliError::Input(format!("{}: {e}", origin.display())))
}

pub fn load_csv(path: &Path) -> Result<TimeSeries> {
    let file = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    read_csv(file, path)
}

/// Header of channel names, one row per timestamp. Floats use the shortest
/// text that parses back to the identical value.
pub fn write_csv<W: Write>(writer: W, series: &TimeSeries) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(series.channel_names())?;
    for t in 0..series.len() {
        w.write_record(series.row(t).iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_csv(path: &Path, series: &TimeSeries) -> Result<()> {
    let mut buf = Vec::new();
    write_csv(&mut buf, series).map_err(|e| CliError::csv(path, e))?;
    write_atomic(path, &buf)
}

pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::json(path, e))
}

pub fn to_json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("in-memory serialization");
    bytes.push(b'\n');
    bytes
}

pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, &to_json_bytes(value))
}

/// `epoch,neg_elbo` rows, epochs counted from 0.
pub fn loss_history_bytes(losses: &[f64]) -> Vec<u8> {
    let mut out = String::from("epoch,neg_elbo\n");
    for (e, l) in losses.iter().enumerate() {
        out.push_str(&format!("{e},{l}\n"));
    }
    out.into_bytes()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub encoder: Linear,
    pub decoder: Linear,
    pub drift: Mlp,
}

/// A trained model with the preprocessing it was trained under and the
/// training seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub sde_cfg: SdeConfig,
    pub preprocess: PreprocessConfig,
    pub params: ModelParams,
    pub seed: u64,
}

impl ModelFile {
    pub fn new(model: &LatentSdeModel, preprocess: &PreprocessConfig, seed: u64) -> Self {
        Self {
            sde_cfg: model.config.clone(),
            preprocess: preprocess.clone(),
            params: ModelParams {
                encoder: model.encoder.clone(),
                decoder: model.decoder.clone(),
                drift: model.drift.clone(),
            },
            seed,
        }
    }

    pub fn model(&self) -> Result<LatentSdeModel> {
        let p = self.params.clone();
        Ok(LatentSdeModel::from_parts(self.sde_cfg.clone(), p.encoder, p.decoder, p.drift)?)
    }
}
