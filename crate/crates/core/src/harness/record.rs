use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::config::Track;
use crate::error::{Error, Result};

/// One grid cell's outcome. Serialized as one JSON object per line; every
/// header field is always present (null when it does not apply).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub track: Track,
    pub dataset: String,
    pub attack: Option<String>,
    pub defense: Option<String>,
    pub config_index: usize,
    pub sweep_point: BTreeMap<String, Value>,
    pub budget_multiplier: Option<f64>,
    pub realized_nodes: Option<usize>,
    pub realized_fraction: Option<f64>,
    pub regime: Option<String>,
    pub x_ratio: Option<f64>,
    pub a_ratio: Option<f64>,
    pub seed: u64,
    pub target_backbone: String,
    pub surrogate_backbone: Option<String>,

    pub accuracy: Option<f64>,
    pub macro_f1: Option<f64>,
    /// Macro-averaged.
    pub precision: Option<f64>,
    /// Macro-averaged.
    pub recall: Option<f64>,
    pub fidelity: Option<f64>,
    pub verification_rate: Option<f64>,
    pub survival_rate: Option<f64>,
    pub baseline_accuracy: Option<f64>,
    pub utility_drop: Option<f64>,
    pub queries_used: Option<usize>,
    pub budget_limit: Option<usize>,
    pub detector_tripped: Option<bool>,

    pub target_train_time: f64,
    pub query_time: f64,
    pub surrogate_train_time: f64,
    pub total_time: f64,
    pub gpu_peak_memory_mb: Option<f64>,

    pub error: Option<String>,
    pub notes: Vec<String>,
}

const TIMING_FIELDS: [&str; 5] = [
    "target_train_time",
    "query_time",
    "surrogate_train_time",
    "total_time",
    "gpu_peak_memory_mb",
];

impl RunRecord {
    pub fn blank(track: Track, dataset: &str, seed: u64, target_backbone: &str) -> Self {
        Self {
            track,
            dataset: dataset.into(),
            attack: None,
            defense: None,
            config_index: 0,
            sweep_point: BTreeMap::new(),
            budget_multiplier: None,
            realized_nodes: None,
            realized_fraction: None,
            regime: None,
            x_ratio: None,
            a_ratio: None,
            seed,
            target_backbone: target_backbone.into(),
            surrogate_backbone: None,
            accuracy: None,
            macro_f1: None,
            precision: None,
            recall: None,
            fidelity: None,
            verification_rate: None,
            survival_rate: None,
            baseline_accuracy: None,
            utility_drop: None,
            queries_used: None,
            budget_limit: None,
            detector_tripped: None,
            target_train_time: 0.0,
            query_time: 0.0,
            surrogate_train_time: 0.0,
            total_time: 0.0,
            gpu_peak_memory_mb: None,
            error: None,
            notes: Vec::new(),
        }
    }

    pub fn is_error(&self) -> bool {
        self.error.is_some()
    }

    /// The record as JSON without wall-clock fields; equal across reruns of
    /// the same config and root seed.
    pub fn metric_fields(&self) -> Result<String> {
        let mut v = serde_json::to_value(self)?;
        if let Value::Object(map) = &mut v {
            for k in TIMING_FIELDS {
                map.remove(k);
            }
        }
        Ok(serde_json::to_string(&v)?)
    }
}

pub fn write_jsonl(records: &[RunRecord], w: impl Write) -> Result<()> {
    let mut w = BufWriter::new(w);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_jsonl(r: impl std::io::Read) -> Result<Vec<RunRecord>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(r).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line)
            .map_err(|e| Error::Format(format!("record line {}: {e}", i + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

pub fn save_jsonl(records: &[RunRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    write_jsonl(records, File::create(path)?)
}

pub fn load_jsonl(path: impl AsRef<Path>) -> Result<Vec<RunRecord>> {
    read_jsonl(File::open(path)?)
}

/// Every `*.jsonl` file in `dir`, in file-name order.
pub fn load_dir(dir: impl AsRef<Path>) -> Result<Vec<RunRecord>> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    paths.sort();
    let mut out = Vec::new();
    for p in paths {
        out.extend(load_jsonl(p)?);
    }
    Ok(out)
}
