use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::LocalizationResult;
use crate::error::{Error, Result};

/// One line of a prediction file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub label: u8,
    /// Positive-class probability.
    pub prob: f64,
    pub start_s: f64,
    pub end_s: f64,
    pub peak_s: f64,
    pub w_audio: f64,
    pub w_visual: f64,
    pub beta: Vec<f64>,
    #[serde(default)]
    pub fallback: bool,
}

impl PredictionRecord {
    pub fn new(id: impl Into<String>, prob: f64, loc: LocalizationResult) -> Self {
        PredictionRecord {
            id: id.into(),
            label: loc.label,
            prob,
            start_s: loc.start_s,
            end_s: loc.end_s,
            peak_s: loc.peak_s,
            w_audio: loc.w_audio,
            w_visual: loc.w_visual,
            beta: loc.beta,
            fallback: loc.fallback,
        }
    }
}

pub fn write_predictions(path: impl AsRef<Path>, records: &[PredictionRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for rec in records {
        serde_json::to_writer(&mut out, rec)?;
        out.push(b'\n');
    }
    fs::File::create(path)
        .and_then(|mut f| f.write_all(&out))
        .map_err(|e| Error::io(path, e))
}

pub fn read_predictions(path: impl AsRef<Path>) -> Result<Vec<PredictionRecord>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: PredictionRecord = serde_json::from_str(&line).map_err(|e| Error::Validation {
            line: i + 1,
            msg: e.to_string(),
        })?;
        if !(0.0 <= rec.start_s && rec.start_s <= rec.end_s) {
            return Err(Error::Validation {
                line: i + 1,
                msg: format!("interval [{}, {}] is not ordered", rec.start_s, rec.end_s),
            });
        }
        out.push(rec);
    }
    Ok(out)
}
