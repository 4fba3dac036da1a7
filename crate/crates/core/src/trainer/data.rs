use rayon::prelude::*;

use crate::datamodel::{read_feature_file, SegmentRecord};
use crate::error::{Error, Result};
use crate::model::{ModelConfig, SegmentInputs};

/// A segment with its features loaded.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub label: u8,
    pub duration_s: f64,
    pub inputs: SegmentInputs<f32>,
}

fn load_one(rec: &SegmentRecord, cfg: &ModelConfig) -> Result<Sample> {
    if !rec.feature_path.exists() {
        return Err(Error::MissingFeatures {
            id: rec.id.clone(),
            path: rec.feature_path.clone(),
        });
    }
    let streams = read_feature_file(&rec.feature_path)?;
    for s in &streams {
        s.check_duration(rec.duration_s)?;
    }
    let inputs = SegmentInputs::from_streams(&streams, cfg)
        .map_err(|e| Error::contract(format!("segment {}: {e}", rec.id)))?;
    let check = |m: &Option<crate::numerics::Matrix<f32>>, want: usize, name: &str| -> Result<()> {
        match m {
            Some(m) if m.cols() != want => Err(Error::contract(format!(
                "segment {}: {name} features have dimension {}, model expects {want}",
                rec.id,
                m.cols()
            ))),
            Some(m) if m.rows() == 0 => Err(Error::contract(format!("segment {}: empty {name} stream", rec.id))),
            _ => Ok(()),
        }
    };
    check(&inputs.audio, cfg.d_audio, "audio")?;
    check(&inputs.visual, cfg.d_visual, "visual")?;
    Ok(Sample {
        id: rec.id.clone(),
        label: rec.label,
        duration_s: rec.duration_s,
        inputs,
    })
}

/// Reads the feature files of `records` in parallel; the result keeps manifest order.
pub fn load_samples(records: &[SegmentRecord], cfg: &ModelConfig) -> Result<Vec<Sample>> {
    records.par_iter().map(|r| load_one(r, cfg)).collect()
}
