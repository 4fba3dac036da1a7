//! Scoring a trained model against planted ground truth.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datamodel::{Dominance, SegmentRecord};
use crate::error::Result;
use crate::evaluator::{evaluate, MetricsReport};
use crate::localizer::{localize, LocalizerConfig, PredictionRecord};
use crate::model::{forward, Mode, ModelConfig, ModelParams};
use crate::numerics::Scalar;
use crate::trainer::Sample;

/// Runs the model and the localizer on every sample, dropout off.
pub fn localize_samples(
    params: &ModelParams<f32>,
    cfg: &ModelConfig,
    samples: &[Sample],
    loc_cfg: &LocalizerConfig,
) -> Result<Vec<PredictionRecord>> {
    loc_cfg.validate()?;
    samples
        .par_iter()
        .map(|s| {
            let out = forward(params, cfg, &s.inputs, Mode::Eval)?;
            let prob = out.positive_prob().as_f64();
            let loc = localize(&out, loc_cfg, s.duration_s)?;
            Ok(PredictionRecord::new(s.id.clone(), prob, loc))
        })
        .collect()
}

/// Mean visual gate weight over ground-truth positives, grouped by dominance.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GatingStats {
    pub mean_w_visual: BTreeMap<Dominance, f64>,
    pub counts: BTreeMap<Dominance, usize>,
}

impl GatingStats {
    /// Visual weight on visual-dominant positives minus that on acoustic-dominant ones.
    pub fn visual_margin(&self) -> Option<f64> {
        Some(self.mean_w_visual.get(&Dominance::Visual)? - self.mean_w_visual.get(&Dominance::Acoustic)?)
    }
}

/// Groups positives by the dominance of their first event.
pub fn gating_by_dominance(records: &[SegmentRecord], predictions: &[PredictionRecord]) -> GatingStats {
    let by_id: HashMap<&str, &PredictionRecord> = predictions.iter().map(|p| (p.id.as_str(), p)).collect();
    let mut sums: BTreeMap<Dominance, (f64, usize)> = BTreeMap::new();
    for r in records.iter().filter(|r| r.is_positive()) {
        let (Some(ev), Some(p)) = (r.events.first(), by_id.get(r.id.as_str())) else {
            continue;
        };
        let e = sums.entry(ev.modality).or_default();
        e.0 += p.w_visual;
        e.1 += 1;
    }
    GatingStats {
        mean_w_visual: sums.iter().map(|(&d, &(s, n))| (d, s / n as f64)).collect(),
        counts: sums.iter().map(|(&d, &(_, n))| (d, n)).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub metrics: MetricsReport,
    pub gating: GatingStats,
}

/// Localizes `samples` and scores them against `records`, which carry the planted bursts.
pub fn oracle_check(
    params: &ModelParams<f32>,
    cfg: &ModelConfig,
    samples: &[Sample],
    records: &[SegmentRecord],
    loc_cfg: &LocalizerConfig,
) -> Result<OracleReport> {
    let predictions = localize_samples(params, cfg, samples, loc_cfg)?;
    Ok(OracleReport {
        metrics: evaluate(records, &predictions)?,
        gating: gating_by_dominance(records, &predictions),
    })
}
