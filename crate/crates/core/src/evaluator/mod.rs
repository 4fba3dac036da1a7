//! Classification and localization metrics over prediction files.

mod metrics;

pub use metrics::{
    classification_f1, iou, localization_metrics, multi_gt_iou, peak_gt, ClassificationScores, Confusion,
    Interval, LocalizationScores,
};

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::datamodel::SegmentRecord;
use crate::error::{Error, Result};
use crate::localizer::PredictionRecord;

pub const IOU_THRESHOLD: f64 = 0.5;

/// How the Peak-GT column is computed; printed with every table.
pub const PEAK_GT_DEFINITION: &str =
    "Peak-GT: share of localized positives whose peak-bin center lies inside any ground-truth event";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub cls_f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub counts: Confusion,
    /// Localization columns are absent when no positive segment has ground-truth events.
    pub loc_precision_at_05: Option<f64>,
    pub mean_iou: Option<f64>,
    pub peak_gt: Option<f64>,
    pub n_cls: usize,
    pub n_loc: usize,
}

impl MetricsReport {
    pub fn render_table(&self, name: &str) -> String {
        let cell = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.3}"));
        let mut s = String::new();
        let _ = writeln!(s, "{:<24} {:>7} {:>7} {:>7} {:>8}", "Model", "Cls.F1", "Loc@.5", "IoU", "Peak-GT");
        let _ = writeln!(
            s,
            "{:<24} {:>7.3} {:>7} {:>7} {:>8}",
            name,
            self.cls_f1,
            cell(self.loc_precision_at_05),
            cell(self.mean_iou),
            cell(self.peak_gt)
        );
        let c = self.counts;
        let _ = writeln!(
            s,
            "classification: n={} P={:.3} R={:.3} TP={} FP={} FN={} TN={}; localization: n={}",
            self.n_cls, self.precision, self.recall, c.tp, c.fp, c.fn_, c.tn, self.n_loc
        );
        s.push_str(PEAK_GT_DEFINITION);
        s.push('\n');
        s
    }
}

fn events_of(rec: &SegmentRecord) -> Result<Vec<Interval>> {
    rec.events.iter().map(|e| Interval::new(e.start_s, e.end_s)).collect()
}

/// Scores `predictions` against `records`.
///
/// Classification covers every record. Localization covers every positive
/// record with ground-truth events, whatever its predicted label.
pub fn evaluate(records: &[SegmentRecord], predictions: &[PredictionRecord]) -> Result<MetricsReport> {
    let by_id: HashMap<&str, &PredictionRecord> = predictions.iter().map(|p| (p.id.as_str(), p)).collect();
    let mut preds = Vec::with_capacity(records.len());
    let mut labels = Vec::with_capacity(records.len());
    let mut loc = Vec::new();
    let mut peaks = Vec::new();
    for rec in records {
        let p = by_id
            .get(rec.id.as_str())
            .ok_or_else(|| Error::contract(format!("no prediction for segment {:?}", rec.id)))?;
        preds.push(p.label);
        labels.push(rec.label);
        if rec.label == 1 && !rec.events.is_empty() {
            let gts = events_of(rec)?;
            loc.push((Interval::new(p.start_s, p.end_s)?, gts.clone()));
            peaks.push((p.peak_s, gts));
        }
    }
    let cls = classification_f1(&preds, &labels)?;
    let (loc_scores, peak) = if loc.is_empty() {
        (None, None)
    } else {
        (Some(localization_metrics(&loc, IOU_THRESHOLD)?), Some(peak_gt(&peaks)?))
    };
    Ok(MetricsReport {
        cls_f1: cls.f1,
        precision: cls.precision,
        recall: cls.recall,
        counts: cls.counts,
        loc_precision_at_05: loc_scores.map(|s| s.precision_at),
        mean_iou: loc_scores.map(|s| s.mean_iou),
        peak_gt: peak,
        n_cls: records.len(),
        n_loc: loc.len(),
    })
}
