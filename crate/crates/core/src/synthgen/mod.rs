//! Synthetic segments with one planted burst per positive.
//!
//! Background frames are i.i.d. Gaussian noise. Inside a positive's burst the
//! dominant modality (or both) is shifted along a unit direction that is fixed
//! for the whole dataset, so a linear attention scorer can find it.

mod oracle;

pub use oracle::{gating_by_dominance, localize_samples, oracle_check, GatingStats, OracleReport};

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datamodel::{
    write_annotation_csv, write_feature_file, write_manifest, Dominance, EventAnnotation, FeatureSequence,
    Intensity, SegmentRecord, Source, Split,
};
use crate::error::{Error, Result};
use crate::model::forward::{AUDIO_STREAM, VISUAL_STREAM};
use crate::numerics::Matrix;

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const ORACLE_FILE: &str = "oracle.csv";
pub const FEATURE_DIR: &str = "features";

/// Share of positives in each dominance class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DominanceMix {
    pub acoustic: f64,
    pub visual: f64,
    pub both: f64,
}

impl Default for DominanceMix {
    fn default() -> Self {
        DominanceMix {
            acoustic: 0.79,
            visual: 0.06,
            both: 0.15,
        }
    }
}

impl DominanceMix {
    fn draw(&self, u: f64) -> Dominance {
        if u < self.acoustic {
            Dominance::Acoustic
        } else if u < self.acoustic + self.visual {
            Dominance::Visual
        } else {
            Dominance::Both
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    /// Total segments, divided 70/10/20 into train/val/test unless `split_counts` is set.
    pub n_segments: usize,
    /// Explicit `[train, val, test]` sizes.
    pub split_counts: Option<[usize; 3]>,
    pub positive_fraction: f64,
    pub duration_s: f64,
    pub audio_rate_hz: f64,
    pub audio_dim: usize,
    pub visual_rate_hz: f64,
    pub visual_dim: usize,
    pub burst_min_s: f64,
    pub burst_max_s: f64,
    /// Mean shift inside a burst, in units of the noise standard deviation.
    pub amplitude: f64,
    pub mix: DominanceMix,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_segments: 1000,
            split_counts: None,
            positive_fraction: 0.3,
            duration_s: 5.0,
            audio_rate_hz: 50.0,
            audio_dim: 32,
            visual_rate_hz: 10.0,
            visual_dim: 24,
            burst_min_s: 0.5,
            burst_max_s: 2.5,
            amplitude: 3.0,
            mix: DominanceMix::default(),
            noise_std: 1.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::config(m));
        if !(self.positive_fraction > 0.0 && self.positive_fraction < 1.0) {
            return bad(format!("positive_fraction {} outside (0, 1)", self.positive_fraction));
        }
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return bad(format!("duration_s {} must be positive", self.duration_s));
        }
        if !(self.burst_min_s > 0.0 && self.burst_min_s <= self.burst_max_s) {
            return bad(format!(
                "burst range [{}, {}] must be positive and ordered",
                self.burst_min_s, self.burst_max_s
            ));
        }
        if self.burst_max_s > self.duration_s {
            return bad(format!(
                "burst up to {} s does not fit a {} s segment",
                self.burst_max_s, self.duration_s
            ));
        }
        let m = self.mix;
        if [m.acoustic, m.visual, m.both].iter().any(|&p| !(p >= 0.0)) || (m.acoustic + m.visual + m.both - 1.0).abs() > 1e-9 {
            return bad(format!("dominance mix {m:?} must be non-negative and sum to 1"));
        }
        if !(self.audio_rate_hz > 0.0 && self.visual_rate_hz > 0.0) || self.audio_dim == 0 || self.visual_dim == 0 {
            return bad("stream rates and dimensions must be positive".into());
        }
        if !(self.noise_std > 0.0) || !(self.amplitude >= 0.0) {
            return bad("noise_std must be positive and amplitude non-negative".into());
        }
        let counts = self.counts();
        if counts.iter().sum::<usize>() == 0 {
            return bad("no segments requested".into());
        }
        Ok(())
    }

    /// Segments per split, `[train, val, test]`.
    pub fn counts(&self) -> [usize; 3] {
        self.split_counts.unwrap_or_else(|| {
            let train = (self.n_segments as f64 * 0.7).round() as usize;
            let val = (self.n_segments as f64 * 0.1).round() as usize;
            [train, val, self.n_segments.saturating_sub(train + val)]
        })
    }

    fn frames(&self, rate: f64) -> usize {
        (self.duration_s * rate).round() as usize
    }
}

/// A generated segment with its planted ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSegment {
    pub record: SegmentRecord,
    /// `(start_s, end_s)` of the burst; positives only.
    pub burst: Option<(f64, f64)>,
    pub dominance: Option<Dominance>,
}

#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub dir: PathBuf,
    pub segments: Vec<SynthSegment>,
    /// Unit burst directions, audio then visual.
    pub directions: (Vec<f32>, Vec<f32>),
}

impl SynthDataset {
    pub fn manifest_path(&self) -> PathBuf {
        self.dir.join(MANIFEST_FILE)
    }

    pub fn records(&self) -> Vec<SegmentRecord> {
        self.segments.iter().map(|s| s.record.clone()).collect()
    }
}

fn unit_vector(dim: usize, rng: &mut ChaCha8Rng) -> Vec<f32> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            return v.iter().map(|x| (x / norm) as f32).collect();
        }
    }
}

/// Frames whose center `(t + 0.5) / rate` falls in `[start, end)`.
pub fn burst_frames(frames: usize, rate: f64, start: f64, end: f64) -> impl Iterator<Item = usize> {
    (0..frames).filter(move |&t| {
        let c = (t as f64 + 0.5) / rate;
        start <= c && c < end
    })
}

struct Plan {
    id: String,
    split: Split,
    positive: bool,
    index: usize,
}

/// Per-segment stream, independent of generation order.
fn segment_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 16);
    rng
}

fn noise(rows: usize, cols: usize, std: f64, rng: &mut ChaCha8Rng) -> Vec<f32> {
    (0..rows * cols)
        .map(|_| (std * rng.sample::<f64, _>(StandardNormal)) as f32)
        .collect()
}

fn build_segment(cfg: &SynthConfig, plan: &Plan, dirs: &(Vec<f32>, Vec<f32>)) -> (SynthSegment, Vec<FeatureSequence>) {
    let mut rng = segment_rng(cfg.seed, plan.index);
    let (ta, tv) = (cfg.frames(cfg.audio_rate_hz), cfg.frames(cfg.visual_rate_hz));
    let mut audio = noise(ta, cfg.audio_dim, cfg.noise_std, &mut rng);
    let mut visual = noise(tv, cfg.visual_dim, cfg.noise_std, &mut rng);
    let mut events = Vec::new();
    let (mut burst, mut dominance) = (None, None);
    if plan.positive {
        let len = rng.random_range(cfg.burst_min_s..=cfg.burst_max_s);
        let start = rng.random_range(0.0..=(cfg.duration_s - len));
        let end = (start + len).min(cfg.duration_s);
        let dom = cfg.mix.draw(rng.random());
        let source = if rng.random_bool(0.8) { Source::Audience } else { Source::Speaker };
        let intensity = if rng.random_bool(0.5) { Intensity::Laughter } else { Intensity::Chuckle };
        let shift = (cfg.amplitude * cfg.noise_std) as f32;
        let plant = |data: &mut [f32], frames: usize, rate: f64, dir: &[f32]| {
            let dim = dir.len();
            for t in burst_frames(frames, rate, start, end) {
                for (x, d) in data[t * dim..(t + 1) * dim].iter_mut().zip(dir) {
                    *x += shift * d;
                }
            }
        };
        if dom != Dominance::Visual {
            plant(&mut audio, ta, cfg.audio_rate_hz, &dirs.0);
        }
        if dom != Dominance::Acoustic {
            plant(&mut visual, tv, cfg.visual_rate_hz, &dirs.1);
        }
        events.push(EventAnnotation::new(start, end, source, dom, intensity).expect("burst inside segment"));
        burst = Some((start, end));
        dominance = Some(dom);
    }
    let streams = vec![
        FeatureSequence::new(
            AUDIO_STREAM,
            cfg.audio_rate_hz as f32,
            Matrix::from_vec(ta, cfg.audio_dim, audio).expect("finite noise"),
        )
        .expect("valid stream"),
        FeatureSequence::new(
            VISUAL_STREAM,
            cfg.visual_rate_hz as f32,
            Matrix::from_vec(tv, cfg.visual_dim, visual).expect("finite noise"),
        )
        .expect("valid stream"),
    ];
    let record = SegmentRecord {
        id: plan.id.clone(),
        duration_s: cfg.duration_s,
        label: u8::from(plan.positive),
        split: plan.split,
        feature_path: PathBuf::from(FEATURE_DIR).join(format!("{}.mmf", plan.id)),
        events,
    };
    (
        SynthSegment {
            record,
            burst,
            dominance,
        },
        streams,
    )
}

fn plans(cfg: &SynthConfig) -> Vec<Plan> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut out = Vec::new();
    for (split, n) in [Split::Train, Split::Val, Split::Test].into_iter().zip(cfg.counts()) {
        let n_pos = (n as f64 * cfg.positive_fraction).round() as usize;
        let mut labels: Vec<bool> = (0..n).map(|i| i < n_pos).collect();
        labels.shuffle(&mut rng);
        for (i, positive) in labels.into_iter().enumerate() {
            let index = out.len();
            out.push(Plan {
                id: format!("{split}-{i:05}"),
                split,
                positive,
                index,
            });
        }
    }
    out
}

/// Writes features, `manifest.jsonl` and `oracle.csv` under `dir`.
///
/// Nothing is written when the configuration is invalid. Output is a pure
/// function of the configuration, independent of thread count.
pub fn generate(cfg: &SynthConfig, dir: impl AsRef<Path>) -> Result<SynthDataset> {
    cfg.validate()?;
    let dir = dir.as_ref();
    let feat_dir = dir.join(FEATURE_DIR);
    fs::create_dir_all(&feat_dir).map_err(|e| Error::io(&feat_dir, e))?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dirs = (unit_vector(cfg.audio_dim, &mut rng), unit_vector(cfg.visual_dim, &mut rng));
    let segments: Vec<SynthSegment> = plans(cfg)
        .par_iter()
        .map(|plan| {
            let (seg, streams) = build_segment(cfg, plan, &dirs);
            write_feature_file(&streams, dir.join(&seg.record.feature_path))?;
            Ok(seg)
        })
        .collect::<Result<_>>()?;

    let records: Vec<SegmentRecord> = segments.iter().map(|s| s.record.clone()).collect();
    write_manifest(dir.join(MANIFEST_FILE), &records)?;
    let events: Vec<(String, EventAnnotation)> = records
        .iter()
        .flat_map(|r| r.events.iter().map(|e| (r.id.clone(), e.clone())))
        .collect();
    write_annotation_csv(dir.join(ORACLE_FILE), &events)?;

    // callers get absolute feature paths, as load_manifest would give them
    let segments = segments
        .into_iter()
        .map(|mut s| {
            s.record.feature_path = dir.join(&s.record.feature_path);
            s
        })
        .collect();
    Ok(SynthDataset {
        dir: dir.to_path_buf(),
        segments,
        directions: dirs,
    })
}
