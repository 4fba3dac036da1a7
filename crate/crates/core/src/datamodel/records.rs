use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

macro_rules! label_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(rename_all = "lowercase")]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = String;

            /// Case-insensitive, surrounding whitespace ignored.
            fn from_str(s: &str) -> std::result::Result<Self, String> {
                let t = s.trim();
                $(if t.eq_ignore_ascii_case($text) {
                    return Ok($name::$variant);
                })+
                Err(format!(
                    "unknown {} {:?} (expected one of {})",
                    stringify!($name),
                    s,
                    [$($text),+].join(", ")
                ))
            }
        }
    };
}

label_enum!(
    /// Who produced the laughter.
    Source { Speaker => "speaker", Audience => "audience" }
);
label_enum!(
    /// Which modality the event is primarily perceptible in.
    Dominance { Acoustic => "acoustic", Visual => "visual", Both => "both" }
);
label_enum!(Intensity { Chuckle => "chuckle", Laughter => "laughter" });
label_enum!(Split { Train => "train", Val => "val", Test => "test" });

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventAnnotation {
    pub start_s: f64,
    pub end_s: f64,
    pub source: Source,
    pub modality: Dominance,
    pub intensity: Intensity,
}

impl EventAnnotation {
    pub fn new(
        start_s: f64,
        end_s: f64,
        source: Source,
        modality: Dominance,
        intensity: Intensity,
    ) -> Result<Self> {
        let ev = EventAnnotation {
            start_s,
            end_s,
            source,
            modality,
            intensity,
        };
        ev.validate().map_err(Error::contract)?;
        Ok(ev)
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if !(self.start_s.is_finite() && self.end_s.is_finite()) {
            return Err("non-finite event bound".into());
        }
        if self.start_s < 0.0 {
            return Err(format!("event starts before 0 ({})", self.start_s));
        }
        if self.start_s >= self.end_s {
            return Err(format!(
                "event start {} is not before end {}",
                self.start_s, self.end_s
            ));
        }
        Ok(())
    }

    pub fn duration(&self) -> f64 {
        self.end_s - self.start_s
    }
}

/// A labeled clip with references to its features and its ground-truth events.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub id: String,
    pub duration_s: f64,
    pub label: u8,
    pub split: Split,
    pub feature_path: PathBuf,
    #[serde(default)]
    pub events: Vec<EventAnnotation>,
}

impl SegmentRecord {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(format!("segment {}: non-positive duration {}", self.id, self.duration_s));
        }
        match (self.label, self.events.is_empty()) {
            (0, true) | (1, false) => {}
            (0, false) => {
                return Err(format!("segment {}: label 0 but {} events", self.id, self.events.len()))
            }
            (1, true) => return Err(format!("segment {}: label 1 without events", self.id)),
            (l, _) => return Err(format!("segment {}: label {l} is not binary", self.id)),
        }
        for ev in &self.events {
            ev.validate().map_err(|e| format!("segment {}: {e}", self.id))?;
            if ev.end_s > self.duration_s {
                return Err(format!(
                    "segment {}: event [{}, {}] exceeds duration {}",
                    self.id, ev.start_s, ev.end_s, self.duration_s
                ));
            }
        }
        Ok(())
    }

    pub fn is_positive(&self) -> bool {
        self.label == 1
    }
}

/// Reads a line-delimited JSON manifest.
///
/// Relative feature paths are resolved against the manifest's directory. Blank lines are skipped.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<SegmentRecord>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut rec: SegmentRecord =
            serde_json::from_str(&line).map_err(|e| Error::Validation {
                line: line_no,
                msg: e.to_string(),
            })?;
        rec.validate().map_err(|msg| Error::Validation { line: line_no, msg })?;
        if rec.feature_path.is_relative() {
            rec.feature_path = base.join(&rec.feature_path);
        }
        records.push(rec);
    }
    Ok(records)
}

pub fn write_manifest(path: impl AsRef<Path>, records: &[SegmentRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for rec in records {
        serde_json::to_writer(&mut out, rec)?;
        out.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&out).map_err(|e| Error::io(path, e))
}

pub fn split_records(records: &[SegmentRecord], split: Split) -> Vec<SegmentRecord> {
    records.iter().filter(|r| r.split == split).cloned().collect()
}
