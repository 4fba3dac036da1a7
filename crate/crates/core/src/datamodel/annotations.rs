//! Annotation CSV ingestion and corpus statistics.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::records::{Dominance, EventAnnotation, Intensity, Source};
use crate::error::{Error, Result};

/// Header names of the columns that carry each annotation field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnMap {
    pub video_id: String,
    pub start: String,
    pub end: String,
    pub source: String,
    pub modality: String,
    pub intensity: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        ColumnMap {
            video_id: "video_id".into(),
            start: "start".into(),
            end: "end".into(),
            source: "source".into(),
            modality: "modality".into(),
            intensity: "intensity".into(),
        }
    }
}

impl ColumnMap {
    pub const HEADER: [&'static str; 6] = ["video_id", "start", "end", "source", "modality", "intensity"];

    /// Overrides from `field=header` pairs, e.g. `start=onset_s`.
    pub fn with_overrides<'a>(mut self, pairs: impl IntoIterator<Item = &'a str>) -> Result<Self> {
        for pair in pairs {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| Error::config(format!("column mapping {pair:?} is not field=header")))?;
            let slot = match k.trim() {
                "video_id" => &mut self.video_id,
                "start" => &mut self.start,
                "end" => &mut self.end,
                "source" => &mut self.source,
                "modality" => &mut self.modality,
                "intensity" => &mut self.intensity,
                other => return Err(Error::config(format!("unknown annotation field {other:?}"))),
            };
            *slot = v.trim().to_string();
        }
        Ok(self)
    }

    fn names(&self) -> [&str; 6] {
        [
            &self.video_id,
            &self.start,
            &self.end,
            &self.source,
            &self.modality,
            &self.intensity,
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RowError {
    /// 1-based line number in the file (the header is line 1).
    pub line: u64,
    pub msg: String,
}

#[derive(Debug, Clone, Default)]
pub struct ParsedAnnotations {
    pub events: Vec<(String, EventAnnotation)>,
    pub row_errors: Vec<RowError>,
}

/// Parses annotation rows from any reader. Malformed rows are skipped and reported,
/// or abort the parse when `strict` is set. An empty input yields no events.
pub fn parse_annotations<R: Read>(reader: R, columns: &ColumnMap, strict: bool) -> Result<ParsedAnnotations> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() {
        // a zero-byte file has no header and no events
        return Ok(ParsedAnnotations::default());
    }
    let mut idx = [0usize; 6];
    for (slot, name) in idx.iter_mut().zip(columns.names()) {
        *slot = headers
            .iter()
            .position(|h| h.trim_start_matches('\u{feff}').eq_ignore_ascii_case(name))
            .ok_or_else(|| {
                Error::Schema(format!(
                    "column {name:?} not found in header [{}]",
                    headers.iter().collect::<Vec<_>>().join(", ")
                ))
            })?;
    }

    let mut out = ParsedAnnotations::default();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        if row.iter().all(|f| f.is_empty()) {
            continue;
        }
        match parse_row(&row, &idx) {
            Ok(item) => out.events.push(item),
            Err(msg) => {
                if strict {
                    return Err(Error::Validation {
                        line: line as usize,
                        msg,
                    });
                }
                out.row_errors.push(RowError { line, msg });
            }
        }
    }
    Ok(out)
}

fn parse_row(row: &csv::StringRecord, idx: &[usize; 6]) -> std::result::Result<(String, EventAnnotation), String> {
    let field = |i: usize| row.get(idx[i]).ok_or_else(|| format!("missing field {}", ColumnMap::HEADER[i]));
    let id = field(0)?.to_string();
    if id.is_empty() {
        return Err("empty video id".into());
    }
    let num = |i: usize| -> std::result::Result<f64, String> {
        let s = field(i)?;
        s.parse::<f64>()
            .map_err(|_| format!("{}: cannot parse {s:?} as a number", ColumnMap::HEADER[i]))
    };
    let ev = EventAnnotation {
        start_s: num(1)?,
        end_s: num(2)?,
        source: field(3)?.parse::<Source>()?,
        modality: field(4)?.parse::<Dominance>()?,
        intensity: field(5)?.parse::<Intensity>()?,
    };
    ev.validate()?;
    Ok((id, ev))
}

pub fn parse_annotation_csv(path: impl AsRef<Path>, columns: &ColumnMap, strict: bool) -> Result<ParsedAnnotations> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_annotations(file, columns, strict)
}

/// Writes events in the default column layout.
pub fn write_annotation_csv(path: impl AsRef<Path>, events: &[(String, EventAnnotation)]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(ColumnMap::HEADER)?;
    for (id, ev) in events {
        w.write_record([
            id.as_str(),
            &format!("{:.3}", ev.start_s),
            &format!("{:.3}", ev.end_s),
            ev.source.as_str(),
            ev.modality.as_str(),
            ev.intensity.as_str(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a `video_id,duration_s` table.
pub fn parse_duration_csv(path: impl AsRef<Path>) -> Result<HashMap<String, f64>> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let mut out = HashMap::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line()) as usize;
        let (Some(id), Some(d)) = (row.get(0), row.get(1)) else {
            return Err(Error::Validation {
                line,
                msg: "expected video_id,duration_s".into(),
            });
        };
        let d: f64 = d.parse().map_err(|_| Error::Validation {
            line,
            msg: format!("bad duration {d:?}"),
        })?;
        out.insert(id.to_string(), d);
    }
    Ok(out)
}

/// Corpus-level annotation statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub total_videos: usize,
    /// Present only when per-video durations are known.
    pub total_hours: Option<f64>,
    pub videos_with_laughter: usize,
    pub total_events: usize,
    pub mean_duration_s: f64,
    /// Population standard deviation (divide by n).
    pub std_duration_s: f64,
    /// Sample standard deviation (divide by n - 1); 0 for a single event.
    pub sample_std_duration_s: f64,
    pub by_source: BTreeMap<Source, usize>,
    pub by_modality: BTreeMap<Dominance, usize>,
    pub by_intensity: BTreeMap<Intensity, usize>,
}

pub fn compute_stats(
    events: &[(String, EventAnnotation)],
    video_durations: Option<&HashMap<String, f64>>,
) -> Result<DatasetStats> {
    if events.is_empty() {
        return Err(Error::contract("no annotation events"));
    }
    let n = events.len() as f64;
    let mean = events.iter().map(|(_, e)| e.duration()).sum::<f64>() / n;
    let ss = events
        .iter()
        .map(|(_, e)| (e.duration() - mean).powi(2))
        .sum::<f64>();
    let videos: HashSet<&str> = events.iter().map(|(id, _)| id.as_str()).collect();

    let mut by_source: BTreeMap<Source, usize> = Source::ALL.iter().map(|&k| (k, 0)).collect();
    let mut by_modality: BTreeMap<Dominance, usize> = Dominance::ALL.iter().map(|&k| (k, 0)).collect();
    let mut by_intensity: BTreeMap<Intensity, usize> = Intensity::ALL.iter().map(|&k| (k, 0)).collect();
    for (_, e) in events {
        *by_source.entry(e.source).or_default() += 1;
        *by_modality.entry(e.modality).or_default() += 1;
        *by_intensity.entry(e.intensity).or_default() += 1;
    }

    let (total_videos, total_hours) = match video_durations {
        Some(d) => {
            let known: HashSet<&str> = d.keys().map(String::as_str).chain(videos.iter().copied()).collect();
            (known.len(), Some(d.values().sum::<f64>() / 3600.0))
        }
        None => (videos.len(), None),
    };

    Ok(DatasetStats {
        total_videos,
        total_hours,
        videos_with_laughter: videos.len(),
        total_events: events.len(),
        mean_duration_s: mean,
        std_duration_s: (ss / n).sqrt(),
        sample_std_duration_s: if events.len() > 1 { (ss / (n - 1.0)).sqrt() } else { 0.0 },
        by_source,
        by_modality,
        by_intensity,
    })
}

impl DatasetStats {
    pub fn render_table(&self) -> String {
        let mut s = String::new();
        let mut line = |k: &str, v: String| s.push_str(&format!("{k:<26}{v:>12}\n"));
        line("Total videos", self.total_videos.to_string());
        line(
            "Total hours",
            self.total_hours.map_or_else(|| "n/a".into(), |h| format!("{h:.1}")),
        );
        line("Videos with laughter", self.videos_with_laughter.to_string());
        line("Total laughter events", self.total_events.to_string());
        line("Mean duration (s)", format!("{:.2}", self.mean_duration_s));
        line("Duration std dev (s)", format!("{:.2}", self.std_duration_s));
        line("  sample std dev (s)", format!("{:.2}", self.sample_std_duration_s));
        line("Speaker vs. audience", String::new());
        for (k, v) in &self.by_source {
            line(&format!("  {k}"), v.to_string());
        }
        line("Modality dominance", String::new());
        for (k, v) in &self.by_modality {
            line(&format!("  {k}"), v.to_string());
        }
        line("Intensity", String::new());
        for (k, v) in &self.by_intensity {
            line(&format!("  {k}"), v.to_string());
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "video_id,start,end,source,modality,intensity\n\
        vid_01,3.10,4.80,audience,acoustic,laughter\n\
        vid_01,4.8,3.1,audience,acoustic,laughter\n\
        vid_02,0.5,1.0,SPEAKER,Visual,chuckle\n\
        vid_03,x,1.0,speaker,visual,chuckle\n\
        vid_04,0.0,2.0,speaker,smell,chuckle\n";

    #[test]
    fn parses_rows_and_reports_bad_ones() {
        let parsed = parse_annotations(SAMPLE.as_bytes(), &ColumnMap::default(), false).unwrap();
        assert_eq!(parsed.events.len(), 2);
        let (id, ev) = &parsed.events[0];
        assert_eq!(id, "vid_01");
        assert_eq!(
            *ev,
            EventAnnotation {
                start_s: 3.10,
                end_s: 4.80,
                source: Source::Audience,
                modality: Dominance::Acoustic,
                intensity: Intensity::Laughter
            }
        );
        assert_eq!(parsed.events[1].1.source, Source::Speaker);
        let lines: Vec<u64> = parsed.row_errors.iter().map(|e| e.line).collect();
        assert_eq!(lines, vec![3, 5, 6]);
    }

    #[test]
    fn strict_mode_aborts() {
        let err = parse_annotations(SAMPLE.as_bytes(), &ColumnMap::default(), true).unwrap_err();
        assert!(matches!(err, Error::Validation { line: 3, .. }));
    }

    #[test]
    fn missing_column_is_schema_error() {
        let csv = "vid,start,end,source,modality,intensity\na,0,1,speaker,visual,chuckle\n";
        assert!(matches!(
            parse_annotations(csv.as_bytes(), &ColumnMap::default(), false),
            Err(Error::Schema(_))
        ));
        let map = ColumnMap::default().with_overrides(["video_id=vid"]).unwrap();
        assert_eq!(parse_annotations(csv.as_bytes(), &map, false).unwrap().events.len(), 1);
    }

    #[test]
    fn two_point_statistics() {
        let ev = |s, e| {
            EventAnnotation::new(s, e, Source::Audience, Dominance::Both, Intensity::Chuckle).unwrap()
        };
        let events = vec![("a".to_string(), ev(0.0, 1.0)), ("b".to_string(), ev(1.0, 4.0))];
        let stats = compute_stats(&events, None).unwrap();
        assert!((stats.mean_duration_s - 2.0).abs() < 1e-12);
        assert!((stats.std_duration_s - 1.0).abs() < 1e-12);
        assert!((stats.sample_std_duration_s - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(stats.total_videos, 2);
        assert_eq!(stats.by_modality[&Dominance::Both], 2);
        assert_eq!(stats.by_modality[&Dominance::Visual], 0);
        assert!(compute_stats(&[], None).is_err());
    }
}
