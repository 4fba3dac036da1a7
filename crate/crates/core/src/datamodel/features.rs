//! The `MMF1` binary feature container.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! "MMF1" | u32 stream_count | stream*
//! stream = u16 name_len | name (UTF-8) | u32 T | u32 D | f32 rate_hz | T*D f32 row-major
//! ```

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub const FEATURE_MAGIC: &[u8; 4] = b"MMF1";

/// One modality's time-major feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    pub name: String,
    pub rate_hz: f32,
    pub values: Matrix<f32>,
}

impl FeatureSequence {
    pub fn new(name: impl Into<String>, rate_hz: f32, values: Matrix<f32>) -> Result<Self> {
        let seq = FeatureSequence {
            name: name.into(),
            rate_hz,
            values,
        };
        seq.validate()?;
        Ok(seq)
    }

    pub fn timesteps(&self) -> usize {
        self.values.rows()
    }

    pub fn dim(&self) -> usize {
        self.values.cols()
    }

    pub fn validate(&self) -> Result<()> {
        if self.timesteps() == 0 || self.dim() == 0 {
            return Err(Error::contract(format!(
                "stream {:?} has empty shape {:?}",
                self.name,
                self.values.shape()
            )));
        }
        if !(self.rate_hz > 0.0 && self.rate_hz.is_finite()) {
            return Err(Error::contract(format!(
                "stream {:?} has non-positive rate {}",
                self.name, self.rate_hz
            )));
        }
        Ok(())
    }

    /// Checks that the frame count agrees with a segment duration to within one frame.
    pub fn check_duration(&self, duration_s: f64) -> Result<()> {
        let expected = duration_s * self.rate_hz as f64;
        if (self.timesteps() as f64 - expected).abs() > 1.0 {
            return Err(Error::contract(format!(
                "stream {:?}: {} frames inconsistent with {duration_s} s at {} Hz",
                self.name,
                self.timesteps(),
                self.rate_hz
            )));
        }
        Ok(())
    }
}

/// A named tensor as stored in the stream encoding.
pub(crate) struct RawStream<'a> {
    pub name: &'a str,
    pub rate_hz: f32,
    pub values: &'a Matrix<f32>,
}

pub(crate) fn encode_streams(streams: &[RawStream<'_>]) -> Result<Vec<u8>> {
    if streams.is_empty() {
        return Err(Error::contract("feature file needs at least one stream"));
    }
    let mut seen = HashSet::new();
    let mut size = 8;
    for s in streams {
        if !seen.insert(s.name) {
            return Err(Error::contract(format!("duplicate stream name {:?}", s.name)));
        }
        if s.name.len() > u16::MAX as usize {
            return Err(Error::contract(format!("stream name too long: {}", s.name.len())));
        }
        size += 2 + s.name.len() + 12 + 4 * s.values.len();
    }
    let mut out = Vec::with_capacity(size);
    out.extend_from_slice(FEATURE_MAGIC);
    out.extend_from_slice(&(streams.len() as u32).to_le_bytes());
    for s in streams {
        out.extend_from_slice(&(s.name.len() as u16).to_le_bytes());
        out.extend_from_slice(s.name.as_bytes());
        out.extend_from_slice(&(s.values.rows() as u32).to_le_bytes());
        out.extend_from_slice(&(s.values.cols() as u32).to_le_bytes());
        out.extend_from_slice(&s.rate_hz.to_le_bytes());
        for v in s.values.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Format {
                offset: self.pos,
                msg: format!("truncated {what}: need {n} bytes, {} left", self.buf.len() - self.pos),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f32(&mut self, what: &str) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

pub(crate) struct DecodedStream {
    pub name: String,
    pub rate_hz: f32,
    pub values: Matrix<f32>,
}

/// Decodes an `MMF1` block starting at `buf[0]`; returns the streams and the bytes consumed.
pub(crate) fn decode_streams(buf: &[u8], base_offset: usize) -> Result<(Vec<DecodedStream>, usize)> {
    let mut r = Reader { buf, pos: 0 };
    let fmt_err = |offset: usize, msg: String| Error::Format {
        offset: base_offset + offset,
        msg,
    };
    let magic = r.take(4, "magic").map_err(|e| shift(e, base_offset))?;
    if magic != FEATURE_MAGIC {
        return Err(fmt_err(0, format!("bad magic {:?}", String::from_utf8_lossy(magic))));
    }
    let count = r.u32("stream count").map_err(|e| shift(e, base_offset))?;
    let mut seen = HashSet::new();
    let mut streams = Vec::new();
    for _ in 0..count {
        let start = r.pos;
        let name_len = r.u16("name length").map_err(|e| shift(e, base_offset))? as usize;
        let name_bytes = r.take(name_len, "name").map_err(|e| shift(e, base_offset))?;
        let name = std::str::from_utf8(name_bytes)
            .map_err(|_| fmt_err(start + 2, "stream name is not UTF-8".into()))?
            .to_string();
        if !seen.insert(name.clone()) {
            return Err(fmt_err(start, format!("duplicate stream name {name:?}")));
        }
        let rows = r.u32("T").map_err(|e| shift(e, base_offset))? as usize;
        let cols = r.u32("D").map_err(|e| shift(e, base_offset))? as usize;
        let rate_hz = r.f32("rate").map_err(|e| shift(e, base_offset))?;
        let n = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| fmt_err(r.pos, format!("stream {name:?} shape overflows")))?;
        let values_at = r.pos;
        let raw = r.take(n, "values").map_err(|e| shift(e, base_offset))?;
        let data: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let values = Matrix::from_vec(rows, cols, data)
            .map_err(|e| fmt_err(values_at, format!("stream {name:?}: {e}")))?;
        streams.push(DecodedStream {
            name,
            rate_hz,
            values,
        });
    }
    Ok((streams, r.pos))
}

fn shift(e: Error, base: usize) -> Error {
    match e {
        Error::Format { offset, msg } => Error::Format {
            offset: offset + base,
            msg,
        },
        other => other,
    }
}

pub fn encode_feature_file(streams: &[FeatureSequence]) -> Result<Vec<u8>> {
    for s in streams {
        s.validate()?;
    }
    let raw: Vec<RawStream<'_>> = streams
        .iter()
        .map(|s| RawStream {
            name: &s.name,
            rate_hz: s.rate_hz,
            values: &s.values,
        })
        .collect();
    encode_streams(&raw)
}

pub fn decode_feature_file(buf: &[u8]) -> Result<Vec<FeatureSequence>> {
    let (streams, used) = decode_streams(buf, 0)?;
    if used != buf.len() {
        return Err(Error::Format {
            offset: used,
            msg: format!("{} trailing bytes", buf.len() - used),
        });
    }
    streams
        .into_iter()
        .map(|s| {
            FeatureSequence::new(s.name, s.rate_hz, s.values).map_err(|e| Error::Format {
                offset: 0,
                msg: e.to_string(),
            })
        })
        .collect()
}

pub fn write_feature_file(streams: &[FeatureSequence], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_feature_file(streams)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_feature_file(path: impl AsRef<Path>) -> Result<Vec<FeatureSequence>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_feature_file(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_stream(name: &str) -> FeatureSequence {
        FeatureSequence::new(name, 50.0, Matrix::zeros(1, 1)).unwrap()
    }

    #[test]
    fn single_scalar_stream_size() {
        let bytes = encode_feature_file(&[scalar_stream("audio")]).unwrap();
        assert_eq!(bytes.len(), 4 + 4 + (2 + 5 + 4 + 4 + 4) + 4);
        assert_eq!(&bytes[..4], b"MMF1");
        assert_eq!(decode_feature_file(&bytes).unwrap(), vec![scalar_stream("audio")]);
    }

    #[test]
    fn bad_magic() {
        let mut bytes = encode_feature_file(&[scalar_stream("audio")]).unwrap();
        bytes[..4].copy_from_slice(b"XXXX");
        assert!(matches!(
            decode_feature_file(&bytes),
            Err(Error::Format { offset: 0, .. })
        ));
    }

    #[test]
    fn truncation_reports_offset() {
        let bytes = encode_feature_file(&[scalar_stream("audio")]).unwrap();
        let err = decode_feature_file(&bytes[..bytes.len() - 2]).unwrap_err();
        match err {
            Error::Format { offset, .. } => assert_eq!(offset, bytes.len() - 4),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn duplicate_names_rejected_both_ways() {
        let dup = [scalar_stream("audio"), scalar_stream("audio")];
        assert!(encode_feature_file(&dup).is_err());
        let mut bytes = encode_feature_file(&[scalar_stream("audio"), scalar_stream("audix")]).unwrap();
        let second = bytes.len() - (2 + 5 + 12 + 4);
        bytes[second + 2 + 4] = b'o';
        assert!(matches!(decode_feature_file(&bytes), Err(Error::Format { .. })));
    }

    #[test]
    fn empty_stream_list_rejected() {
        assert!(encode_feature_file(&[]).is_err());
    }

    #[test]
    fn duration_consistency() {
        let s = FeatureSequence::new("visual", 10.0, Matrix::zeros(50, 2)).unwrap();
        assert!(s.check_duration(5.0).is_ok());
        assert!(s.check_duration(5.09).is_ok());
        assert!(s.check_duration(5.2).is_err());
    }
}
