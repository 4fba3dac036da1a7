//! `MMCK` checkpoints.
//!
//! ```text
//! "MMCK" | u32 version | u32 config_len | config (UTF-8 JSON) | MMF1 block of named tensors
//! ```
//!
//! Parameter tensors use the feature-stream encoding with a rate field of 0.

use std::fs;
use std::path::Path;

use super::config::ModelConfig;
use super::params::ModelParams;
use crate::datamodel::features::{decode_streams, encode_streams, RawStream};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"MMCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: ModelParams<f32>,
}

pub fn encode_checkpoint(config: &ModelConfig, params: &ModelParams<f32>) -> Result<Vec<u8>> {
    params.check_layout(config)?;
    let cfg = serde_json::to_vec(config)?;
    let named = params.into_named();
    let raw: Vec<RawStream<'_>> = named
        .iter()
        .map(|(name, m)| RawStream {
            name,
            rate_hz: 0.0,
            values: m,
        })
        .collect();
    let body = encode_streams(&raw)?;
    let mut out = Vec::with_capacity(12 + cfg.len() + body.len());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(cfg.len() as u32).to_le_bytes());
    out.extend_from_slice(&cfg);
    out.extend_from_slice(&body);
    Ok(out)
}

pub fn decode_checkpoint(buf: &[u8]) -> Result<Checkpoint> {
    let fmt = |offset: usize, msg: String| Error::Format { offset, msg };
    if buf.len() < 12 {
        return Err(fmt(buf.len(), "truncated checkpoint header".into()));
    }
    if &buf[..4] != CHECKPOINT_MAGIC {
        return Err(fmt(0, format!("bad magic {:?}", String::from_utf8_lossy(&buf[..4]))));
    }
    let version = u32::from_le_bytes(buf[4..8].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(fmt(4, format!("unsupported checkpoint version {version}")));
    }
    let cfg_len = u32::from_le_bytes(buf[8..12].try_into().unwrap()) as usize;
    let cfg_end = 12usize
        .checked_add(cfg_len)
        .filter(|&e| e <= buf.len())
        .ok_or_else(|| fmt(12, format!("truncated config: {cfg_len} bytes declared")))?;
    let config: ModelConfig =
        serde_json::from_slice(&buf[12..cfg_end]).map_err(|e| fmt(12, format!("config: {e}")))?;
    config.validate().map_err(|e| fmt(12, e.to_string()))?;
    let (streams, used) = decode_streams(&buf[cfg_end..], cfg_end)?;
    if cfg_end + used != buf.len() {
        return Err(fmt(cfg_end + used, "trailing bytes after tensors".into()));
    }
    let named = streams.into_iter().map(|s| (s.name, s.values)).collect();
    let params = ModelParams::from_named(&config, named).map_err(|e| fmt(cfg_end, e.to_string()))?;
    Ok(Checkpoint { config, params })
}

pub fn save_checkpoint(path: impl AsRef<Path>, config: &ModelConfig, params: &ModelParams<f32>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_checkpoint(config, params)?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    decode_checkpoint(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::config::Variant;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small() -> ModelConfig {
        ModelConfig {
            d_audio: 6,
            d_visual: 4,
            hidden: 5,
            ..Default::default()
        }
    }

    #[test]
    fn round_trip_every_variant() {
        for &v in Variant::ALL {
            let cfg = small().with_variant(v);
            let params = ModelParams::init(&cfg, &mut ChaCha8Rng::seed_from_u64(9));
            let bytes = encode_checkpoint(&cfg, &params).unwrap();
            let ck = decode_checkpoint(&bytes).unwrap();
            assert_eq!(ck.config, cfg);
            assert_eq!(encode_checkpoint(&ck.config, &ck.params).unwrap(), bytes);
        }
    }

    #[test]
    fn corrupt_headers() {
        let cfg = small();
        let params = ModelParams::init(&cfg, &mut ChaCha8Rng::seed_from_u64(9));
        let bytes = encode_checkpoint(&cfg, &params).unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_checkpoint(&bad), Err(Error::Format { offset: 0, .. })));
        let mut bad = bytes.clone();
        bad[4] = 7;
        assert!(matches!(decode_checkpoint(&bad), Err(Error::Format { offset: 4, .. })));
        assert!(matches!(
            decode_checkpoint(&bytes[..bytes.len() - 3]),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn layout_mismatch_is_rejected_on_save() {
        let cfg = small();
        let params = ModelParams::<f32>::zeros(&cfg.clone().with_variant(Variant::Concat));
        assert!(encode_checkpoint(&cfg, &params).is_err());
    }
}
