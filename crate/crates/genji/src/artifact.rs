//! The `GNJI` model artifact.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "GNJI" | version u16 | header_len u32 | header JSON | params f32 x n | crc32 u32
//! ```
//!
//! The CRC covers every byte before it.

use std::fs;
use std::path::Path;

use genji_core::classifier::{ClassifierError, Model, ModelConfig, MODEL_VERSION};
use genji_core::features::{PreprocessFlags, ScalerStats, WindowConfig};
use serde::{Deserialize, Serialize};

pub const MAGIC: &[u8; 4] = b"GNJI";
const FIXED_LEN: usize = 4 + 2 + 4 + 4;

#[derive(Debug, thiserror::Error)]
pub enum ArtifactError {
    #[error("checksum mismatch (file truncated or corrupted)")]
    Checksum,
    #[error("not a GNJI artifact")]
    BadMagic,
    #[error("artifact version {found}, this build reads {expected}")]
    Version { found: u16, expected: u16 },
    #[error("header: {0}")]
    Header(String),
    #[error("parameter block has {got} bytes, header declares {expected} parameters")]
    ParamBlock { expected: usize, got: usize },
    #[error(transparent)]
    Model(#[from] ClassifierError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    window: WindowConfig,
    flags: PreprocessFlags,
    scaler: Option<ScalerStats>,
    train_seed: u64,
    param_count: usize,
}

pub fn encode(model: &Model) -> Vec<u8> {
    let header = Header {
        config: model.config,
        window: model.window,
        flags: model.flags,
        scaler: model.scaler.clone(),
        train_seed: model.train_seed,
        param_count: model.params().len(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(FIXED_LEN + json.len() + 4 * header.param_count);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for &p in model.params() {
        out.extend_from_slice(&(p as f32).to_le_bytes());
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

pub fn decode(bytes: &[u8]) -> Result<Model, ArtifactError> {
    if bytes.len() < FIXED_LEN {
        return Err(ArtifactError::Checksum);
    }
    let (body, crc) = bytes.split_at(bytes.len() - 4);
    if crc32fast::hash(body).to_le_bytes() != crc {
        return Err(ArtifactError::Checksum);
    }
    if &body[..4] != MAGIC {
        return Err(ArtifactError::BadMagic);
    }
    let version = u16::from_le_bytes([body[4], body[5]]);
    if version != MODEL_VERSION {
        return Err(ArtifactError::Version { found: version, expected: MODEL_VERSION });
    }
    let header_len = u32::from_le_bytes(body[6..10].try_into().expect("4 bytes")) as usize;
    let rest = &body[10..];
    if header_len > rest.len() {
        return Err(ArtifactError::Header("length exceeds file".into()));
    }
    let header: Header =
        serde_json::from_slice(&rest[..header_len]).map_err(|e| ArtifactError::Header(e.to_string()))?;
    let block = &rest[header_len..];
    if block.len() != header.param_count * 4 {
        return Err(ArtifactError::ParamBlock { expected: header.param_count, got: block.len() });
    }
    let params = block.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64).collect();
    Ok(Model::from_parts(header.config, header.window, header.flags, header.scaler, header.train_seed, params)?)
}

pub fn save_model(model: &Model, path: &Path) -> Result<(), ArtifactError> {
    fs::write(path, encode(model))?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<Model, ArtifactError> {
    decode(&fs::read(path)?)
}
