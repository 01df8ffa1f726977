//! Binary parameter checkpoints.
//!
//! Layout: 8-byte magic `GCALCKP1`, a little-endian u32 header length, a JSON
//! header, then the payload of raw little-endian f64 values. The header lists
//! every parameter (sorted by name) with its shape and element offset into
//! the payload, plus a SHA-256 checksum of the payload bytes. Writes go to a
//! temporary file that is renamed into place, so a crash cannot leave a
//! truncated checkpoint behind.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::matrix::DenseMatrix;
use super::params::ParamSet;

const MAGIC: &[u8; 8] = b"GCALCKP1";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("malformed checkpoint header: {0}")]
    Header(#[from] serde_json::Error),
    #[error("checkpoint payload checksum mismatch")]
    ChecksumMismatch,
    #[error("checkpoint entry {name} lies outside the payload")]
    EntryOutOfBounds { name: String },
    #[error("parameter {name} missing from checkpoint")]
    MissingParam { name: String },
    #[error("checkpoint parameter {name} not present in this model")]
    UnknownParam { name: String },
    #[error("parameter {name} has shape {actual:?}, checkpoint has {expected:?}")]
    ShapeMismatch {
        name: String,
        expected: (usize, usize),
        actual: (usize, usize),
    },
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    checksum: String,
    params: Vec<Entry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Entry {
    name: String,
    rows: usize,
    cols: usize,
    offset: usize,
}

/// Serializes all parameter values to `path`, atomically.
pub fn save_checkpoint(path: &Path, params: &ParamSet) -> Result<(), CheckpointError> {
    let mut named: Vec<(&str, &DenseMatrix)> = params
        .iter()
        .map(|(_, p)| (p.name.as_str(), &p.value))
        .collect();
    named.sort_by_key(|(name, _)| *name);

    let mut entries = Vec::with_capacity(named.len());
    let mut payload = Vec::with_capacity(params.scalar_count() * 8);
    for (name, value) in named {
        entries.push(Entry {
            name: name.to_string(),
            rows: value.rows(),
            cols: value.cols(),
            offset: payload.len() / 8,
        });
        for v in value.values() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }

    let checksum = hex_digest(&payload);
    let header = Header {
        format_version: FORMAT_VERSION,
        checksum,
        params: entries,
    };
    let header_bytes = serde_json::to_vec(&header)?;

    let mut buf = Vec::with_capacity(12 + header_bytes.len() + payload.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(header_bytes.len() as u32).to_le_bytes());
    buf.extend_from_slice(&header_bytes);
    buf.extend_from_slice(&payload);

    let tmp = path.with_extension("ckpt.tmp");
    {
        let mut file = fs::File::create(&tmp)?;
        file.write_all(&buf)?;
        file.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Loads checkpoint values into `params`. The file must contain exactly the
/// parameters registered in the set, each with a matching shape.
pub fn load_checkpoint(path: &Path, params: &mut ParamSet) -> Result<(), CheckpointError> {
    let bytes = fs::read(path)?;
    if bytes.len() < 12 || &bytes[..8] != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    if bytes.len() < 12 + header_len {
        return Err(CheckpointError::BadMagic);
    }
    let header: Header = serde_json::from_slice(&bytes[12..12 + header_len])?;
    if header.format_version != FORMAT_VERSION {
        return Err(CheckpointError::UnsupportedVersion(header.format_version));
    }
    let payload = &bytes[12 + header_len..];
    if hex_digest(payload) != header.checksum {
        return Err(CheckpointError::ChecksumMismatch);
    }

    for entry in &header.params {
        if params.id(&entry.name).is_none() {
            return Err(CheckpointError::UnknownParam {
                name: entry.name.clone(),
            });
        }
    }

    let names: Vec<String> = params.iter().map(|(_, p)| p.name.clone()).collect();
    for name in names {
        let entry = header
            .params
            .iter()
            .find(|e| e.name == name)
            .ok_or_else(|| CheckpointError::MissingParam { name: name.clone() })?;
        let id = params.id(&name).expect("name comes from the set");
        let actual = params.value(id).shape();
        if actual != (entry.rows, entry.cols) {
            return Err(CheckpointError::ShapeMismatch {
                name,
                expected: (entry.rows, entry.cols),
                actual,
            });
        }
        let count = entry.rows * entry.cols;
        let start = entry.offset * 8;
        let end = start + count * 8;
        if end > payload.len() {
            return Err(CheckpointError::EntryOutOfBounds { name });
        }
        let values: Vec<f64> = payload[start..end]
            .chunks_exact(8)
            .map(|chunk| f64::from_le_bytes(chunk.try_into().unwrap()))
            .collect();
        *params.value_mut(id) = DenseMatrix::from_vec(entry.rows, entry.cols, values);
    }
    Ok(())
}

fn hex_digest(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}
