//! Model checkpoint container.
//!
//! Layout: 8-byte magic, `u32` format version, `u32` header length, UTF-8 JSON
//! header, then every parameter block as little-endian `f64` in the order the
//! header lists them.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::extract::{Model, SegmentConfig};
use super::net::{CUNetParams, NetConfig};
use crate::spectral::StftConfig;
use crate::{Error, Result};

pub const MAGIC: &[u8; 8] = b"FECGCKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub per_segment_zscore: bool,
    pub segment: SegmentConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockInfo {
    pub name: String,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub architecture: NetConfig,
    pub stft: StftConfig,
    pub normalization: Normalization,
    pub seed: u64,
    pub fs: f64,
    pub blocks: Vec<BlockInfo>,
}

pub fn to_bytes(model: &Model) -> Result<Vec<u8>> {
    let header = CheckpointHeader {
        architecture: model.params.config.clone(),
        stft: model.stft,
        normalization: Normalization {
            per_segment_zscore: true,
            segment: model.segment,
        },
        seed: model.seed,
        fs: model.fs,
        blocks: model
            .params
            .block_layout()
            .into_iter()
            .map(|(name, len)| BlockInfo { name, len })
            .collect(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::Format(e.to_string()))?;
    let mut out = Vec::with_capacity(16 + json.len() + 8 * model.params.num_params());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for v in model.params.flatten() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

fn take<'a>(bytes: &mut &'a [u8], n: usize, what: &str) -> Result<&'a [u8]> {
    if bytes.len() < n {
        return Err(Error::Truncated(format!("checkpoint ends inside {what}")));
    }
    let (head, rest) = bytes.split_at(n);
    *bytes = rest;
    Ok(head)
}

pub fn from_bytes(mut bytes: &[u8]) -> Result<Model> {
    let magic = take(&mut bytes, 8, "magic")?;
    if magic != MAGIC {
        return Err(Error::Format("not a checkpoint file".into()));
    }
    let version = u32::from_le_bytes(take(&mut bytes, 4, "version")?.try_into().unwrap());
    if version != VERSION {
        return Err(Error::Version {
            found: version,
            supported: VERSION,
        });
    }
    let hlen = u32::from_le_bytes(take(&mut bytes, 4, "header length")?.try_into().unwrap()) as usize;
    let header: CheckpointHeader = serde_json::from_slice(take(&mut bytes, hlen, "header")?)
        .map_err(|e| Error::Format(format!("checkpoint header: {e}")))?;
    let mut params = CUNetParams::empty(header.architecture.clone())?;
    let layout = params.block_layout();
    let declared: Vec<(String, usize)> = header.blocks.iter().map(|b| (b.name.clone(), b.len)).collect();
    if layout != declared {
        return Err(Error::Format("parameter blocks do not match the architecture".into()));
    }
    let n = params.num_params();
    let raw = take(&mut bytes, 8 * n, "parameter blocks")?;
    if !bytes.is_empty() {
        return Err(Error::Format(format!(
            "{} trailing bytes after parameters",
            bytes.len()
        )));
    }
    let flat: Vec<f64> = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    params.load_flat(&flat)?;
    Model::new(
        params,
        header.stft,
        header.normalization.segment,
        header.fs,
        header.seed,
    )
}

pub fn save(model: &Model, path: &Path) -> Result<()> {
    let bytes = to_bytes(model)?;
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Model> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}
