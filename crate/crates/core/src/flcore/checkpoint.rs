//! Checkpoints: raw little-endian f64 in canonical block order, plus a JSON
//! sidecar describing the topology and block offsets.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::params::{block_len, Block, ParamSet};
use crate::error::{Error, Result};
use crate::nnkit::Topology;

const FORMAT: &str = "mmirror-checkpoint";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockEntry {
    pub block: Block,
    pub offset: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format: String,
    pub version: u32,
    pub topology: Topology,
    pub blocks: Vec<BlockEntry>,
    pub total: usize,
}

/// Sidecar path for a checkpoint: `model.bin` → `model.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

pub fn save_checkpoint(params: &ParamSet, topology: &Topology, path: &Path) -> Result<CheckpointMeta> {
    params.check_shapes(topology)?;
    let mut blocks = Vec::new();
    let mut offset = 0;
    let mut bytes = Vec::new();
    for (block, v) in params.blocks() {
        blocks.push(BlockEntry { block, offset, len: v.len() });
        offset += v.len();
        bytes.extend(v.iter().flat_map(|x| x.to_le_bytes()));
    }
    let meta = CheckpointMeta {
        format: FORMAT.into(),
        version: VERSION,
        topology: topology.clone(),
        blocks,
        total: offset,
    };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    let side = sidecar_path(path);
    let json = serde_json::to_string_pretty(&meta).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(&side, json).map_err(|e| Error::io(&side, e))?;
    Ok(meta)
}

pub fn load_checkpoint(path: &Path) -> Result<(ParamSet, CheckpointMeta)> {
    let side = sidecar_path(path);
    let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let meta: CheckpointMeta = serde_json::from_str(&text).map_err(|e| Error::Format(e.to_string()))?;
    if meta.format != FORMAT || meta.version != VERSION {
        return Err(Error::Format(format!("unsupported checkpoint {} v{}", meta.format, meta.version)));
    }
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != meta.total * 8 {
        return Err(Error::Format(format!(
            "checkpoint holds {} bytes, sidecar declares {} values",
            bytes.len(),
            meta.total
        )));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    let mut params = ParamSet::default();
    for e in &meta.blocks {
        if e.len != block_len(&meta.topology, e.block)? || e.offset + e.len > values.len() {
            return Err(Error::Format(format!("bad extent for block {}", e.block.name())));
        }
        *params.slot(e.block) = Some(values[e.offset..e.offset + e.len].to_vec());
    }
    Ok((params, meta))
}
