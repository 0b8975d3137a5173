//! Little-endian flat checkpoint format plus a human-readable manifest.
//!
//! Layout: magic, version, architecture hash, tensor count, then each tensor
//! as (name, rows, cols, values) in declaration order.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Parameterized;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"FARMDSP1";
const VERSION: u32 = 1;

/// FNV-1a over the architecture description string; stored in the header so
/// evaluation can refuse checkpoints built for a different network.
pub fn spec_hash(spec: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in spec.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub version: u32,
    pub spec: String,
    pub spec_hash: u64,
    pub tensors: Vec<TensorInfo>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

/// Write `<path>` (binary) and `<path>.manifest.json` (shapes, hash).
pub fn save_checkpoint<N: Parameterized>(net: &N, arch_spec: &str, path: &Path) -> Result<()> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&spec_hash(arch_spec).to_le_bytes());
    buf.extend_from_slice(&(net.num_tensors() as u32).to_le_bytes());
    let mut infos = Vec::new();
    for i in 0..net.num_tensors() {
        let t = net.tensor(i);
        let name = t.name.as_bytes();
        buf.extend_from_slice(&(name.len() as u16).to_le_bytes());
        buf.extend_from_slice(name);
        buf.extend_from_slice(&(t.rows as u32).to_le_bytes());
        buf.extend_from_slice(&(t.cols as u32).to_le_bytes());
        for v in &t.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        infos.push(TensorInfo { name: t.name.clone(), rows: t.rows, cols: t.cols });
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&buf)?;

    let header = CheckpointHeader {
        version: VERSION,
        spec: arch_spec.to_string(),
        spec_hash: spec_hash(arch_spec),
        tensors: infos,
    };
    let manifest_path = path.with_extension("manifest.json");
    fs::write(
        manifest_path,
        serde_json::to_string_pretty(&header)
            .map_err(|e| Error::Checkpoint(format!("manifest serialization: {e}")))?,
    )?;
    Ok(())
}

/// Load into an already-constructed network of the same architecture.
/// The stored hash must match `arch_spec`.
pub fn load_checkpoint<N: Parameterized>(net: &mut N, arch_spec: &str, path: &Path) -> Result<()> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut pos = 0usize;

    let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
        if *pos + n > bytes.len() {
            return Err(Error::Checkpoint("truncated checkpoint file".into()));
        }
        let s = &bytes[*pos..*pos + n];
        *pos += n;
        Ok(s)
    };

    if take(&mut pos, 8)? != MAGIC {
        return Err(Error::Checkpoint("bad magic; not a checkpoint file".into()));
    }
    let version = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap());
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let stored_hash = u64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap());
    let expect = spec_hash(arch_spec);
    if stored_hash != expect {
        return Err(Error::Checkpoint(format!(
            "architecture hash mismatch: checkpoint {stored_hash:#x}, expected {expect:#x}"
        )));
    }
    let count = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
    if count != net.num_tensors() {
        return Err(Error::Checkpoint(format!(
            "tensor count mismatch: checkpoint {count}, network {}",
            net.num_tensors()
        )));
    }
    for i in 0..count {
        let name_len = u16::from_le_bytes(take(&mut pos, 2)?.try_into().unwrap()) as usize;
        let name = String::from_utf8(take(&mut pos, name_len)?.to_vec())
            .map_err(|_| Error::Checkpoint("invalid tensor name".into()))?;
        let rows = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
        let cols = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
        {
            let t = net.tensor(i);
            if t.name != name || t.rows != rows || t.cols != cols {
                return Err(Error::Checkpoint(format!(
                    "tensor {i} mismatch: checkpoint {name} {rows}x{cols}, network {} {}x{}",
                    t.name, t.rows, t.cols
                )));
            }
        }
        let raw = take(&mut pos, rows * cols * 8)?.to_vec();
        let t = net.tensor_mut(i);
        for (j, chunk) in raw.chunks_exact(8).enumerate() {
            t.values[j] = f64::from_le_bytes(chunk.try_into().unwrap());
        }
    }
    Ok(())
}
