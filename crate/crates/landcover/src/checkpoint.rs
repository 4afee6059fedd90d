//! Checkpoint container: a small binary format holding a JSON metadata
//! document plus raw little-endian f32 tensor payloads.
//!
//! Layout: `"LCCK"` magic, u32 LE version, u64 LE header length, the JSON
//! header, then every tensor's data back to back in header order. The
//! header records each network's spec and a tensor directory (name and
//! shape), so a load can validate sizes before touching the payload.

use std::collections::BTreeMap;
use std::io::{Read as _, Write as _};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nets::NetworkSpec;

pub const MAGIC: [u8; 4] = *b"LCCK";
pub const VERSION: u32 = 1;

/// One network's spec and flattened parameter tensors, as stored.
#[derive(Debug, Clone, PartialEq)]
pub struct NetState {
    pub spec: NetworkSpec,
    pub tensors: Vec<(String, Vec<usize>, Vec<f32>)>,
}

#[derive(Serialize, Deserialize)]
struct HeaderDoc {
    meta: serde_json::Value,
    nets: Vec<NetHeader>,
}

#[derive(Serialize, Deserialize)]
struct NetHeader {
    name: String,
    spec: NetworkSpec,
    tensors: Vec<TensorHeader>,
}

#[derive(Serialize, Deserialize)]
struct TensorHeader {
    name: String,
    shape: Vec<usize>,
}

fn invalid(path: &Path, reason: impl Into<String>) -> Error {
    Error::Checkpoint {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// Write a checkpoint. `meta` is any serializable document (training
/// config, counters, optimizer and RNG state); `nets` maps a name to the
/// network's spec and state dict.
pub fn save<M: Serialize>(
    path: &Path,
    meta: &M,
    nets: &BTreeMap<String, NetState>,
) -> Result<()> {
    let meta_value = serde_json::to_value(meta)
        .map_err(|e| invalid(path, format!("metadata serialization failed: {e}")))?;
    let header = HeaderDoc {
        meta: meta_value,
        nets: nets
            .iter()
            .map(|(name, state)| NetHeader {
                name: name.clone(),
                spec: state.spec.clone(),
                tensors: state
                    .tensors
                    .iter()
                    .map(|(n, shape, _)| TensorHeader {
                        name: n.clone(),
                        shape: shape.clone(),
                    })
                    .collect(),
            })
            .collect(),
    };
    let header_bytes = serde_json::to_vec(&header)
        .map_err(|e| invalid(path, format!("header serialization failed: {e}")))?;

    let mut file = std::io::BufWriter::new(
        std::fs::File::create(path).map_err(|e| Error::io(path, e))?,
    );
    let io = |e| Error::io(path, e);
    file.write_all(&MAGIC).map_err(io)?;
    file.write_all(&VERSION.to_le_bytes()).map_err(io)?;
    file.write_all(&(header_bytes.len() as u64).to_le_bytes())
        .map_err(io)?;
    file.write_all(&header_bytes).map_err(io)?;
    for state in nets.values() {
        for (name, shape, data) in &state.tensors {
            let expected: usize = shape.iter().product();
            if data.len() != expected {
                return Err(invalid(
                    path,
                    format!("tensor {name} has {} values, shape says {expected}", data.len()),
                ));
            }
            for v in data {
                file.write_all(&v.to_le_bytes()).map_err(io)?;
            }
        }
    }
    file.flush().map_err(io)
}

/// Read a checkpoint back; the inverse of [`save`].
pub fn load<M: DeserializeOwned>(path: &Path) -> Result<(M, BTreeMap<String, NetState>)> {
    let mut file = std::io::BufReader::new(
        std::fs::File::open(path).map_err(|e| Error::io(path, e))?,
    );
    let io = |e| Error::io(path, e);
    let mut magic = [0u8; 4];
    file.read_exact(&mut magic).map_err(io)?;
    if magic != MAGIC {
        return Err(invalid(path, format!("bad magic {magic:?}")));
    }
    let mut word = [0u8; 4];
    file.read_exact(&mut word).map_err(io)?;
    let version = u32::from_le_bytes(word);
    if version != VERSION {
        return Err(invalid(path, format!("unsupported version {version}")));
    }
    let mut len_bytes = [0u8; 8];
    file.read_exact(&mut len_bytes).map_err(io)?;
    let header_len = u64::from_le_bytes(len_bytes) as usize;
    let mut header_bytes = vec![0u8; header_len];
    file.read_exact(&mut header_bytes).map_err(io)?;
    let header: HeaderDoc = serde_json::from_slice(&header_bytes)
        .map_err(|e| invalid(path, format!("header parse failed: {e}")))?;
    let meta: M = serde_json::from_value(header.meta)
        .map_err(|e| invalid(path, format!("metadata parse failed: {e}")))?;

    let mut nets = BTreeMap::new();
    for net in header.nets {
        let mut tensors = Vec::with_capacity(net.tensors.len());
        for t in net.tensors {
            let count: usize = t.shape.iter().product();
            let mut bytes = vec![0u8; count * 4];
            file.read_exact(&mut bytes).map_err(|e| {
                invalid(path, format!("payload truncated reading tensor {}: {e}", t.name))
            })?;
            let data: Vec<f32> = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            tensors.push((t.name, t.shape, data));
        }
        nets.insert(net.name, NetState { spec: net.spec, tensors });
    }
    // anything left over means the header and payload disagree
    let mut probe = [0u8; 1];
    match file.read(&mut probe) {
        Ok(0) => {}
        Ok(_) => return Err(invalid(path, "trailing bytes after last tensor")),
        Err(e) => return Err(Error::io(path, e)),
    }
    Ok((meta, nets))
}
