//! Flat binary checkpoint container.
//!
//! Layout: 8-byte magic `PLANECK1`, little-endian u64 header length, a JSON
//! header listing format version plus (name, shape) entries in storage
//! order, then the concatenated little-endian f64 buffers.

use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 8] = b"PLANECK1";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    version: u32,
    entries: Vec<CheckpointEntry>,
}

/// Writes named tensors; entries are sorted by name so identical parameter
/// sets serialize byte-identically.
pub fn save_checkpoint(path: &Path, tensors: &[(String, Vec<usize>, Vec<f64>)]) -> Result<()> {
    let mut sorted: Vec<&(String, Vec<usize>, Vec<f64>)> = tensors.iter().collect();
    sorted.sort_by(|a, b| a.0.cmp(&b.0));
    let header = Header {
        version: FORMAT_VERSION,
        entries: sorted
            .iter()
            .map(|(name, shape, _)| CheckpointEntry {
                name: name.clone(),
                shape: shape.clone(),
            })
            .collect(),
    };
    let header_json = serde_json::to_vec(&header)
        .map_err(|e| Error::Checkpoint(format!("header encode: {e}")))?;
    let file = File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e| Error::io(path.display().to_string(), e);
    w.write_all(MAGIC).map_err(io_err)?;
    w.write_all(&(header_json.len() as u64).to_le_bytes()).map_err(io_err)?;
    w.write_all(&header_json).map_err(io_err)?;
    for (name, shape, data) in sorted {
        if shape.iter().product::<usize>() != data.len() {
            return Err(Error::Checkpoint(format!(
                "tensor '{name}' data length {} does not match shape {shape:?}",
                data.len()
            )));
        }
        for v in data {
            w.write_all(&v.to_le_bytes()).map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)
}

/// Reads a checkpoint back as (name, shape, data) triples in storage order.
pub fn load_checkpoint(path: &Path) -> Result<Vec<(String, Vec<usize>, Vec<f64>)>> {
    let file = File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut r = BufReader::new(file);
    let io_err = |e| Error::io(path.display().to_string(), e);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(io_err)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let mut len_bytes = [0u8; 8];
    r.read_exact(&mut len_bytes).map_err(io_err)?;
    let header_len = u64::from_le_bytes(len_bytes) as usize;
    let mut header_json = vec![0u8; header_len];
    r.read_exact(&mut header_json).map_err(io_err)?;
    let header: Header = serde_json::from_slice(&header_json)
        .map_err(|e| Error::Checkpoint(format!("header decode: {e}")))?;
    if header.version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format version {}",
            header.version
        )));
    }
    let mut out = Vec::with_capacity(header.entries.len());
    for entry in header.entries {
        let count: usize = entry.shape.iter().product();
        let mut buf = vec![0u8; count * 8];
        r.read_exact(&mut buf).map_err(io_err)?;
        let data: Vec<f64> = buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        out.push((entry.name, entry.shape, data));
    }
    Ok(out)
}
