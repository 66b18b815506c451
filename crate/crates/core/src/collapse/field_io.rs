//! Binary field files: magic `SFCF`, `u32` version, `u32` rank, `u64` extents,
//! then little-endian `f64` values in row-major order. A JSON sidecar with the
//! same stem and extension `.json` carries metadata.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"SFCF";
pub const VERSION: u32 = 1;

/// Sidecar metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldHeader {
    pub name: String,
    pub dims: Vec<u64>,
    /// Meaning of each axis, e.g. `["y1", "y2", "a", "b"]`.
    pub axes: Vec<String>,
    #[serde(default)]
    pub metadata: serde_json::Value,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

pub fn write_field(path: &Path, header: &FieldHeader, data: &[f64]) -> Result<()> {
    let count: u64 = header.dims.iter().product();
    if count != data.len() as u64 {
        return Err(Error::Dimension(format!("field has {} values but dims {:?}", data.len(), header.dims)));
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(header.dims.len() as u32).to_le_bytes())?;
    for d in &header.dims {
        w.write_all(&d.to_le_bytes())?;
    }
    for v in data {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    std::fs::write(sidecar_path(path), serde_json::to_string_pretty(header)?)?;
    Ok(())
}

/// Reads the binary payload; the sidecar is used when present and must agree
/// with the binary extents.
pub fn read_field(path: &Path) -> Result<(FieldHeader, Vec<f64>)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut word = [0u8; 4];
    r.read_exact(&mut word)?;
    if word != MAGIC {
        return Err(Error::InvalidInput("not a field file (bad magic)".into()));
    }
    r.read_exact(&mut word)?;
    let version = u32::from_le_bytes(word);
    if version != VERSION {
        return Err(Error::InvalidInput(format!("unsupported field version {version}")));
    }
    r.read_exact(&mut word)?;
    let rank = u32::from_le_bytes(word) as usize;
    if rank > 16 {
        return Err(Error::InvalidInput(format!("implausible field rank {rank}")));
    }
    let mut dims = Vec::with_capacity(rank);
    let mut long = [0u8; 8];
    for _ in 0..rank {
        r.read_exact(&mut long)?;
        dims.push(u64::from_le_bytes(long));
    }
    let count = dims.iter().try_fold(1u64, |acc, d| acc.checked_mul(*d)).ok_or(Error::Overflow)? as usize;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != count * 8 {
        return Err(Error::InvalidInput(format!("payload has {} bytes, expected {}", bytes.len(), count * 8)));
    }
    let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect();
    let side = sidecar_path(path);
    let header = if side.exists() {
        let h: FieldHeader = serde_json::from_str(&std::fs::read_to_string(side)?)?;
        if h.dims != dims {
            return Err(Error::InvalidInput("sidecar dims disagree with the binary header".into()));
        }
        h
    } else {
        FieldHeader { name: String::new(), dims, axes: Vec::new(), metadata: serde_json::Value::Null }
    };
    Ok((header, data))
}
