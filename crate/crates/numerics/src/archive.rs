//! Flat parameter checkpoints.
//!
//! A checkpoint directory holds two files:
//!
//! * `params.bin`: magic `PSETF32\0`, `u32` entry count, then per entry
//!   `u32` name length, UTF-8 name, `u32` rank, `u32` extents, and the
//!   values as little-endian `f32`. All integers are little-endian.
//! * `manifest.json`: names, shapes and trainable flags in the same order.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{NumericsError, Result};
use crate::params::ParameterSet;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"PSETF32\0";
pub const PAYLOAD_FILE: &str = "params.bin";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub trainable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub entries: Vec<ManifestEntry>,
}

pub fn encode(params: &ParameterSet) -> Vec<u8> {
    let mut buf = Vec::with_capacity(16 + params.scalar_count() * 4);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, t, _) in params.iter() {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in t.data() {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    buf
}

pub fn manifest(params: &ParameterSet) -> Manifest {
    Manifest {
        format: "pset-f32le/1".into(),
        entries: params
            .iter()
            .map(|(name, t, trainable)| ManifestEntry {
                name: name.to_string(),
                shape: t.shape().to_vec(),
                trainable,
            })
            .collect(),
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(NumericsError::Archive("truncated payload".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

/// Decodes a payload; flags come from `manifest` and must agree on names
/// and shapes.
pub fn decode(payload: &[u8], manifest: &Manifest) -> Result<ParameterSet> {
    let mut c = Cursor { buf: payload, pos: 0 };
    if c.take(8)? != MAGIC {
        return Err(NumericsError::Archive("bad magic".into()));
    }
    let count = c.u32()? as usize;
    if count != manifest.entries.len() {
        return Err(NumericsError::Archive(format!(
            "payload has {count} entries, manifest {}",
            manifest.entries.len()
        )));
    }
    let mut params = ParameterSet::new();
    for entry in &manifest.entries {
        let len = c.u32()? as usize;
        let name = std::str::from_utf8(c.take(len)?)
            .map_err(|e| NumericsError::Archive(e.to_string()))?
            .to_string();
        let rank = c.u32()? as usize;
        let shape = (0..rank).map(|_| c.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        if name != entry.name || shape != entry.shape {
            return Err(NumericsError::Archive(format!(
                "payload entry `{name}` {shape:?} disagrees with manifest `{}` {:?}",
                entry.name, entry.shape
            )));
        }
        let n: usize = shape.iter().product();
        let raw = c.take(n * 4)?;
        let data = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64)
            .collect();
        params.insert(name, Tensor::new(shape, data)?, entry.trainable)?;
    }
    if c.pos != payload.len() {
        return Err(NumericsError::Archive("trailing bytes after last entry".into()));
    }
    Ok(params)
}

pub fn save(params: &ParameterSet, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::File::create(dir.join(PAYLOAD_FILE))?.write_all(&encode(params))?;
    let json = serde_json::to_string_pretty(&manifest(params))
        .map_err(|e| NumericsError::Archive(e.to_string()))?;
    fs::write(dir.join(MANIFEST_FILE), json + "\n")?;
    Ok(())
}

pub fn load(dir: &Path) -> Result<ParameterSet> {
    let mut payload = Vec::new();
    fs::File::open(dir.join(PAYLOAD_FILE))?.read_to_end(&mut payload)?;
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST_FILE))?)
        .map_err(|e| NumericsError::Archive(e.to_string()))?;
    decode(&payload, &manifest)
}
