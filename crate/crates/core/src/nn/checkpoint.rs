//! Binary container for model parameters.
//!
//! Layout (little endian): 8-byte magic `HKQMODEL`, `u32` format version,
//! `u64` header length, UTF-8 JSON header, `u64` array count, then each array
//! as a `u64` length followed by that many `f64` values.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"HKQMODEL";
pub const FORMAT_VERSION: u32 = 1;

pub fn encode<H: Serialize>(header: &H, arrays: &[&[f64]]) -> Result<Vec<u8>> {
    let json = serde_json::to_vec(header)?;
    let values: usize = arrays.iter().map(|a| a.len()).sum();
    let mut out = Vec::with_capacity(28 + json.len() + 8 * (arrays.len() + values));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&(arrays.len() as u64).to_le_bytes());
    for a in arrays {
        out.extend_from_slice(&(a.len() as u64).to_le_bytes());
        for v in *a {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or("truncated file")?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

fn decode_inner<H: DeserializeOwned>(bytes: &[u8]) -> std::result::Result<(H, Vec<Vec<f64>>), String> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err("not a model file (bad magic)".into());
    }
    let version = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(format!("unsupported format version {version}"));
    }
    let hlen = r.u64()? as usize;
    let header = serde_json::from_slice(r.take(hlen)?).map_err(|e| format!("bad header: {e}"))?;
    let count = r.u64()? as usize;
    let mut arrays = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let len = r.u64()? as usize;
        let raw = r.take(len.checked_mul(8).ok_or("array length overflow")?)?;
        arrays.push(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect());
    }
    if r.pos != bytes.len() {
        return Err(format!("{} trailing bytes", bytes.len() - r.pos));
    }
    Ok((header, arrays))
}

pub fn decode<H: DeserializeOwned>(bytes: &[u8], origin: &Path) -> Result<(H, Vec<Vec<f64>>)> {
    decode_inner(bytes).map_err(|reason| Error::format(origin, reason))
}

pub fn save<H: Serialize>(path: &Path, header: &H, arrays: &[&[f64]]) -> Result<()> {
    let bytes = encode(header, arrays)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load<H: DeserializeOwned>(path: &Path) -> Result<(H, Vec<Vec<f64>>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}

/// Copies `arrays` into `targets`, checking counts and lengths.
pub fn fill_tensors(targets: Vec<&mut [f64]>, arrays: &[Vec<f64>]) -> Result<()> {
    if targets.len() != arrays.len() {
        return Err(Error::ModelMismatch(format!("expected {} tensors, found {}", targets.len(), arrays.len())));
    }
    for (i, (t, a)) in targets.into_iter().zip(arrays).enumerate() {
        if t.len() != a.len() {
            return Err(Error::ModelMismatch(format!("tensor {i}: expected {} values, found {}", t.len(), a.len())));
        }
        t.copy_from_slice(a);
    }
    Ok(())
}
