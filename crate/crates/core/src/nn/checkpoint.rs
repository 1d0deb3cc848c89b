//! Binary tensor files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic "MEVTNSR1"
//! u32 tensor count
//! per tensor:
//!   u32 name length, name bytes (UTF-8)
//!   u8  dtype (0 = f32, 1 = f64)
//!   u32 rank, then rank × u64 dims
//!   values, little-endian, in row-major order
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ParamStore, Tensor};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"MEVTNSR1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    F32,
    #[default]
    F64,
}

pub fn encode_tensors(tensors: &[(&str, &Tensor)], dtype: DType) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in tensors {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(match dtype {
            DType::F32 => 0,
            DType::F64 => 1,
        });
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in t.data() {
            match dtype {
                DType::F32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
                DType::F64 => out.extend_from_slice(&v.to_le_bytes()),
            }
        }
    }
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
    origin: &'a str,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Validation(format!(
                "{}: truncated tensor file at byte {}",
                self.origin, self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode_tensors(buf: &[u8], origin: &str) -> Result<Vec<(String, Tensor)>> {
    let mut c = Cursor { buf, pos: 0, origin };
    if c.take(8)? != MAGIC {
        return Err(Error::Validation(format!("{origin}: not a tensor file")));
    }
    let count = c.u32()? as usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let len = c.u32()? as usize;
        let name = std::str::from_utf8(c.take(len)?)
            .map_err(|_| Error::Validation(format!("{origin}: tensor name is not UTF-8")))?
            .to_string();
        let dtype = c.take(1)?[0];
        let rank = c.u32()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(c.u64()? as usize);
        }
        let n: usize = shape.iter().product();
        let data: Vec<f64> = match dtype {
            0 => c
                .take(n * 4)?
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
                .collect(),
            1 => c
                .take(n * 8)?
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
                .collect(),
            d => {
                return Err(Error::Validation(format!(
                    "{origin}: unknown dtype tag {d} for tensor {name}"
                )))
            }
        };
        out.push((name, Tensor::from_vec(&shape, data)?));
    }
    if c.pos != buf.len() {
        return Err(Error::Validation(format!("{origin}: trailing bytes after tensors")));
    }
    Ok(out)
}

pub fn save_tensors(path: &Path, tensors: &[(&str, &Tensor)], dtype: DType) -> Result<()> {
    let bytes = encode_tensors(tensors, dtype);
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn load_tensors(path: &Path) -> Result<Vec<(String, Tensor)>> {
    let mut buf = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| Error::io(path, e))?;
    decode_tensors(&buf, &path.display().to_string())
}

/// Write every parameter of `store`, in registration order.
pub fn save_params(path: &Path, store: &ParamStore, dtype: DType) -> Result<()> {
    let list: Vec<(&str, &Tensor)> = store.iter().map(|(_, p)| (p.name.as_str(), &p.tensor)).collect();
    save_tensors(path, &list, dtype)
}

/// Overwrite the values of `store` from a file. Names and shapes must match
/// exactly; missing or extra tensors are errors.
pub fn load_params(path: &Path, store: &mut ParamStore) -> Result<()> {
    let tensors = load_tensors(path)?;
    if tensors.len() != store.len() {
        return Err(Error::Validation(format!(
            "{}: {} tensors, model has {} parameters",
            path.display(),
            tensors.len(),
            store.len()
        )));
    }
    for (name, t) in tensors {
        let id = store
            .id(&name)
            .ok_or_else(|| Error::Validation(format!("{}: unknown parameter {name}", path.display())))?;
        let p = store.get_mut(id);
        if p.tensor.shape() != t.shape() {
            return Err(Error::Validation(format!(
                "{}: parameter {name} has shape {:?}, expected {:?}",
                path.display(),
                t.shape(),
                p.tensor.shape()
            )));
        }
        p.tensor = t;
    }
    Ok(())
}
