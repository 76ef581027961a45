//! TARC tensor archive.
//!
//! ```text
//! "TARC0001"                     8-byte magic
//! u32 LE                         tensor count
//! per tensor:
//!   u32 LE name length, UTF-8 name
//!   u32 LE rank, rank x u32 LE dims
//!   u8 dtype tag (1 = f32)
//!   little-endian row-major payload
//! ```
//!
//! Tensors are written in insertion order, so identical archives serialize
//! to identical bytes.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"TARC0001";
pub const DTYPE_F32: u8 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Tensor> {
        let n: usize = dims.iter().product();
        if n != data.len() {
            return Err(Error::MalformedArchive(format!(
                "dims {dims:?} need {n} elements, got {}",
                data.len()
            )));
        }
        Ok(Tensor { dims, data })
    }

    pub fn vector(data: Vec<f32>) -> Tensor {
        Tensor {
            dims: vec![data.len()],
            data,
        }
    }

    pub fn zeros(dims: Vec<usize>) -> Tensor {
        let n = dims.iter().product();
        Tensor { dims, data: vec![0.0; n] }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TensorArchive {
    entries: Vec<(String, Tensor)>,
}

impl TensorArchive {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts or replaces `name`.
    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) {
        let name = name.into();
        match self.entries.iter_mut().find(|(n, _)| *n == name) {
            Some(slot) => slot.1 = tensor,
            None => self.entries.push((name, tensor)),
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn remove(&mut self, name: &str) -> Option<Tensor> {
        let pos = self.entries.iter().position(|(n, _)| n == name)?;
        Some(self.entries.remove(pos).1)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Looks up `name` and checks its shape and finiteness.
    pub fn expect(&self, name: &str, dims: &[usize]) -> Result<&Tensor> {
        let t = self.get(name).ok_or_else(|| Error::MissingTensor(name.to_string()))?;
        if t.dims != dims {
            return Err(Error::TensorShape {
                name: name.to_string(),
                expected: dims.to_vec(),
                found: t.dims.clone(),
            });
        }
        if t.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteParameter(name.to_string()));
        }
        Ok(t)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for (name, t) in &self.entries {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.dims.len() as u32).to_le_bytes());
            for &d in &t.dims {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            out.push(DTYPE_F32);
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<TensorArchive> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(8)? != MAGIC {
            return Err(Error::MalformedArchive("missing TARC0001 magic".into()));
        }
        let count = cur.u32()? as usize;
        let mut archive = TensorArchive::new();
        for _ in 0..count {
            let name_len = cur.u32()? as usize;
            let name = std::str::from_utf8(cur.take(name_len)?)
                .map_err(|_| Error::MalformedArchive("tensor name is not UTF-8".into()))?
                .to_string();
            let rank = cur.u32()? as usize;
            let dims = (0..rank).map(|_| cur.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let tag = cur.take(1)?[0];
            if tag != DTYPE_F32 {
                return Err(Error::MalformedArchive(format!("tensor `{name}` has unknown dtype tag {tag}")));
            }
            let n: usize = dims.iter().product();
            let data = cur
                .take(n * 4)?
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            if archive.get(&name).is_some() {
                return Err(Error::MalformedArchive(format!("duplicate tensor `{name}`")));
            }
            archive.entries.push((name, Tensor { dims, data }));
        }
        if cur.pos != bytes.len() {
            return Err(Error::MalformedArchive(format!("{} trailing bytes", bytes.len() - cur.pos)));
        }
        Ok(archive)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<TensorArchive> {
        let path = path.as_ref();
        Self::from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    /// SHA-256 of the serialized archive, hex encoded.
    pub fn checksum(&self) -> String {
        sha256_hex(&self.to_bytes())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::MalformedArchive("truncated archive".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_checksum() {
        let mut a = TensorArchive::new();
        a.insert("w", Tensor::new(vec![2, 3], vec![1.0, -2.0, 3.5, 0.0, 1e-30, 7.0]).unwrap());
        a.insert("b", Tensor::vector(vec![0.25; 4]));
        let bytes = a.to_bytes();
        let back = TensorArchive::from_bytes(&bytes).unwrap();
        assert_eq!(back, a);
        assert_eq!(back.checksum(), a.checksum());
        assert_eq!(back.names().collect::<Vec<_>>(), vec!["w", "b"]);
    }

    #[test]
    fn truncation_and_bad_magic() {
        let mut a = TensorArchive::new();
        a.insert("x", Tensor::vector(vec![1.0, 2.0]));
        let bytes = a.to_bytes();
        assert!(TensorArchive::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(TensorArchive::from_bytes(&bad).is_err());
    }

    #[test]
    fn expect_checks_presence_shape_and_finiteness() {
        let mut a = TensorArchive::new();
        a.insert("x", Tensor::vector(vec![1.0, f32::NAN]));
        assert!(matches!(a.expect("y", &[2]), Err(Error::MissingTensor(n)) if n == "y"));
        assert!(matches!(a.expect("x", &[3]), Err(Error::TensorShape { .. })));
        assert!(matches!(a.expect("x", &[2]), Err(Error::NonFiniteParameter(n)) if n == "x"));
    }
}
