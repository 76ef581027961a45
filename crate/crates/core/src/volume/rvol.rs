//! RVOL volume container.
//!
//! ```text
//! "RVOL0001"                      8-byte magic
//! u32 LE                          header length in bytes
//! UTF-8 key=value lines           shape=X,Y,Z / spacing=sx,sy,sz /
//!                                 origin=ox,oy,oz / dtype=f32|u8
//! payload                         little-endian, x fastest
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::{Geometry, Volume};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"RVOL0001";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dtype {
    F32,
    U8,
}

impl Dtype {
    pub fn as_str(self) -> &'static str {
        match self {
            Dtype::F32 => "f32",
            Dtype::U8 => "u8",
        }
    }

    fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::U8 => 1,
        }
    }
}

/// Parsed RVOL header.
#[derive(Clone, Debug, PartialEq)]
pub struct Header {
    pub geometry: Geometry,
    pub dtype: Dtype,
}

fn fmt_triple<T: std::fmt::Display>(v: &[T; 3]) -> String {
    format!("{},{},{}", v[0], v[1], v[2])
}

fn parse_triple<T: std::str::FromStr>(key: &str, value: &str) -> Result<[T; 3]> {
    let parts: Vec<&str> = value.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(Error::MalformedHeader(format!("`{key}` needs three values, got `{value}`")));
    }
    let mut out = Vec::with_capacity(3);
    for p in parts {
        out.push(
            p.parse::<T>()
                .map_err(|_| Error::MalformedHeader(format!("bad number `{p}` in `{key}`")))?,
        );
    }
    out.try_into()
        .map_err(|_| Error::MalformedHeader(format!("bad `{key}`")))
}

/// Serializes a volume with its header; `payload` must already be the
/// little-endian element bytes.
pub fn encode(geometry: &Geometry, dtype: Dtype, payload: &[u8]) -> Vec<u8> {
    let header = format!(
        "shape={}\nspacing={}\norigin={}\ndtype={}\n",
        fmt_triple(&geometry.dims),
        fmt_triple(&geometry.spacing),
        fmt_triple(&geometry.origin),
        dtype.as_str()
    );
    let mut out = Vec::with_capacity(12 + header.len() + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(payload);
    out
}

/// Splits an RVOL byte buffer into header and payload, checking sizes.
pub fn decode(bytes: &[u8]) -> Result<(Header, &[u8])> {
    if bytes.len() < 12 || &bytes[..8] != MAGIC {
        return Err(Error::MalformedHeader("missing RVOL0001 magic".into()));
    }
    let len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let text = bytes
        .get(12..12 + len)
        .ok_or_else(|| Error::MalformedHeader("header length exceeds file size".into()))?;
    let text = std::str::from_utf8(text).map_err(|_| Error::MalformedHeader("header is not UTF-8".into()))?;

    let mut fields = BTreeMap::new();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::MalformedHeader(format!("line without `=`: `{line}`")))?;
        fields.insert(k.trim(), v.trim());
    }
    let get = |k: &str| {
        fields
            .get(k)
            .copied()
            .ok_or_else(|| Error::MalformedHeader(format!("missing `{k}`")))
    };
    let dims: [usize; 3] = parse_triple("shape", get("shape")?)?;
    let spacing: [f64; 3] = parse_triple("spacing", get("spacing")?)?;
    let origin: [f64; 3] = match fields.get("origin") {
        Some(v) => parse_triple("origin", v)?,
        None => [0.0; 3],
    };
    let dtype = match get("dtype")? {
        "f32" => Dtype::F32,
        "u8" => Dtype::U8,
        other => return Err(Error::MalformedHeader(format!("unsupported dtype `{other}`"))),
    };
    let geometry = Geometry { dims, spacing, origin };
    geometry
        .validate()
        .map_err(|e| Error::MalformedHeader(e.to_string()))?;

    let payload = &bytes[12 + len..];
    let expected = geometry.len() * dtype.size();
    if payload.len() != expected {
        return Err(Error::PayloadSizeMismatch {
            expected,
            found: payload.len(),
        });
    }
    Ok((Header { geometry, dtype }, payload))
}

pub fn f32_payload(data: &[f32]) -> Vec<u8> {
    data.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn encode_f32(vol: &Volume<f32>) -> Vec<u8> {
    encode(&vol.geometry, Dtype::F32, &f32_payload(&vol.data))
}

pub fn encode_u8(vol: &Volume<u8>) -> Vec<u8> {
    encode(&vol.geometry, Dtype::U8, &vol.data)
}

pub fn decode_f32(bytes: &[u8]) -> Result<Volume<f32>> {
    let (header, payload) = decode(bytes)?;
    if header.dtype != Dtype::F32 {
        return Err(Error::DtypeMismatch {
            expected: "f32",
            found: header.dtype.as_str().into(),
        });
    }
    let data: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let vol = Volume {
        geometry: header.geometry,
        data,
    };
    vol.check_finite()?;
    Ok(vol)
}

pub fn decode_u8(bytes: &[u8]) -> Result<Volume<u8>> {
    let (header, payload) = decode(bytes)?;
    if header.dtype != Dtype::U8 {
        return Err(Error::DtypeMismatch {
            expected: "u8",
            found: header.dtype.as_str().into(),
        });
    }
    let vol = Volume {
        geometry: header.geometry,
        data: payload.to_vec(),
    };
    vol.check_binary()?;
    Ok(vol)
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_volume(path: impl AsRef<Path>) -> Result<Volume<f32>> {
    decode_f32(&read(path.as_ref())?)
}

pub fn write_volume(path: impl AsRef<Path>, vol: &Volume<f32>) -> Result<()> {
    write(path.as_ref(), &encode_f32(vol))
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<Volume<u8>> {
    decode_u8(&read(path.as_ref())?)
}

pub fn write_mask(path: impl AsRef<Path>, mask: &Volume<u8>) -> Result<()> {
    write(path.as_ref(), &encode_u8(mask))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    fn geom(dims: [usize; 3]) -> Geometry {
        Geometry::new(dims, [1.0; 3], [0.0; 3]).unwrap()
    }

    #[test]
    fn constant_volume_reads_back() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("zero.rvol");
        write_volume(&path, &Volume::filled(geom([4, 4, 4]), 0.0)).unwrap();
        let vol = read_volume(&path).unwrap();
        assert_eq!(vol.data.len(), 64);
        assert!(vol.data.iter().all(|&v| v == 0.0));
        assert_eq!(vol.geometry.spacing, [1.0; 3]);
    }

    #[test]
    fn short_payload_is_rejected() {
        let bytes = encode(&geom([2, 2, 2]), Dtype::F32, &f32_payload(&[0.0; 7]));
        assert!(matches!(
            decode_f32(&bytes),
            Err(Error::PayloadSizeMismatch { expected: 32, found: 28 })
        ));
    }

    #[test]
    fn seeded_random_volume_round_trips_bit_exactly() {
        let mut r = rng::seeded(11);
        let g = Geometry::new([8, 8, 8], [0.7, 0.71, 2.5], [-120.25, 3.0, 1e-3]).unwrap();
        let vol = Volume::from_fn(g, |_, _, _| r.random_range(-1024.0f32..3071.0));
        let back = decode_f32(&encode_f32(&vol)).unwrap();
        assert_eq!(back.geometry, vol.geometry);
        assert!(back.data.iter().zip(&vol.data).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn malformed_headers() {
        assert!(matches!(decode(b"NOPE0001\0\0\0\0"), Err(Error::MalformedHeader(_))));
        let mut bytes = encode(&geom([1, 1, 1]), Dtype::U8, &[1]);
        let text = b"shape=1,1\nspacing=1,1,1\ndtype=u8\n";
        bytes.truncate(8);
        bytes.extend_from_slice(&(text.len() as u32).to_le_bytes());
        bytes.extend_from_slice(text);
        bytes.push(1);
        assert!(matches!(decode(&bytes), Err(Error::MalformedHeader(_))));
    }

    #[test]
    fn non_finite_and_non_binary_payloads() {
        let bytes = encode(&geom([2, 1, 1]), Dtype::F32, &f32_payload(&[1.0, f32::NAN]));
        assert!(matches!(decode_f32(&bytes), Err(Error::NonFiniteValue { index: 1 })));
        let bytes = encode(&geom([2, 1, 1]), Dtype::U8, &[0, 2]);
        assert!(decode_u8(&bytes).is_err());
        let bytes = encode(&geom([2, 1, 1]), Dtype::U8, &[0, 1]);
        assert!(matches!(decode_f32(&bytes), Err(Error::DtypeMismatch { .. })));
    }
}
