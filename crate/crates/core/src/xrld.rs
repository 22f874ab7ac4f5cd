//! XRLD binary container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! 0..4        b"XRLD"
//! 4..8        u32 version (= 1)
//! 8..16       u64 header length H
//! 16..16+H    UTF-8 JSON header: { meta, arrays, [attrs] }
//! 16+H..      payload; each array row-major LE at an 8-byte aligned offset
//!             (relative to payload start), zero padded to the next multiple of 8
//! ```
//!
//! Datasets, embeddings and cluster assignments all share this container.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"XRLD";
pub const VERSION: u32 = 1;
const PREAMBLE: usize = 16;
const ALIGN: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub env_id: String,
    pub num_actions: u32,
    pub obs_shape: Vec<usize>,
    pub discount: f64,
    pub seed: u64,
    pub generator: String,
    /// Set when some `done` flags mark time-limit truncation rather than a true terminal.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub contains_truncations: bool,
    /// Episode indices (0-based, file order) that ended on the time limit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timeout_episodes: Option<Vec<u32>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    F32,
    I32,
    U8,
}

impl DType {
    pub fn tag(self) -> &'static str {
        match self {
            DType::F32 => "f32",
            DType::I32 => "i32",
            DType::U8 => "u8",
        }
    }

    pub fn size(self) -> usize {
        match self {
            DType::F32 | DType::I32 => 4,
            DType::U8 => 1,
        }
    }

    fn from_tag(tag: &str) -> Result<Self> {
        match tag {
            "f32" => Ok(DType::F32),
            "i32" => Ok(DType::I32),
            "u8" => Ok(DType::U8),
            other => Err(Error::Version(format!("unknown dtype tag {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ArrayData {
    F32(Vec<f32>),
    I32(Vec<i32>),
    U8(Vec<u8>),
}

impl ArrayData {
    pub fn dtype(&self) -> DType {
        match self {
            ArrayData::F32(_) => DType::F32,
            ArrayData::I32(_) => DType::I32,
            ArrayData::U8(_) => DType::U8,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            ArrayData::F32(v) => v.len(),
            ArrayData::I32(v) => v.len(),
            ArrayData::U8(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn write_le(&self, out: &mut Vec<u8>) {
        match self {
            ArrayData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            ArrayData::I32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            ArrayData::U8(v) => out.extend_from_slice(v),
        }
    }

    fn read_le(dtype: DType, bytes: &[u8]) -> Self {
        match dtype {
            DType::F32 => ArrayData::F32(
                bytes
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                    .collect(),
            ),
            DType::I32 => ArrayData::I32(
                bytes
                    .chunks_exact(4)
                    .map(|c| i32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                    .collect(),
            ),
            DType::U8 => ArrayData::U8(bytes.to_vec()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: ArrayData,
}

impl NamedArray {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, data: ArrayData) -> Self {
        Self {
            name: name.into(),
            shape,
            data,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayEntry {
    pub name: String,
    pub dtype: String,
    pub shape: Vec<usize>,
    pub offset: u64,
    pub nbytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub meta: Meta,
    pub arrays: Vec<ArrayEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attrs: Option<serde_json::Value>,
}

/// In-memory form of one XRLD file.
#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub meta: Meta,
    pub attrs: Option<serde_json::Value>,
    pub arrays: Vec<NamedArray>,
}

fn align_up(n: usize) -> usize {
    n.div_ceil(ALIGN) * ALIGN
}

impl Container {
    pub fn get(&self, name: &str) -> Option<&NamedArray> {
        self.arrays.iter().find(|a| a.name == name)
    }

    pub fn header(&self) -> Header {
        let mut offset = 0usize;
        let arrays = self
            .arrays
            .iter()
            .map(|a| {
                let nbytes = a.data.len() * a.data.dtype().size();
                let entry = ArrayEntry {
                    name: a.name.clone(),
                    dtype: a.data.dtype().tag().to_string(),
                    shape: a.shape.clone(),
                    offset: offset as u64,
                    nbytes: nbytes as u64,
                };
                offset = align_up(offset + nbytes);
                entry
            })
            .collect();
        Header {
            meta: self.meta.clone(),
            arrays,
            attrs: self.attrs.clone(),
        }
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        for a in &self.arrays {
            let expected: usize = a.shape.iter().product();
            if expected != a.data.len() {
                return Err(Error::Input(format!(
                    "array {} has shape {:?} but {} elements",
                    a.name,
                    a.shape,
                    a.data.len()
                )));
            }
        }
        let header =
            serde_json::to_vec(&self.header()).map_err(|e| Error::Format(format!("cannot serialize header: {e}")))?;
        let mut out = Vec::with_capacity(PREAMBLE + header.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        let payload_start = out.len();
        for a in &self.arrays {
            a.data.write_le(&mut out);
            let written = out.len() - payload_start;
            out.resize(payload_start + align_up(written), 0);
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || &bytes[0..4] != MAGIC {
            return Err(Error::Format("missing XRLD magic".into()));
        }
        if bytes.len() < PREAMBLE {
            return Err(Error::Corruption("truncated preamble".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != VERSION {
            return Err(Error::Version(format!("container version {version}")));
        }
        let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
        let header_end = usize::try_from(header_len)
            .ok()
            .and_then(|h| PREAMBLE.checked_add(h))
            .filter(|&end| end <= bytes.len())
            .ok_or_else(|| {
                Error::Corruption(format!("header length {header_len} exceeds file size {}", bytes.len()))
            })?;
        let header: Header = serde_json::from_slice(&bytes[PREAMBLE..header_end])
            .map_err(|e| Error::Format(format!("bad header JSON: {e}")))?;

        let payload = &bytes[header_end..];
        let mut arrays = Vec::with_capacity(header.arrays.len());
        let mut payload_end = 0usize;
        for entry in &header.arrays {
            let dtype = DType::from_tag(&entry.dtype)?;
            let count: usize = entry.shape.iter().product();
            let offset = entry.offset as usize;
            let nbytes = entry.nbytes as usize;
            if count * dtype.size() != nbytes {
                return Err(Error::Corruption(format!(
                    "array {}: shape {:?} needs {} bytes, header says {}",
                    entry.name,
                    entry.shape,
                    count * dtype.size(),
                    nbytes
                )));
            }
            if !offset.is_multiple_of(ALIGN) {
                return Err(Error::Corruption(format!(
                    "array {} offset {offset} is not 8-byte aligned",
                    entry.name
                )));
            }
            let end = offset
                .checked_add(nbytes)
                .filter(|&e| e <= payload.len())
                .ok_or_else(|| {
                    Error::Corruption(format!(
                        "array {} extends past payload ({} bytes)",
                        entry.name,
                        payload.len()
                    ))
                })?;
            payload_end = payload_end.max(align_up(end));
            arrays.push(NamedArray {
                name: entry.name.clone(),
                shape: entry.shape.clone(),
                data: ArrayData::read_le(dtype, &payload[offset..end]),
            });
        }
        if payload_end != payload.len() {
            return Err(Error::Corruption(format!(
                "payload is {} bytes, header describes {payload_end}",
                payload.len()
            )));
        }
        Ok(Container {
            meta: header.meta,
            attrs: header.attrs,
            arrays,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let bytes = self.encode()?;
        fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Container {
        Container {
            meta: Meta {
                env_id: "unit".into(),
                num_actions: 2,
                obs_shape: vec![1],
                discount: 1.0,
                seed: 0,
                generator: "test".into(),
                contains_truncations: false,
                timeout_episodes: None,
            },
            attrs: None,
            arrays: vec![
                NamedArray::new("a", vec![3], ArrayData::U8(vec![1, 2, 3])),
                NamedArray::new("b", vec![2], ArrayData::F32(vec![1.5, -2.0])),
            ],
        }
    }

    #[test]
    fn offsets_are_aligned_and_padded() {
        let c = sample();
        let h = c.header();
        assert_eq!(h.arrays[0].offset, 0);
        assert_eq!(h.arrays[0].nbytes, 3);
        assert_eq!(h.arrays[1].offset, 8);
        let bytes = c.encode().unwrap();
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        assert_eq!(bytes.len(), 16 + hlen + 16);
        // padding after the u8 array is zero
        assert_eq!(&bytes[16 + hlen + 3..16 + hlen + 8], &[0; 5]);
        assert_eq!(Container::decode(&bytes).unwrap(), c);
    }

    #[test]
    fn rejects_bad_magic() {
        let mut bytes = sample().encode().unwrap();
        bytes[3] = b'X';
        assert!(matches!(Container::decode(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn rejects_truncated_payload() {
        let mut bytes = sample().encode().unwrap();
        bytes.truncate(bytes.len() - 8);
        assert!(matches!(Container::decode(&bytes), Err(Error::Corruption(_))));
    }

    #[test]
    fn rejects_oversized_header_length() {
        let mut bytes = sample().encode().unwrap();
        bytes[8..16].copy_from_slice(&(1u64 << 40).to_le_bytes());
        assert!(matches!(Container::decode(&bytes), Err(Error::Corruption(_))));
    }

    #[test]
    fn rejects_unknown_dtype_and_version() {
        let mut bytes = sample().encode().unwrap();
        let at = bytes.windows(5).position(|w| w == b"\"f32\"").unwrap();
        bytes[at + 3] = b'4';
        assert!(matches!(Container::decode(&bytes), Err(Error::Version(_))));

        let mut bytes = sample().encode().unwrap();
        bytes[4] = 2;
        assert!(matches!(Container::decode(&bytes), Err(Error::Version(_))));
    }
}
