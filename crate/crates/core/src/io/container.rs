//! Binary tensor container.
//!
//! Layout: magic `S2MW`, format version (u32 LE), manifest length (u64 LE),
//! UTF-8 JSON manifest, then the payload. The manifest lists each tensor's
//! name, shape, dtype and byte offset into the payload; tensors are stored
//! back to back in manifest order, little-endian.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"S2MW";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    F32,
    F64,
    U32,
}

impl DType {
    pub fn size(self) -> usize {
        match self {
            DType::F32 | DType::U32 => 4,
            DType::F64 => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    F64(Vec<f64>),
    U32(Vec<u32>),
}

impl TensorData {
    pub fn dtype(&self) -> DType {
        match self {
            TensorData::F32(_) => DType::F32,
            TensorData::F64(_) => DType::F64,
            TensorData::U32(_) => DType::U32,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::F64(v) => v.len(),
            TensorData::U32(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: TensorData,
}

impl Tensor {
    /// Values widened to f64. Integer tensors are rejected.
    pub fn to_f64(&self) -> Result<Vec<f64>> {
        match &self.data {
            TensorData::F32(v) => Ok(v.iter().map(|&x| x as f64).collect()),
            TensorData::F64(v) => Ok(v.clone()),
            TensorData::U32(_) => Err(Error::format(&self.name, "expected a float tensor")),
        }
    }

    pub fn to_u32(&self) -> Result<&[u32]> {
        match &self.data {
            TensorData::U32(v) => Ok(v),
            _ => Err(Error::format(&self.name, "expected a u32 tensor")),
        }
    }

    pub fn expect_shape(&self, shape: &[usize]) -> Result<&Self> {
        if self.shape != shape {
            return Err(Error::Incompatible {
                field: format!("{} shape", self.name),
                expected: format!("{shape:?}"),
                found: format!("{:?}", self.shape),
            });
        }
        Ok(self)
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    dtype: DType,
    offset: u64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    metadata: Value,
    tensors: Vec<TensorEntry>,
}

/// Named tensors plus free-form JSON metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub metadata: Value,
    pub tensors: Vec<Tensor>,
}

impl Container {
    pub fn new(metadata: Value) -> Self {
        Self {
            metadata,
            tensors: Vec::new(),
        }
    }

    pub fn push(
        &mut self,
        name: impl Into<String>,
        shape: Vec<usize>,
        data: TensorData,
    ) -> Result<()> {
        let name = name.into();
        if shape.iter().product::<usize>() != data.len() {
            return Err(Error::shape(
                format!("tensor `{name}`"),
                shape.iter().product(),
                data.len(),
            ));
        }
        if self.tensors.iter().any(|t| t.name == name) {
            return Err(Error::format(name, "duplicate tensor name"));
        }
        self.tensors.push(Tensor { name, shape, data });
        Ok(())
    }

    /// Stores f64 values quantized to f32.
    pub fn push_f32(
        &mut self,
        name: impl Into<String>,
        shape: Vec<usize>,
        values: &[f64],
    ) -> Result<()> {
        self.push(
            name,
            shape,
            TensorData::F32(values.iter().map(|&x| x as f32).collect()),
        )
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::format(name, "tensor missing from container"))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut offset = 0u64;
        let entries = self
            .tensors
            .iter()
            .map(|t| {
                let e = TensorEntry {
                    name: t.name.clone(),
                    shape: t.shape.clone(),
                    dtype: t.data.dtype(),
                    offset,
                };
                offset += (t.data.len() * t.data.dtype().size()) as u64;
                e
            })
            .collect();
        let manifest = serde_json::to_vec(&Manifest {
            metadata: self.metadata.clone(),
            tensors: entries,
        })
        .map_err(|e| Error::format("manifest", e.to_string()))?;
        let mut out = Vec::with_capacity(HEADER_LEN + manifest.len() + offset as usize);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(manifest.len() as u64).to_le_bytes());
        out.extend_from_slice(&manifest);
        for t in &self.tensors {
            match &t.data {
                TensorData::F32(v) => v
                    .iter()
                    .for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
                TensorData::F64(v) => v
                    .iter()
                    .for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
                TensorData::U32(v) => v
                    .iter()
                    .for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(Error::format("magic", "not an S2MW container"));
        }
        if bytes.len() < HEADER_LEN {
            return Err(Error::format("header", "file ends inside the header"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(Error::format(
                "version",
                format!("unsupported version {version}, expected {FORMAT_VERSION}"),
            ));
        }
        let manifest_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let payload_start = HEADER_LEN
            .checked_add(manifest_len)
            .filter(|&end| end <= bytes.len())
            .ok_or_else(|| Error::format("manifest", "manifest length exceeds file size"))?;
        let manifest: Manifest = serde_json::from_slice(&bytes[HEADER_LEN..payload_start])
            .map_err(|e| Error::format("manifest", e.to_string()))?;
        let payload = &bytes[payload_start..];
        let mut expected_offset = 0usize;
        let mut tensors = Vec::with_capacity(manifest.tensors.len());
        for e in manifest.tensors {
            let count: usize = e.shape.iter().product();
            let start = e.offset as usize;
            if start != expected_offset {
                return Err(Error::format(
                    &e.name,
                    format!("offset {start} overlaps or leaves a gap (expected {expected_offset})"),
                ));
            }
            let end = start + count * e.dtype.size();
            if end > payload.len() {
                return Err(Error::format(
                    &e.name,
                    format!(
                        "truncated payload: tensor needs bytes {start}..{end}, payload has {}",
                        payload.len()
                    ),
                ));
            }
            let raw = &payload[start..end];
            let data = match e.dtype {
                DType::F32 => TensorData::F32(
                    raw.chunks_exact(4)
                        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                        .collect(),
                ),
                DType::F64 => TensorData::F64(
                    raw.chunks_exact(8)
                        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                        .collect(),
                ),
                DType::U32 => TensorData::U32(
                    raw.chunks_exact(4)
                        .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
                        .collect(),
                ),
            };
            expected_offset = end;
            tensors.push(Tensor {
                name: e.name,
                shape: e.shape,
                data,
            });
        }
        if expected_offset != payload.len() {
            return Err(Error::format(
                "payload",
                format!("{} trailing bytes", payload.len() - expected_offset),
            ));
        }
        Ok(Self {
            metadata: manifest.metadata,
            tensors,
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), &self.to_bytes()?)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

/// Writes through a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// String field of the metadata object.
pub(crate) fn meta_str<'a>(meta: &'a Value, key: &str) -> Result<&'a str> {
    meta.get(key)
        .and_then(Value::as_str)
        .ok_or_else(|| Error::format(key, "missing or not a string"))
}

pub(crate) fn meta_field<T: serde::de::DeserializeOwned>(meta: &Value, key: &str) -> Result<T> {
    let v = meta
        .get(key)
        .ok_or_else(|| Error::format(key, "missing from metadata"))?;
    T::deserialize(v).map_err(|e| Error::format(key, e.to_string()))
}
