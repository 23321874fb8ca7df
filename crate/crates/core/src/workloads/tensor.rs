//! Dense int8/int32 tensors and their binary blob form.
//!
//! ```text
//! 0   magic "TNSR"
//! 4   dtype u8 (0 = i8, 1 = i32)
//! 5   ndim  u8
//! 6   reserved, zero
//! 8   ndim x u32 dims
//!     data, little-endian, row-major
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const TENSOR_MAGIC: &[u8; 4] = b"TNSR";
const MAX_ELEMENTS: u64 = 1 << 28;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    I8,
    I32,
}

impl DType {
    pub fn size(self) -> usize {
        match self {
            DType::I8 => 1,
            DType::I32 => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TensorData {
    I8(Vec<i8>),
    I32(Vec<i32>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tensor {
    pub dims: Vec<u32>,
    pub data: TensorData,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TensorError {
    #[error("blob truncated: need {need} bytes, have {have}")]
    Truncated { need: usize, have: usize },
    #[error("bad tensor magic")]
    BadMagic,
    #[error("unknown dtype tag {0}")]
    DType(u8),
    #[error("reserved header bytes must be zero")]
    Reserved,
    #[error("tensor has more than {MAX_ELEMENTS} elements")]
    TooLarge,
    #[error("{actual} trailing data bytes, expected {expected}")]
    Length { expected: usize, actual: usize },
}

impl Tensor {
    pub fn i8(dims: Vec<u32>, data: Vec<i8>) -> Tensor {
        assert_eq!(element_count(&dims), Some(data.len()), "dims do not match data");
        Tensor { dims, data: TensorData::I8(data) }
    }

    pub fn i32(dims: Vec<u32>, data: Vec<i32>) -> Tensor {
        assert_eq!(element_count(&dims), Some(data.len()), "dims do not match data");
        Tensor { dims, data: TensorData::I32(data) }
    }

    pub fn dtype(&self) -> DType {
        match self.data {
            TensorData::I8(_) => DType::I8,
            TensorData::I32(_) => DType::I32,
        }
    }

    pub fn len(&self) -> usize {
        match &self.data {
            TensorData::I8(v) => v.len(),
            TensorData::I32(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Element `i` widened to `i32`.
    pub fn get(&self, i: usize) -> i32 {
        match &self.data {
            TensorData::I8(v) => i32::from(v[i]),
            TensorData::I32(v) => v[i],
        }
    }

    /// Raw little-endian payload, as laid out in simulator memory.
    pub fn le_bytes(&self) -> Vec<u8> {
        match &self.data {
            TensorData::I8(v) => v.iter().map(|&x| x as u8).collect(),
            TensorData::I32(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
        }
    }

    pub fn from_le_bytes(dtype: DType, dims: Vec<u32>, bytes: &[u8]) -> Tensor {
        match dtype {
            DType::I8 => Tensor::i8(dims, bytes.iter().map(|&b| b as i8).collect()),
            DType::I32 => {
                Tensor::i32(dims, bytes.chunks_exact(4).map(|c| i32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
            }
        }
    }

    pub fn to_blob(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 4 * self.dims.len() + self.len() * self.dtype().size());
        out.extend_from_slice(TENSOR_MAGIC);
        out.push(match self.dtype() {
            DType::I8 => 0,
            DType::I32 => 1,
        });
        out.push(u8::try_from(self.dims.len()).expect("at most 255 dims"));
        out.extend_from_slice(&[0, 0]);
        for d in &self.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        out.extend(self.le_bytes());
        out
    }

    pub fn from_blob(bytes: &[u8]) -> Result<Tensor, TensorError> {
        let need = |n: usize| {
            if bytes.len() < n {
                Err(TensorError::Truncated { need: n, have: bytes.len() })
            } else {
                Ok(())
            }
        };
        need(8)?;
        if &bytes[..4] != TENSOR_MAGIC {
            return Err(TensorError::BadMagic);
        }
        let dtype = match bytes[4] {
            0 => DType::I8,
            1 => DType::I32,
            t => return Err(TensorError::DType(t)),
        };
        if bytes[6] != 0 || bytes[7] != 0 {
            return Err(TensorError::Reserved);
        }
        let ndim = usize::from(bytes[5]);
        need(8 + 4 * ndim)?;
        let dims: Vec<u32> =
            bytes[8..8 + 4 * ndim].chunks_exact(4).map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        let count = dims.iter().try_fold(1u64, |acc, &d| acc.checked_mul(u64::from(d)).filter(|&n| n <= MAX_ELEMENTS));
        let count = count.ok_or(TensorError::TooLarge)? as usize;
        let payload = &bytes[8 + 4 * ndim..];
        let expected = count * dtype.size();
        if payload.len() != expected {
            return Err(TensorError::Length { expected, actual: payload.len() });
        }
        Ok(Tensor::from_le_bytes(dtype, dims, payload))
    }
}

pub(crate) fn element_count(dims: &[u32]) -> Option<usize> {
    dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d as usize))
}
