//! `LIPLAB01` tensor files.
//!
//! Layout: the 8-byte magic `LIPLAB01`, `ndim` as a little-endian `u32`, `ndim`
//! little-endian `u32` dimensions, then `product(dims)` little-endian `f32`
//! values in row-major order. Nothing may follow the payload.

use std::path::Path;

use liplab_core::nn::Tensor;
use liplab_core::RasterImage;

use crate::error::{read_file, write_file, FormatError, IoError};

pub const MAGIC: &[u8; 8] = b"LIPLAB01";

/// An f32 array of any rank.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorData {
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl TensorData {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self, FormatError> {
        let expected: usize = dims.iter().product();
        if expected != data.len() {
            return Err(FormatError::other(format!(
                "payload mismatch: dims {dims:?} need {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    /// `(height, width, channels)` interleaved, as stored by `texture`.
    pub fn from_image(img: &RasterImage) -> Self {
        Self {
            dims: vec![img.height(), img.width(), img.channels()],
            data: img.data().to_vec(),
        }
    }

    pub fn from_tensor(t: &Tensor<f32>) -> Self {
        Self {
            dims: t.dims().to_vec(),
            data: t.data().to_vec(),
        }
    }

    pub fn into_tensor(self) -> Result<Tensor<f32>, FormatError> {
        let dims: [usize; 4] = self.dims.as_slice().try_into().map_err(|_| {
            FormatError::other(format!("expected 4 dimensions, got {}", self.dims.len()))
        })?;
        Tensor::from_vec(dims, self.data).map_err(|e| FormatError::other(e.to_string()))
    }
}

pub fn encode(t: &TensorData) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 4 * t.dims.len() + 4 * t.data.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(t.dims.len() as u32).to_le_bytes());
    for &d in &t.dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in &t.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn u32_at(bytes: &[u8], offset: usize, what: &str) -> Result<u32, FormatError> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| FormatError::at(offset, format!("file ends inside {what}")))
}

pub fn decode(bytes: &[u8]) -> Result<TensorData, FormatError> {
    if bytes.get(..8) != Some(MAGIC.as_slice()) {
        return Err(FormatError::at(0, "bad magic, expected LIPLAB01"));
    }
    let ndim = u32_at(bytes, 8, "ndim")? as usize;
    let header_end = 12usize
        .checked_add(
            ndim.checked_mul(4)
                .ok_or_else(|| FormatError::at(8, "ndim out of range"))?,
        )
        .ok_or_else(|| FormatError::at(8, "ndim out of range"))?;
    if header_end > bytes.len() {
        return Err(FormatError::at(bytes.len(), "file ends inside dims"));
    }
    let dims: Vec<usize> = (0..ndim)
        .map(|k| u32_at(bytes, 12 + 4 * k, "dims").map(|d| d as usize))
        .collect::<Result<_, _>>()?;
    let count = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| FormatError::at(12, "dims overflow"))?;
    let payload = &bytes[header_end..];
    if Some(payload.len()) != count.checked_mul(4) {
        return Err(FormatError::at(
            header_end,
            format!(
                "payload mismatch: dims {dims:?} need {count} values, found {} bytes",
                payload.len()
            ),
        ));
    }
    let data = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
        .collect();
    Ok(TensorData { dims, data })
}

pub fn read_tensor(path: &Path) -> Result<TensorData, IoError> {
    decode(&read_file(path)?).map_err(|e| IoError::format(path, e))
}

pub fn write_tensor(path: &Path, t: &TensorData) -> Result<(), IoError> {
    write_file(path, &encode(t))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_round_trip() {
        let t = TensorData::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let bytes = encode(&t);
        assert_eq!(bytes.len(), 8 + 4 + 8 + 16);
        assert_eq!(decode(&bytes).unwrap(), t);
    }

    #[test]
    fn bad_magic_and_short_payload() {
        let mut bytes = encode(&TensorData::new(vec![1], vec![0.5]).unwrap());
        bytes[..8].copy_from_slice(b"XXXXXXXX");
        assert!(decode(&bytes)
            .unwrap_err()
            .to_string()
            .contains("bad magic"));

        let mut short = Vec::from(*MAGIC);
        short.extend(3u32.to_le_bytes());
        for d in [256u32, 256, 5] {
            short.extend(d.to_le_bytes());
        }
        short.extend([0u8; 64]);
        assert!(decode(&short)
            .unwrap_err()
            .to_string()
            .contains("payload mismatch"));
    }
}
