//! Latent video tensors and their binary wire encoding.
//!
//! A [`LatentVideo`] is a `frames × channels × height × width` array of `f64`
//! tagged with the id of the codec that produced it. All diffusion math runs on
//! this type.
//!
//! # Wire format
//!
//! Tensors cross process boundaries (remote VAE, remote denoiser) in a small
//! little-endian binary container:
//!
//! | offset        | size        | field                                   |
//! |---------------|-------------|-----------------------------------------|
//! | 0             | 4           | magic `b"VSKT"`                         |
//! | 4             | 4           | format version, `u32`, currently `1`    |
//! | 8             | 4           | rank `r`, `u32`                          |
//! | 12            | 4·r         | dimensions, `u32` each, outermost first |
//! | 12 + 4·r      | 4·∏dims     | elements, IEEE-754 `f32`, row-major     |
//!
//! Values are narrowed to `f32` on encode, so a round trip is exact only for
//! values representable in `f32`.

use ndarray::{Array4, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TENSOR_MAGIC: [u8; 4] = *b"VSKT";
pub const TENSOR_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct LatentVideo {
    data: Array4<f64>,
    codec_id: String,
}

impl LatentVideo {
    pub fn new(data: Array4<f64>, codec_id: impl Into<String>) -> Self {
        Self { data, codec_id: codec_id.into() }
    }

    pub fn zeros(shape: [usize; 4], codec_id: impl Into<String>) -> Self {
        Self::new(Array4::zeros(shape), codec_id)
    }

    pub fn from_fn(
        shape: [usize; 4],
        codec_id: impl Into<String>,
        f: impl FnMut((usize, usize, usize, usize)) -> f64,
    ) -> Self {
        Self::new(Array4::from_shape_fn(shape, f), codec_id)
    }

    pub fn data(&self) -> &Array4<f64> {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut Array4<f64> {
        &mut self.data
    }

    pub fn into_data(self) -> Array4<f64> {
        self.data
    }

    pub fn codec_id(&self) -> &str {
        &self.codec_id
    }

    pub fn shape(&self) -> [usize; 4] {
        let s = self.data.shape();
        [s[0], s[1], s[2], s[3]]
    }

    pub fn frame_count(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Same values under another codec id.
    pub fn relabel(self, codec_id: &str) -> Self {
        Self { data: self.data, codec_id: codec_id.to_string() }
    }

    /// Same shape and codec, new values.
    pub fn with_data(&self, data: Array4<f64>) -> Self {
        debug_assert_eq!(data.shape(), self.data.shape());
        Self { data, codec_id: self.codec_id.clone() }
    }

    /// `a·self + b·other`, elementwise.
    pub fn affine_combine(&self, a: f64, other: &LatentVideo, b: f64) -> Self {
        let mut out = self.data.clone();
        Zip::from(&mut out).and(&other.data).for_each(|o, &y| *o = a * *o + b * y);
        self.with_data(out)
    }

    pub fn scale(&self, a: f64) -> Self {
        self.with_data(self.data.mapv(|v| a * v))
    }

    pub fn l2_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn l2_distance(&self, other: &LatentVideo) -> f64 {
        Zip::from(&self.data)
            .and(&other.data)
            .fold(0.0, |acc, &a, &b| acc + (a - b) * (a - b))
            .sqrt()
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn ensure_same_shape(&self, other: &LatentVideo, what: &str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::data(format!(
                "{what}: shape {:?} does not match {:?}",
                other.shape(),
                self.shape()
            )));
        }
        Ok(())
    }

    pub fn to_tensor_bytes(&self) -> Vec<u8> {
        encode_tensor(&self.shape(), self.data.iter().copied())
    }

    pub fn from_tensor_bytes(bytes: &[u8], codec_id: impl Into<String>) -> Result<Self> {
        let (dims, values) = decode_tensor(bytes)?;
        if dims.len() != 4 {
            return Err(Error::data(format!("expected a rank-4 tensor, got rank {}", dims.len())));
        }
        let data = Array4::from_shape_vec((dims[0], dims[1], dims[2], dims[3]), values)
            .map_err(|e| Error::data(e.to_string()))?;
        Ok(Self::new(data, codec_id))
    }
}

/// Encodes a row-major tensor in the wire format described in the module docs.
pub fn encode_tensor(dims: &[usize], values: impl IntoIterator<Item = f64>) -> Vec<u8> {
    let count: usize = dims.iter().product();
    let mut out = Vec::with_capacity(12 + 4 * dims.len() + 4 * count);
    out.extend_from_slice(&TENSOR_MAGIC);
    out.extend_from_slice(&TENSOR_VERSION.to_le_bytes());
    out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for &d in dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in values {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

/// Decodes the wire format, returning dimensions and values widened to `f64`.
pub fn decode_tensor(bytes: &[u8]) -> Result<(Vec<usize>, Vec<f64>)> {
    let read_u32 = |at: usize| -> Result<u32> {
        bytes
            .get(at..at + 4)
            .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .ok_or_else(|| Error::data("tensor payload truncated in header"))
    };
    if bytes.get(0..4) != Some(&TENSOR_MAGIC[..]) {
        return Err(Error::data("tensor payload has a bad magic number"));
    }
    let version = read_u32(4)?;
    if version != TENSOR_VERSION {
        return Err(Error::data(format!("unsupported tensor format version {version}")));
    }
    let rank = read_u32(8)? as usize;
    if rank > 8 {
        return Err(Error::data(format!("tensor rank {rank} is not plausible")));
    }
    let dims = (0..rank).map(|i| read_u32(12 + 4 * i).map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
    let count = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::data("tensor dimensions overflow"))?;
    let body = &bytes[12 + 4 * rank..];
    if body.len() != count * 4 {
        return Err(Error::data(format!(
            "tensor body holds {} bytes, dimensions {dims:?} need {}",
            body.len(),
            count * 4
        )));
    }
    let values = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Ok((dims, values))
}

/// Shape record used in manifests and JSON envelopes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatentShape {
    pub frames: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl From<[usize; 4]> for LatentShape {
    fn from(s: [usize; 4]) -> Self {
        Self { frames: s[0], channels: s[1], height: s[2], width: s[3] }
    }
}
