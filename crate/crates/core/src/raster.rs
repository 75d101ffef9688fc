//! Row-major, channel-interleaved raster images.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RasterError {
    #[error("expected {expected} channel(s), got {got}")]
    ChannelCount { expected: usize, got: usize },
    #[error("data length {len} does not match {height}x{width}x{channels}")]
    DataLength {
        len: usize,
        height: usize,
        width: usize,
        channels: usize,
    },
    #[error("image dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
}

/// An `height x width x channels` grid of `f32` samples.
///
/// Images loaded from 8-bit files hold integral values in `[0, 255]`; the
/// texture planes produced downstream document their own ranges.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterImage {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

impl RasterImage {
    pub fn new(
        height: usize,
        width: usize,
        channels: usize,
        data: Vec<f32>,
    ) -> Result<Self, RasterError> {
        if data.len() != height * width * channels {
            return Err(RasterError::DataLength {
                len: data.len(),
                height,
                width,
                channels,
            });
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f32) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![value; height * width * channels],
        }
    }

    pub fn from_u8(
        height: usize,
        width: usize,
        channels: usize,
        bytes: &[u8],
    ) -> Result<Self, RasterError> {
        Self::new(
            height,
            width,
            channels,
            bytes.iter().map(|&b| f32::from(b)).collect(),
        )
    }

    /// Rounds and clamps every sample into a byte.
    pub fn to_u8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|&v| {
                let v = if v.is_nan() { 0.0 } else { v };
                crate::math::round(f64::from(v)).clamp(0.0, 255.0) as u8
            })
            .collect()
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, channel: usize) -> f32 {
        self.data[(row * self.width + col) * self.channels + channel]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, channel: usize, value: f32) {
        self.data[(row * self.width + col) * self.channels + channel] = value;
    }

    /// Copies one channel out as a single-channel image.
    pub fn channel(&self, channel: usize) -> RasterImage {
        let data = self
            .data
            .iter()
            .skip(channel)
            .step_by(self.channels)
            .copied()
            .collect();
        RasterImage {
            height: self.height,
            width: self.width,
            channels: 1,
            data,
        }
    }

    pub fn expect_channels(&self, expected: usize) -> Result<(), RasterError> {
        if self.channels != expected {
            return Err(RasterError::ChannelCount {
                expected,
                got: self.channels,
            });
        }
        Ok(())
    }

    pub fn same_size(&self, other: &RasterImage) -> Result<(), RasterError> {
        if self.height != other.height || self.width != other.width {
            return Err(RasterError::DimensionMismatch(
                self.height,
                self.width,
                other.height,
                other.width,
            ));
        }
        Ok(())
    }
}

/// BT.601 luma: `0.299 R + 0.587 G + 0.114 B`, kept in `[0, 255]`.
pub fn to_grayscale(img: &RasterImage) -> Result<RasterImage, RasterError> {
    img.expect_channels(3)?;
    let data = img
        .data
        .chunks_exact(3)
        .map(|px| {
            let (r, g, b) = (f64::from(px[0]), f64::from(px[1]), f64::from(px[2]));
            (0.299 * r + 0.587 * g + 0.114 * b) as f32
        })
        .collect();
    Ok(RasterImage {
        height: img.height,
        width: img.width,
        channels: 1,
        data,
    })
}
