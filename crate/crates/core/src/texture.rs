//! Local binary patterns, gradient-weighted LBP and the stacked 5-plane input.
//!
//! Neighbors of the pixel `(x_c, y_c)` sit at
//! `x_i = x_c + R cos(2 pi i / P)`, `y_i = y_c + R sin(2 pi i / P)` for `i = 1..=P`,
//! and contribute bit `i - 1` when `I(g_i) >= I(g_c)`. Coordinates that fall
//! outside the image are clamped to the border; offsets within `1e-9` of a
//! multiple of 1/1024 are snapped so axis-aligned neighbors read exact pixels.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::math;
use crate::raster::{to_grayscale, RasterError, RasterImage};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TextureError {
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error("invalid LBP parameters: {0}")]
    Params(&'static str),
    #[error("image {height}x{width} is smaller than the {size}x{size} LBP support")]
    TooSmall {
        height: usize,
        width: usize,
        size: usize,
    },
    #[error("gradient field is {0}x{1} but the image is {2}x{3}")]
    FieldMismatch(usize, usize, usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Sampling {
    Nearest,
    #[default]
    Bilinear,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbpParams {
    pub neighbors: usize,
    pub radius: f64,
    pub sampling: Sampling,
}

impl Default for LbpParams {
    fn default() -> Self {
        Self {
            neighbors: 8,
            radius: 1.0,
            sampling: Sampling::Bilinear,
        }
    }
}

impl LbpParams {
    pub fn validate(&self) -> Result<(), TextureError> {
        if self.neighbors < 4 {
            return Err(TextureError::Params("neighbors must be at least 4"));
        }
        // codes are stored in f32, exact up to 2^24
        if self.neighbors > 24 {
            return Err(TextureError::Params("neighbors must be at most 24"));
        }
        if !(self.radius >= 1.0) || !self.radius.is_finite() {
            return Err(TextureError::Params("radius must be a finite value >= 1"));
        }
        Ok(())
    }

    /// Largest code value, `2^P - 1`.
    pub fn max_code(&self) -> f64 {
        ((1u64 << self.neighbors) - 1) as f64
    }

    fn support(&self) -> usize {
        2 * (libm::ceil(self.radius) as usize) + 1
    }

    fn check_image(&self, gray: &RasterImage) -> Result<(), TextureError> {
        self.validate()?;
        gray.expect_channels(1)?;
        let size = self.support().max(3);
        if gray.height() < size || gray.width() < size {
            return Err(TextureError::TooSmall {
                height: gray.height(),
                width: gray.width(),
                size,
            });
        }
        Ok(())
    }
}

/// Snaps an offset to the nearest multiple of 1/1024 when it is within 1e-9 of
/// one, so offsets such as 0.75 or 1 are exact and ties with the center survive.
fn snap(v: f64) -> f64 {
    let r = math::round(v * 1024.0) / 1024.0;
    if (v - r).abs() < 1e-9 {
        r
    } else {
        v
    }
}

/// Precomputed sampling recipe for one neighbor, relative to the center pixel.
#[derive(Debug, Clone, Copy)]
struct Tap {
    dx0: isize,
    dy0: isize,
    fx: f64,
    fy: f64,
}

fn taps(params: &LbpParams) -> Vec<Tap> {
    let p = params.neighbors as f64;
    (1..=params.neighbors)
        .map(|i| {
            let theta = 2.0 * core::f64::consts::PI * i as f64 / p;
            let dx = snap(params.radius * math::cos(theta));
            let dy = snap(params.radius * math::sin(theta));
            match params.sampling {
                Sampling::Nearest => Tap {
                    dx0: math::round(dx) as isize,
                    dy0: math::round(dy) as isize,
                    fx: 0.0,
                    fy: 0.0,
                },
                Sampling::Bilinear => {
                    let fl_x = math::floor(dx);
                    let fl_y = math::floor(dy);
                    Tap {
                        dx0: fl_x as isize,
                        dy0: fl_y as isize,
                        fx: dx - fl_x,
                        fy: dy - fl_y,
                    }
                }
            }
        })
        .collect()
}

/// Single-channel view used by the samplers.
struct PlaneRef<'a> {
    data: &'a [f32],
    height: usize,
    width: usize,
}

impl PlaneRef<'_> {
    #[inline]
    fn at(&self, row: isize, col: isize) -> f64 {
        let r = row.clamp(0, self.height as isize - 1) as usize;
        let c = col.clamp(0, self.width as isize - 1) as usize;
        f64::from(self.data[r * self.width + c])
    }

    #[inline]
    fn sample(&self, row: usize, col: usize, tap: &Tap) -> f64 {
        let r0 = row as isize + tap.dy0;
        let c0 = col as isize + tap.dx0;
        if tap.fx == 0.0 && tap.fy == 0.0 {
            return self.at(r0, c0);
        }
        bilerp(
            self.at(r0, c0),
            self.at(r0, c0 + 1),
            self.at(r0 + 1, c0),
            self.at(r0 + 1, c0 + 1),
            tap.fx,
            tap.fy,
        )
    }
}

/// Nested-lerp bilinear interpolation; returns the common value exactly when
/// all four corners agree.
#[inline]
pub(crate) fn bilerp(v00: f64, v01: f64, v10: f64, v11: f64, fx: f64, fy: f64) -> f64 {
    let top = v00 + fx * (v01 - v00);
    let bottom = v10 + fx * (v11 - v10);
    top + fy * (bottom - top)
}

fn plane_of(img: &RasterImage) -> PlaneRef<'_> {
    PlaneRef {
        data: img.data(),
        height: img.height(),
        width: img.width(),
    }
}

/// LBP code of every pixel of a single-channel image.
pub fn lbp(gray: &RasterImage, params: &LbpParams) -> Result<RasterImage, TextureError> {
    params.check_image(gray)?;
    let taps = taps(params);
    let plane = plane_of(gray);
    let (h, w) = (gray.height(), gray.width());
    let mut out = Vec::with_capacity(h * w);
    for row in 0..h {
        for col in 0..w {
            let center = f64::from(gray.data()[row * w + col]);
            let mut code = 0u32;
            for (bit, tap) in taps.iter().enumerate() {
                if plane.sample(row, col, tap) - center >= 0.0 {
                    code |= 1 << bit;
                }
            }
            out.push(code as f32);
        }
    }
    Ok(RasterImage::new(h, w, 1, out)?)
}

/// Sobel gradients and the normalized gradient-product field.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    height: usize,
    width: usize,
    pub gx: Vec<f32>,
    pub gy: Vec<f32>,
    /// `gx * gy / max |gx * gy|`, identically zero when the maximum is zero.
    pub gc: Vec<f32>,
}

impl GradientField {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn gc_image(&self) -> RasterImage {
        RasterImage::new(self.height, self.width, 1, self.gc.clone())
            .expect("field dims are consistent")
    }
}

pub fn gradients(gray: &RasterImage) -> Result<GradientField, TextureError> {
    gray.expect_channels(1)?;
    let (h, w) = (gray.height(), gray.width());
    let plane = plane_of(gray);
    let mut gx = vec![0.0f64; h * w];
    let mut gy = vec![0.0f64; h * w];
    for row in 0..h {
        let r = row as isize;
        for col in 0..w {
            let c = col as isize;
            let p = |dr: isize, dc: isize| plane.at(r + dr, c + dc);
            gx[row * w + col] =
                (p(-1, 1) + 2.0 * p(0, 1) + p(1, 1)) - (p(-1, -1) + 2.0 * p(0, -1) + p(1, -1));
            gy[row * w + col] =
                (p(1, -1) + 2.0 * p(1, 0) + p(1, 1)) - (p(-1, -1) + 2.0 * p(-1, 0) + p(-1, 1));
        }
    }
    let max = gx
        .iter()
        .zip(&gy)
        .map(|(a, b)| (a * b).abs())
        .fold(0.0f64, f64::max);
    let gc = if max > 0.0 {
        gx.iter()
            .zip(&gy)
            .map(|(a, b)| (a * b / max) as f32)
            .collect()
    } else {
        vec![0.0; h * w]
    };
    Ok(GradientField {
        height: h,
        width: w,
        gx: gx.into_iter().map(|v| v as f32).collect(),
        gy: gy.into_iter().map(|v| v as f32).collect(),
        gc,
    })
}

/// Gradient-weighted LBP: `sum_i |2^(i-1) H(I(g_i) - I(g_c)) G_c(x_i, y_i)|`.
///
/// Real valued, in `[0, 2^P - 1]`.
pub fn glbp(
    gray: &RasterImage,
    params: &LbpParams,
    field: &GradientField,
) -> Result<RasterImage, TextureError> {
    params.check_image(gray)?;
    let (h, w) = (gray.height(), gray.width());
    if field.height != h || field.width != w {
        return Err(TextureError::FieldMismatch(field.height, field.width, h, w));
    }
    let taps = taps(params);
    let plane = plane_of(gray);
    let gc = PlaneRef {
        data: &field.gc,
        height: h,
        width: w,
    };
    let mut out = Vec::with_capacity(h * w);
    for row in 0..h {
        for col in 0..w {
            let center = f64::from(gray.data()[row * w + col]);
            let mut acc = 0.0f64;
            for (bit, tap) in taps.iter().enumerate() {
                if plane.sample(row, col, tap) - center >= 0.0 {
                    acc += ((1u64 << bit) as f64 * gc.sample(row, col, tap)).abs();
                }
            }
            out.push(acc as f32);
        }
    }
    Ok(RasterImage::new(h, w, 1, out)?)
}

/// Number of planes in the stacked input: R, G, B, LBP, GLBP.
pub const INPUT_PLANES: usize = 5;

/// `H x W x 5` stack `[R, G, B, LBP, GLBP]`, every plane scaled into `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiChannelInput {
    image: RasterImage,
}

impl MultiChannelInput {
    pub fn height(&self) -> usize {
        self.image.height()
    }

    pub fn width(&self) -> usize {
        self.image.width()
    }

    /// Interleaved `H x W x 5` samples.
    pub fn data(&self) -> &[f32] {
        self.image.data()
    }

    pub fn plane(&self, index: usize) -> RasterImage {
        self.image.channel(index)
    }

    pub fn as_image(&self) -> &RasterImage {
        &self.image
    }
}

/// Builds the 5-plane input. RGB is divided by 255, LBP by `2^P - 1`, and
/// GLBP is min-max normalized per image (a constant plane becomes zeros).
pub fn build_input(
    rgb: &RasterImage,
    params: &LbpParams,
) -> Result<MultiChannelInput, TextureError> {
    rgb.expect_channels(3)?;
    let gray = to_grayscale(rgb)?;
    let codes = lbp(&gray, params)?;
    let field = gradients(&gray)?;
    let weighted = glbp(&gray, params, &field)?;

    let max_code = params.max_code();
    let (lo, hi) = weighted
        .data()
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let span = f64::from(hi) - f64::from(lo);

    let n = rgb.height() * rgb.width();
    let mut data = Vec::with_capacity(n * INPUT_PLANES);
    for i in 0..n {
        for c in 0..3 {
            data.push((f64::from(rgb.data()[i * 3 + c]) / 255.0).clamp(0.0, 1.0) as f32);
        }
        data.push((f64::from(codes.data()[i]) / max_code) as f32);
        let g = if span > 0.0 {
            ((f64::from(weighted.data()[i]) - f64::from(lo)) / span) as f32
        } else {
            0.0
        };
        data.push(g);
    }
    Ok(MultiChannelInput {
        image: RasterImage::new(rgb.height(), rgb.width(), INPUT_PLANES, data)?,
    })
}
