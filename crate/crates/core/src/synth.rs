//! Synthetic upper-lip images with exact landmarks and masks, plus the
//! flip / rotation / brightness augmentations.
//!
//! The lip lives in a local frame `u in [-1, 1]` across the mouth. Its upper
//! edge is `y = f(|u|)`, two cubic Hermite pieces per side that meet at the
//! peak of the cupid's bow (`|u| = p`); the notch at `u = 0` sits `d` pixels
//! below the peaks. The lower edge is a parabola through both corners.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::geometry::Point;
use crate::maskgen::{rasterize_polygon, BinaryMask, LandmarkSet, MaskError, TemplateContour};
use crate::math;
use crate::raster::RasterImage;
use crate::texture::bilerp;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("lip geometry does not fit a {0}x{0} canvas")]
    DoesNotFit(usize),
    #[error("canvas size {0} is below the minimum of 32")]
    CanvasTooSmall(usize),
    #[error("unsupported augmentation {0:?}")]
    UnsupportedOp(String),
    #[error("sample count must be at least 1")]
    NoSamples,
    #[error(transparent)]
    Mask(#[from] MaskError),
}

/// Landmark schema: seven points along the upper edge from the left corner to
/// the right one, then four along the lower edge from right to left.
pub const ANCHOR_NAMES: [&str; 11] = [
    "ch_l", "ver_l", "cph_l", "ls", "cph_r", "ver_r", "ch_r", "lo_r", "lo_rc", "lo_lc", "lo_l",
];

const LOWER_ANCHORS: [f64; 6] = [1.0, 0.6, 0.2, -0.2, -0.6, -1.0];

/// Index permutation mapping the schema onto its mirror image.
const MIRROR: [usize; 11] = [6, 5, 4, 3, 2, 1, 0, 10, 9, 8, 7];

fn hermite(v: f64, v0: f64, v1: f64, y0: f64, y1: f64, m0: f64, m1: f64) -> f64 {
    let len = v1 - v0;
    let s = (v - v0) / len;
    let (s2, s3) = (s * s, s * s * s);
    (2.0 * s3 - 3.0 * s2 + 1.0) * y0
        + (s3 - 2.0 * s2 + s) * len * m0
        + (-2.0 * s3 + 3.0 * s2) * y1
        + (s3 - s2) * len * m1
}

/// Geometry of one upper lip, in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipShape {
    pub center: Point,
    /// Half the mouth width.
    pub half_width: f64,
    /// Height of the bow peaks above the center line.
    pub height: f64,
    /// Depth of the central notch below the bow peaks.
    pub bow_depth: f64,
    /// Peak position as a fraction of the half width.
    pub bow_position: f64,
    /// How far the corners sit below the center line.
    pub droop: f64,
    /// Thickness of the lower edge below the center line at `u = 0`.
    pub lower_offset: f64,
    /// Rotation about `center`, radians, positive turning +x towards +y.
    pub rotation: f64,
}

impl LipShape {
    /// Reference shape on a 64x64 canvas; the shipped template is built from it.
    pub const CANONICAL: LipShape = LipShape {
        center: Point::new(32.0, 34.0),
        half_width: 21.0,
        height: 10.0,
        bow_depth: 2.5,
        bow_position: 0.3,
        droop: 1.5,
        lower_offset: 2.5,
        rotation: 0.0,
    };

    fn upper_local(&self, u: f64) -> f64 {
        let v = u.abs();
        let (h, d, p) = (self.height, self.bow_depth, self.bow_position);
        if v <= p {
            hermite(v, 0.0, p, -h + d, -h, -d / p, 0.0)
        } else {
            hermite(v, p, 1.0, -h, self.droop, 0.0, (h + self.droop) / (1.0 - p))
        }
    }

    fn lower_local(&self, u: f64) -> f64 {
        self.droop * u * u + self.lower_offset * (1.0 - u * u)
    }

    fn place(&self, u: f64, dy: f64) -> Point {
        let (s, c) = (math::sin(self.rotation), math::cos(self.rotation));
        let (lx, ly) = (self.half_width * u, dy);
        Point::new(
            self.center.x + c * lx - s * ly,
            self.center.y + s * lx + c * ly,
        )
    }

    fn to_local(&self, p: Point) -> (f64, f64) {
        let (s, c) = (math::sin(self.rotation), math::cos(self.rotation));
        let (dx, dy) = (p.x - self.center.x, p.y - self.center.y);
        ((c * dx + s * dy) / self.half_width, -s * dx + c * dy)
    }

    pub fn upper(&self, u: f64) -> Point {
        self.place(u, self.upper_local(u))
    }

    pub fn lower(&self, u: f64) -> Point {
        self.place(u, self.lower_local(u))
    }

    fn upper_anchors(&self) -> [f64; 7] {
        let p = self.bow_position;
        let v = p + 0.25 * (1.0 - p);
        [-1.0, -v, -p, 0.0, p, v, 1.0]
    }

    /// Landmarks at the schema positions.
    pub fn landmarks(&self) -> LandmarkSet {
        let mut points: Vec<Point> = self
            .upper_anchors()
            .iter()
            .map(|&u| self.upper(u))
            .collect();
        points.extend(LOWER_ANCHORS[1..5].iter().map(|&u| self.lower(u)));
        LandmarkSet::new(ANCHOR_NAMES.iter().map(|s| s.to_string()).collect(), points)
            .expect("schema landmarks are distinct")
    }

    /// Dense closed outline. Every anchor is a vertex; `per_unit` is the
    /// number of vertices per unit of `u` between anchors.
    pub fn contour(&self, per_unit: usize) -> TemplateContour {
        let mut vertices = Vec::new();
        let mut anchors = Vec::new();
        let mut walk =
            |knots: &[f64], f: &dyn Fn(f64) -> Point, skip_first: bool, skip_last: bool| {
                for (k, pair) in knots.windows(2).enumerate() {
                    if !(skip_first && k == 0) {
                        anchors.push(vertices.len());
                        vertices.push(f(pair[0]));
                    }
                    let steps =
                        (math::round((pair[1] - pair[0]).abs() * per_unit as f64) as usize).max(1);
                    for j in 1..steps {
                        let u = pair[0] + (pair[1] - pair[0]) * j as f64 / steps as f64;
                        vertices.push(f(u));
                    }
                }
                if !skip_last {
                    anchors.push(vertices.len());
                    vertices.push(f(knots[knots.len() - 1]));
                }
            };
        walk(&self.upper_anchors(), &|u| self.upper(u), false, false);
        walk(&LOWER_ANCHORS, &|u| self.lower(u), true, true);
        TemplateContour::new(
            vertices,
            anchors,
            ANCHOR_NAMES.iter().map(|s| s.to_string()).collect(),
        )
        .expect("anchors are increasing")
    }

    /// Whether the outline lies at least `margin` pixels inside an `size x size` canvas.
    pub fn fits(&self, size: usize, margin: f64) -> bool {
        let hi = size as f64 - 1.0 - margin;
        self.contour(40)
            .vertices()
            .iter()
            .all(|p| p.x >= margin && p.y >= margin && p.x <= hi && p.y <= hi)
    }
}

/// Template built from [`LipShape::CANONICAL`].
pub fn canonical_template() -> TemplateContour {
    LipShape::CANONICAL.contour(TEMPLATE_DENSITY)
}

/// Vertices per unit of `u` in the canonical template.
pub const TEMPLATE_DENSITY: usize = 40;

/// Everything needed to render one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipShapeParams {
    pub shape: LipShape,
    pub skin: [f32; 3],
    pub lip: [f32; 3],
    pub noise_sigma: f64,
    /// Seed of the pixel noise.
    pub seed: u64,
}

/// One rendered image with its landmarks and exact mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub image: RasterImage,
    pub landmarks: LandmarkSet,
    pub mask: BinaryMask,
}

fn gray(rgb: [f32; 3]) -> f32 {
    0.299 * rgb[0] + 0.587 * rgb[1] + 0.114 * rgb[2]
}

/// Regions of the rendered face.
#[derive(Clone, Copy)]
enum Region {
    Skin,
    UpperLip,
    Gap,
    LowerLip,
}

fn region(shape: &LipShape, p: Point) -> Region {
    let (u, y) = shape.to_local(p);
    if u.abs() > 1.0 {
        return Region::Skin;
    }
    let top = shape.upper_local(u);
    let bottom = shape.lower_local(u);
    let open = 1.0 - u * u;
    if y >= top && y <= bottom {
        Region::UpperLip
    } else if y > bottom && y <= bottom + 1.5 * open {
        Region::Gap
    } else if y > bottom && y <= bottom + 1.5 * open + 0.8 * shape.height * math::sqrt(open) {
        Region::LowerLip
    } else {
        Region::Skin
    }
}

/// Renders one sample on a `size x size` canvas. Edges are antialiased with
/// 4x4 supersampling; the mask is the exact outline rasterized at pixel centers.
pub fn render(params: &LipShapeParams, size: usize) -> Result<Sample, SynthError> {
    let shape = &params.shape;
    if !shape.fits(size, 1.0) {
        return Err(SynthError::DoesNotFit(size));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let noise = Normal::new(0.0, params.noise_sigma.max(0.0)).expect("sigma is finite");
    let gap = [70.0, 35.0, 40.0];
    let lower = params.lip.map(|v| (v * 1.08).min(255.0));
    let mut data = vec![0.0f32; size * size * 3];
    const SS: usize = 4;
    for row in 0..size {
        // Soft vertical shading across the face.
        let shade = 1.0 + 0.12 * ((row as f32 / size as f32) - 0.5);
        for col in 0..size {
            let mut acc = [0.0f32; 3];
            for sy in 0..SS {
                for sx in 0..SS {
                    let p = Point::new(
                        col as f64 + (sx as f64 + 0.5) / SS as f64 - 0.5,
                        row as f64 + (sy as f64 + 0.5) / SS as f64 - 0.5,
                    );
                    let c = match region(shape, p) {
                        Region::Skin => params.skin,
                        Region::UpperLip => params.lip,
                        Region::Gap => gap,
                        Region::LowerLip => lower,
                    };
                    for k in 0..3 {
                        acc[k] += c[k];
                    }
                }
            }
            for k in 0..3 {
                let mut v = acc[k] / (SS * SS) as f32 * shade;
                if params.noise_sigma > 0.0 {
                    v += noise.sample(&mut rng) as f32;
                }
                data[(row * size + col) * 3 + k] = libm::roundf(v.clamp(0.0, 255.0));
            }
        }
    }
    let image = RasterImage::new(size, size, 3, data).expect("length matches");
    let outline = shape.contour(TEMPLATE_DENSITY);
    let mask = rasterize_polygon(outline.vertices(), size, size)?.mask;
    Ok(Sample {
        image,
        landmarks: shape.landmarks(),
        mask,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorConfig {
    /// Canvas side in pixels; the lip scales with it.
    pub size: usize,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            size: 64,
            noise_sigma: 4.0,
            seed: 0,
        }
    }
}

/// Draws one parameter set. Shapes vary around [`LipShape::CANONICAL`];
/// tones are resampled until skin and lip differ by at least 10 gray levels.
pub fn sample_params(rng: &mut ChaCha8Rng, config: &GeneratorConfig) -> LipShapeParams {
    let s = config.size as f64 / 64.0;
    let c = config.size as f64 / 2.0;
    let shape = LipShape {
        center: Point::new(
            c + s * rng.random_range(-3.0..3.0),
            c + s * rng.random_range(-1.0..4.0),
        ),
        half_width: s * rng.random_range(18.0..24.0),
        height: s * rng.random_range(9.0..12.0),
        bow_depth: s * rng.random_range(1.5..3.0),
        bow_position: rng.random_range(0.25..0.35),
        droop: s * rng.random_range(0.0..3.0),
        lower_offset: s * rng.random_range(1.5..3.5),
        rotation: rng.random_range(-6.0f64..6.0).to_radians(),
    };
    let (skin, lip) = loop {
        let skin = [
            rng.random_range(175.0..235.0),
            rng.random_range(125.0..185.0),
            rng.random_range(105.0..165.0),
        ];
        let lip = [
            rng.random_range(145.0..205.0),
            rng.random_range(55.0..105.0),
            rng.random_range(65.0..115.0),
        ];
        if (gray(skin) - gray(lip)).abs() >= 10.0 {
            break (skin, lip);
        }
    };
    LipShapeParams {
        shape,
        skin,
        lip,
        noise_sigma: config.noise_sigma,
        seed: rng.random(),
    }
}

/// `n` samples drawn from one seeded stream.
pub fn generate(config: &GeneratorConfig, n: usize) -> Result<Vec<Sample>, SynthError> {
    if n == 0 {
        return Err(SynthError::NoSamples);
    }
    if config.size < 32 {
        return Err(SynthError::CanvasTooSmall(config.size));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    (0..n)
        .map(|_| render(&sample_params(&mut rng, config), config.size))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AugmentOp {
    HFlip,
    /// Rotation by exactly +5 or -5 degrees.
    Rotate {
        clockwise: bool,
    },
    /// Brightness factor, 0.8 or 1.1.
    Brightness(Brightness),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Brightness {
    Darker,
    Brighter,
}

impl Brightness {
    pub fn factor(self) -> f32 {
        match self {
            Brightness::Darker => 0.8,
            Brightness::Brighter => 1.1,
        }
    }
}

impl AugmentOp {
    pub const ALL: [AugmentOp; 5] = [
        AugmentOp::HFlip,
        AugmentOp::Rotate { clockwise: false },
        AugmentOp::Rotate { clockwise: true },
        AugmentOp::Brightness(Brightness::Darker),
        AugmentOp::Brightness(Brightness::Brighter),
    ];

    pub fn token(self) -> &'static str {
        match self {
            AugmentOp::HFlip => "hflip",
            AugmentOp::Rotate { clockwise: false } => "rot+5",
            AugmentOp::Rotate { clockwise: true } => "rot-5",
            AugmentOp::Brightness(Brightness::Darker) => "bright0.8",
            AugmentOp::Brightness(Brightness::Brighter) => "bright1.1",
        }
    }
}

impl FromStr for AugmentOp {
    type Err = SynthError;

    /// Accepts the tokens `hflip`, `rot+5`, `rot-5`, `bright0.8`, `bright1.1`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AugmentOp::ALL
            .into_iter()
            .find(|op| op.token() == s)
            .ok_or_else(|| SynthError::UnsupportedOp(s.to_string()))
    }
}

fn hflip(sample: &Sample) -> Sample {
    let (h, w, ch) = (
        sample.image.height(),
        sample.image.width(),
        sample.image.channels(),
    );
    let mut image = sample.image.clone();
    for r in 0..h {
        for c in 0..w {
            for k in 0..ch {
                image.set(r, c, k, sample.image.get(r, w - 1 - c, k));
            }
        }
    }
    let mask = BinaryMask::from_fn(h, w, |r, c| sample.mask.get(r, w - 1 - c));
    let xmax = (w - 1) as f64;
    let mirrored: Vec<Point> = sample
        .landmarks
        .points()
        .iter()
        .map(|p| Point::new(xmax - p.x, p.y))
        .collect();
    let names = sample.landmarks.names();
    let schema =
        names.len() == ANCHOR_NAMES.len() && names.iter().zip(ANCHOR_NAMES).all(|(a, b)| a == b);
    let points = if schema {
        MIRROR.iter().map(|&i| mirrored[i]).collect()
    } else {
        mirrored
    };
    Sample {
        image,
        landmarks: LandmarkSet::new(names.to_vec(), points)
            .expect("mirroring keeps points distinct"),
        mask,
    }
}

fn rotate(sample: &Sample, degrees: f64) -> Sample {
    let (h, w, ch) = (
        sample.image.height(),
        sample.image.width(),
        sample.image.channels(),
    );
    let theta = degrees.to_radians();
    let (s, c) = (math::sin(theta), math::cos(theta));
    let (cx, cy) = ((w - 1) as f64 / 2.0, (h - 1) as f64 / 2.0);
    // Destination pixel -> source position (inverse rotation).
    let source = |r: usize, col: usize| {
        let (dx, dy) = (col as f64 - cx, r as f64 - cy);
        (cx + c * dx + s * dy, cy - s * dx + c * dy)
    };
    let mut image = sample.image.clone();
    let clamp = |v: f64, n: usize| v.clamp(0.0, (n - 1) as f64);
    for r in 0..h {
        for col in 0..w {
            let (x, y) = source(r, col);
            let (x, y) = (clamp(x, w), clamp(y, h));
            let (x0, y0) = (math::floor(x) as usize, math::floor(y) as usize);
            let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
            let (fx, fy) = (x - x0 as f64, y - y0 as f64);
            for k in 0..ch {
                let v = bilerp(
                    f64::from(sample.image.get(y0, x0, k)),
                    f64::from(sample.image.get(y0, x1, k)),
                    f64::from(sample.image.get(y1, x0, k)),
                    f64::from(sample.image.get(y1, x1, k)),
                    fx,
                    fy,
                );
                image.set(r, col, k, v as f32);
            }
        }
    }
    let mask = BinaryMask::from_fn(h, w, |r, col| {
        let (x, y) = source(r, col);
        let (xr, yr) = (math::round(x), math::round(y));
        xr >= 0.0
            && yr >= 0.0
            && xr < w as f64
            && yr < h as f64
            && sample.mask.get(yr as usize, xr as usize)
    });
    let landmarks = sample.landmarks.map_points(|p| {
        let (dx, dy) = (p.x - cx, p.y - cy);
        Point::new(cx + c * dx - s * dy, cy + s * dx + c * dy)
    });
    Sample {
        image,
        landmarks,
        mask,
    }
}

fn brightness(sample: &Sample, factor: f32) -> Sample {
    let mut image = sample.image.clone();
    for v in image.data_mut() {
        *v = (*v * factor).clamp(0.0, 255.0);
    }
    Sample {
        image,
        landmarks: sample.landmarks.clone(),
        mask: sample.mask.clone(),
    }
}

/// Applies `ops` in order to image, mask and landmarks together.
pub fn augment(sample: &Sample, ops: &[AugmentOp]) -> Sample {
    let mut out = sample.clone();
    for op in ops {
        out = match *op {
            AugmentOp::HFlip => hflip(&out),
            AugmentOp::Rotate { clockwise } => rotate(&out, if clockwise { -5.0 } else { 5.0 }),
            AugmentOp::Brightness(b) => brightness(&out, b.factor()),
        };
    }
    out
}
