//! Ground-truth masks from sparse landmarks.
//!
//! A canonical lip template carries anchor vertices that correspond one to one
//! with the anatomical landmarks. The template is aligned to the landmarks by a
//! least-squares similarity transform, the template arcs between consecutive
//! anchors are discretized, every discretized point is carried onto the landmark
//! chord that keeps its distance ratio to the two anchors, and the resulting
//! polygon is filled.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::geometry::{project_onto_segment, signed_area, Point, Similarity};
use crate::math;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MaskError {
    #[error("need at least 3 landmarks, got {0}")]
    TooFewLandmarks(usize),
    #[error("landmark names and points differ in length ({names} vs {points})")]
    NameCount { names: usize, points: usize },
    #[error("duplicate landmark name {0:?}")]
    DuplicateName(String),
    #[error("consecutive landmarks {0} and {1} coincide")]
    RepeatedPoint(usize, usize),
    #[error("template has {anchors} anchors but {landmarks} landmarks were given")]
    AnchorCount { anchors: usize, landmarks: usize },
    #[error("template anchors must be strictly increasing vertex indices")]
    AnchorOrder,
    #[error("landmarks are collinear; similarity alignment is undefined")]
    Degenerate,
    #[error("landmark segment {0} has zero length")]
    ZeroLengthSegment(usize),
    #[error("spacing must be positive")]
    Spacing,
    #[error("polygon needs at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("point {index} at ({x}, {y}) lies outside the {height}x{width} canvas")]
    OutOfBounds {
        index: usize,
        x: f64,
        y: f64,
        height: usize,
        width: usize,
    },
    #[error("polygon edges {first} and {second} cross")]
    SelfIntersection { first: usize, second: usize },
}

/// Ordered, named anatomical landmarks.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkSet {
    names: Vec<String>,
    points: Vec<Point>,
}

impl LandmarkSet {
    pub fn new(names: Vec<String>, points: Vec<Point>) -> Result<Self, MaskError> {
        if names.len() != points.len() {
            return Err(MaskError::NameCount {
                names: names.len(),
                points: points.len(),
            });
        }
        if points.len() < 3 {
            return Err(MaskError::TooFewLandmarks(points.len()));
        }
        for (i, name) in names.iter().enumerate() {
            if names[..i].contains(name) {
                return Err(MaskError::DuplicateName(name.clone()));
            }
        }
        for i in 0..points.len() {
            let j = (i + 1) % points.len();
            if points[i] == points[j] {
                return Err(MaskError::RepeatedPoint(i, j));
            }
        }
        Ok(Self { names, points })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn map_points(&self, f: impl Fn(Point) -> Point) -> LandmarkSet {
        LandmarkSet {
            names: self.names.clone(),
            points: self.points.iter().map(|&p| f(p)).collect(),
        }
    }
}

/// Closed template polyline with marked anchor vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct TemplateContour {
    vertices: Vec<Point>,
    anchor_indices: Vec<usize>,
    anchor_names: Vec<String>,
}

impl TemplateContour {
    pub fn new(
        vertices: Vec<Point>,
        anchor_indices: Vec<usize>,
        anchor_names: Vec<String>,
    ) -> Result<Self, MaskError> {
        if anchor_indices.len() < 3 {
            return Err(MaskError::TooFewLandmarks(anchor_indices.len()));
        }
        if anchor_names.len() != anchor_indices.len() {
            return Err(MaskError::NameCount {
                names: anchor_names.len(),
                points: anchor_indices.len(),
            });
        }
        if anchor_indices.windows(2).any(|w| w[0] >= w[1])
            || anchor_indices.iter().any(|&i| i >= vertices.len())
        {
            return Err(MaskError::AnchorOrder);
        }
        Ok(Self {
            vertices,
            anchor_indices,
            anchor_names,
        })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn anchor_indices(&self) -> &[usize] {
        &self.anchor_indices
    }

    pub fn anchor_names(&self) -> &[String] {
        &self.anchor_names
    }

    pub fn anchor_count(&self) -> usize {
        self.anchor_indices.len()
    }

    pub fn anchors(&self) -> Vec<Point> {
        self.anchor_indices
            .iter()
            .map(|&i| self.vertices[i])
            .collect()
    }

    pub fn transformed(&self, t: &Similarity) -> TemplateContour {
        TemplateContour {
            vertices: self.vertices.iter().map(|&p| t.apply(p)).collect(),
            anchor_indices: self.anchor_indices.clone(),
            anchor_names: self.anchor_names.clone(),
        }
    }

    /// Vertices of the arc from anchor `segment` to the next anchor, both ends included.
    /// The last segment wraps around the end of the vertex list.
    pub fn arc(&self, segment: usize) -> Vec<Point> {
        let n = self.vertices.len();
        let start = self.anchor_indices[segment];
        let end = self.anchor_indices[(segment + 1) % self.anchor_count()];
        let len = if end > start {
            end - start
        } else {
            end + n - start
        };
        (0..=len).map(|k| self.vertices[(start + k) % n]).collect()
    }
}

/// Result of [`align_template`].
#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    pub transform: Similarity,
    /// Sum of squared anchor-to-landmark distances after alignment.
    pub residual: f64,
    pub template: TemplateContour,
}

fn centroid(points: &[Point]) -> Point {
    let n = points.len() as f64;
    let s = points.iter().fold(Point::default(), |acc, &p| acc + p);
    s * (1.0 / n)
}

/// Largest distance of any point from the principal axis through the centroid.
fn off_axis_spread(points: &[Point]) -> f64 {
    let c = centroid(points);
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for &p in points {
        let d = p - c;
        sxx += d.x * d.x;
        sxy += d.x * d.y;
        syy += d.y * d.y;
    }
    let angle = 0.5 * math::atan2(2.0 * sxy, sxx - syy);
    let normal = Point::new(-math::sin(angle), math::cos(angle));
    points
        .iter()
        .map(|&p| (p - c).dot(normal).abs())
        .fold(0.0, f64::max)
}

/// Least-squares similarity alignment of the template anchors onto the landmarks.
pub fn align_template(
    template: &TemplateContour,
    landmarks: &LandmarkSet,
) -> Result<Alignment, MaskError> {
    if template.anchor_count() != landmarks.len() {
        return Err(MaskError::AnchorCount {
            anchors: template.anchor_count(),
            landmarks: landmarks.len(),
        });
    }
    if off_axis_spread(landmarks.points()) <= 1e-9 {
        return Err(MaskError::Degenerate);
    }
    let src = template.anchors();
    let dst = landmarks.points();
    let (cs, cd) = (centroid(&src), centroid(dst));
    let (mut dot, mut cross, mut norm) = (0.0, 0.0, 0.0);
    for (&s, &d) in src.iter().zip(dst) {
        let (s, d) = (s - cs, d - cd);
        dot += s.dot(d);
        cross += s.cross(d);
        norm += s.dot(s);
    }
    if norm == 0.0 {
        return Err(MaskError::Degenerate);
    }
    let angle = math::atan2(cross, dot);
    let scale = math::hypot(dot, cross) / norm;
    let rotated = Similarity {
        scale,
        angle,
        translation: Point::default(),
    }
    .apply(cs);
    let transform = Similarity {
        scale,
        angle,
        translation: cd - rotated,
    };
    let residual = src
        .iter()
        .zip(dst)
        .map(|(&s, &d)| {
            let e = transform.apply(s) - d;
            e.dot(e)
        })
        .sum();
    Ok(Alignment {
        transform,
        residual,
        template: template.transformed(&transform),
    })
}

/// A discretized template point between anchors `segment` and `segment + 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemplatePoint {
    pub point: Point,
    pub segment: usize,
    /// Interpolation parameter along the anchor chord that produced the point.
    pub a: f64,
}

/// Nearest point of a polyline to `p`, with its arc-length position.
///
/// Distances within 1e-9 count as ties and keep the earlier point, so queries
/// on the bisector of a vertex resolve the same way in every frame.
fn nearest_on_polyline(polyline: &[Point], p: Point) -> (Point, f64) {
    let mut best = (polyline[0], 0.0, f64::INFINITY);
    let mut walked = 0.0;
    for w in polyline.windows(2) {
        let (q, t) = project_onto_segment(p, w[0], w[1]);
        let len = w[0].dist(w[1]);
        let d = q.dist(p);
        if d < best.2 - 1e-9 {
            best = (q, walked + t * len, d);
        }
        walked += len;
    }
    (best.0, best.1)
}

/// The template point for chord parameter `a` on `segment`: the chord point
/// `(1 - a) T_i + a T_(i+1)` moved to its nearest point on the template arc.
pub fn template_point(template: &TemplateContour, segment: usize, a: f64) -> Point {
    let arc = template.arc(segment);
    let chord = arc[0].lerp(arc[arc.len() - 1], a);
    nearest_on_polyline(&arc, chord).0
}

/// Discretizes every anchor-to-anchor arc at roughly `spacing` pixels.
///
/// Only points strictly between the two anchors are returned, ordered along the contour.
pub fn discretize_template(
    template: &TemplateContour,
    spacing: f64,
) -> Result<Vec<TemplatePoint>, MaskError> {
    if !(spacing > 0.0) || !spacing.is_finite() {
        return Err(MaskError::Spacing);
    }
    let mut out = Vec::new();
    for segment in 0..template.anchor_count() {
        let arc = template.arc(segment);
        let (first, last) = (arc[0], arc[arc.len() - 1]);
        let arc_len: f64 = arc.windows(2).map(|w| w[0].dist(w[1])).sum();
        let steps = (math::round(arc_len / spacing) as usize).max(1);
        let mut seg_points: Vec<(f64, TemplatePoint)> = Vec::with_capacity(steps);
        for k in 1..steps {
            let a = k as f64 / steps as f64;
            let chord = first.lerp(last, a);
            let (point, pos) = nearest_on_polyline(&arc, chord);
            if point == first || point == last {
                continue;
            }
            seg_points.push((pos, TemplatePoint { point, segment, a }));
        }
        seg_points.sort_by(|x, y| x.0.total_cmp(&y.0));
        seg_points.dedup_by(|x, y| x.1.point == y.1.point);
        out.extend(seg_points.into_iter().map(|(_, p)| p));
    }
    Ok(out)
}

/// Interpolated landmark on the chord `[P_i, P_(i+1)]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterpolatedPoint {
    pub point: Point,
    pub segment: usize,
    /// Template chord parameter of the source point.
    pub a: f64,
    /// Position along the landmark chord, `|P_i A| / |P_i P_(i+1)|`.
    pub t: f64,
    /// `|T_i - T'_j| / |T_(i+1) - T'_j|`, the ratio the point reproduces.
    pub ratio: f64,
}

/// Anatomical landmarks plus the points interpolated between them.
#[derive(Debug, Clone, PartialEq)]
pub struct DensifiedContour {
    pub anatomical: Vec<Point>,
    pub interpolated: Vec<InterpolatedPoint>,
}

impl DensifiedContour {
    /// The closed contour in order: `P_1`, points of segment 1, `P_2`, ...
    pub fn polygon(&self) -> Vec<Point> {
        let mut out = Vec::with_capacity(self.anatomical.len() + self.interpolated.len());
        let mut next = 0;
        for (i, &p) in self.anatomical.iter().enumerate() {
            out.push(p);
            while next < self.interpolated.len() && self.interpolated[next].segment == i {
                out.push(self.interpolated[next].point);
                next += 1;
            }
        }
        out
    }
}

/// Places every discretized template point on its landmark chord so that the
/// ratio of distances to the two bracketing landmarks matches the ratio of
/// distances to the two bracketing anchors on the template.
pub fn project_to_landmarks(
    landmarks: &LandmarkSet,
    template: &TemplateContour,
    discretized: &[TemplatePoint],
) -> Result<DensifiedContour, MaskError> {
    let n = landmarks.len();
    if template.anchor_count() != n {
        return Err(MaskError::AnchorCount {
            anchors: template.anchor_count(),
            landmarks: n,
        });
    }
    let anchors = template.anchors();
    let p = landmarks.points();
    let mut interpolated = Vec::with_capacity(discretized.len());
    for tp in discretized {
        let i = tp.segment;
        let (ti, tj) = (anchors[i], anchors[(i + 1) % n]);
        let (pi, pj) = (p[i], p[(i + 1) % n]);
        if pi == pj {
            return Err(MaskError::ZeroLengthSegment(i));
        }
        let (d0, d1) = (ti.dist(tp.point), tj.dist(tp.point));
        let t = d0 / (d0 + d1);
        interpolated.push(InterpolatedPoint {
            point: pi.lerp(pj, t),
            segment: i,
            a: tp.a,
            t,
            ratio: d0 / d1,
        });
    }
    interpolated.sort_by(|x, y| x.segment.cmp(&y.segment).then(x.t.total_cmp(&y.t)));
    Ok(DensifiedContour {
        anatomical: p.to_vec(),
        interpolated,
    })
}

/// Template alignment, discretization and projection in one call.
pub fn densify(
    landmarks: &LandmarkSet,
    template: &TemplateContour,
    spacing: f64,
) -> Result<DensifiedContour, MaskError> {
    let aligned = align_template(template, landmarks)?;
    let discretized = discretize_template(&aligned.template, spacing)?;
    project_to_landmarks(landmarks, &aligned.template, &discretized)
}

/// `H x W` grid of `{0, 1}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl BinaryMask {
    pub fn new(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![0; height * width],
        }
    }

    /// Any nonzero byte counts as foreground.
    pub fn from_bytes(height: usize, width: usize, bytes: &[u8]) -> Option<Self> {
        (bytes.len() == height * width).then(|| Self {
            height,
            width,
            data: bytes.iter().map(|&b| u8::from(b != 0)).collect(),
        })
    }

    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut m = Self::new(height, width);
        for r in 0..height {
            for c in 0..width {
                m.data[r * width + c] = u8::from(f(r, c));
            }
        }
        m
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.data[row * self.width + col] != 0
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.data[row * self.width + col] = u8::from(value);
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    /// Foreground as 0/255 bytes, ready for an 8-bit image file.
    pub fn to_u8_image(&self) -> Vec<u8> {
        self.data.iter().map(|&v| v * 255).collect()
    }

    /// Number of 4-connected foreground components.
    pub fn components(&self) -> usize {
        let mut seen = vec![false; self.data.len()];
        let mut stack = Vec::new();
        let mut count = 0;
        for start in 0..self.data.len() {
            if self.data[start] == 0 || seen[start] {
                continue;
            }
            count += 1;
            seen[start] = true;
            stack.push(start);
            while let Some(idx) = stack.pop() {
                let (r, c) = (idx / self.width, idx % self.width);
                let mut visit = |rr: usize, cc: usize| {
                    let j = rr * self.width + cc;
                    if self.data[j] != 0 && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                };
                if r > 0 {
                    visit(r - 1, c);
                }
                if r + 1 < self.height {
                    visit(r + 1, c);
                }
                if c > 0 {
                    visit(r, c - 1);
                }
                if c + 1 < self.width {
                    visit(r, c + 1);
                }
            }
        }
        count
    }
}

/// Output of [`rasterize`].
#[derive(Debug, Clone, PartialEq)]
pub struct Rasterized {
    pub mask: BinaryMask,
    /// Set when the polygon encloses zero area; the mask then holds at most the outline.
    pub degenerate: bool,
}

fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b - a).cross(c - a)
}

fn on_segment(a: Point, b: Point, p: Point) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

fn segments_touch(a: Point, b: Point, c: Point, d: Point) -> bool {
    let (o1, o2, o3, o4) = (
        orient(a, b, c),
        orient(a, b, d),
        orient(c, d, a),
        orient(c, d, b),
    );
    if ((o1 > 0.0 && o2 < 0.0) || (o1 < 0.0 && o2 > 0.0))
        && ((o3 > 0.0 && o4 < 0.0) || (o3 < 0.0 && o4 > 0.0))
    {
        return true;
    }
    (o1 == 0.0 && on_segment(a, b, c))
        || (o2 == 0.0 && on_segment(a, b, d))
        || (o3 == 0.0 && on_segment(c, d, a))
        || (o4 == 0.0 && on_segment(c, d, b))
}

/// First pair of non-adjacent edges that touch, if any. Edge `k` joins point `k` to `k + 1`.
pub fn find_self_intersection(points: &[Point]) -> Option<(usize, usize)> {
    let n = points.len();
    for i in 0..n {
        let (a, b) = (points[i], points[(i + 1) % n]);
        for j in (i + 2)..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            let (c, d) = (points[j], points[(j + 1) % n]);
            if segments_touch(a, b, c, d) {
                return Some((i, j));
            }
        }
    }
    None
}

/// Fills a closed polygon with the even-odd rule. Pixel `(row, col)` has its
/// center at `(x, y) = (col, row)` and is foreground when that center is inside
/// the polygon or on its boundary.
pub fn rasterize_polygon(
    points: &[Point],
    height: usize,
    width: usize,
) -> Result<Rasterized, MaskError> {
    let n = points.len();
    if n < 3 {
        return Err(MaskError::TooFewPoints(n));
    }
    for (index, p) in points.iter().enumerate() {
        let inside = p.x >= 0.0 && p.y >= 0.0 && p.x < width as f64 && p.y < height as f64;
        if !inside {
            return Err(MaskError::OutOfBounds {
                index,
                x: p.x,
                y: p.y,
                height,
                width,
            });
        }
    }
    if let Some((first, second)) = find_self_intersection(points) {
        return Err(MaskError::SelfIntersection { first, second });
    }

    let mut mask = BinaryMask::new(height, width);
    let mut crossings = Vec::new();
    for row in 0..height {
        let y = row as f64;
        crossings.clear();
        for i in 0..n {
            let (a, b) = (points[i], points[(i + 1) % n]);
            if (a.y <= y && y < b.y) || (b.y <= y && y < a.y) {
                crossings.push(a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y));
            }
        }
        crossings.sort_by(f64::total_cmp);
        for pair in crossings.chunks_exact(2) {
            let lo = libm::ceil(pair[0]).max(0.0) as usize;
            let hi = math::floor(pair[1]);
            if hi < 0.0 {
                continue;
            }
            let hi = (hi as usize).min(width - 1);
            for col in lo..=hi {
                mask.set(row, col, true);
            }
        }
    }

    // Closed-set rule: centers lying exactly on an edge are foreground too.
    for i in 0..n {
        let (a, b) = (points[i], points[(i + 1) % n]);
        let r0 = libm::ceil(a.y.min(b.y)) as usize;
        let r1 = math::floor(a.y.max(b.y)) as usize;
        for row in r0..=r1.min(height - 1) {
            let y = row as f64;
            if a.y == b.y {
                let c0 = libm::ceil(a.x.min(b.x)) as usize;
                let c1 = (math::floor(a.x.max(b.x)) as usize).min(width - 1);
                for col in c0..=c1 {
                    mask.set(row, col, true);
                }
            } else {
                let x = a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y);
                let xr = math::round(x);
                if (x - xr).abs() <= 1e-9 && xr >= 0.0 && (xr as usize) < width {
                    mask.set(row, xr as usize, true);
                }
            }
        }
    }

    let degenerate = signed_area(points).abs() < 1e-12;
    if degenerate {
        log::warn!("rasterize: polygon encloses zero area");
    }
    Ok(Rasterized { mask, degenerate })
}

/// Rasterizes the closed densified contour.
pub fn rasterize(
    contour: &DensifiedContour,
    height: usize,
    width: usize,
) -> Result<Rasterized, MaskError> {
    rasterize_polygon(&contour.polygon(), height, width)
}

/// Landmarks -> template alignment -> densified contour -> mask.
pub fn generate_mask(
    landmarks: &LandmarkSet,
    template: &TemplateContour,
    spacing: f64,
    height: usize,
    width: usize,
) -> Result<Rasterized, MaskError> {
    rasterize(&densify(landmarks, template, spacing)?, height, width)
}

/// Default spacing between discretized template points, in pixels.
pub const DEFAULT_SPACING: f64 = 2.0;
