//! Geometric oracles for mask generation: point-to-polyline distance, a dense
//! ratio scan, the shoelace area and 4-connected component sizes.

use std::f64::consts::PI;

use liplab_core::geometry::{polygon_area, project_onto_segment, Point, Similarity};
use liplab_core::maskgen::{
    align_template, densify, discretize_template, rasterize_polygon, BinaryMask, LandmarkSet,
    DEFAULT_SPACING,
};
use liplab_core::synth::canonical_template;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ensure, Check};

pub fn landmarks(points: Vec<Point>) -> LandmarkSet {
    let names = (0..points.len()).map(|i| format!("p{i}")).collect();
    LandmarkSet::new(names, points).unwrap()
}

pub fn random_similarity(rng: &mut ChaCha8Rng) -> Similarity {
    Similarity {
        scale: rng.random_range(0.8..1.2),
        angle: rng.random_range(-PI..PI),
        translation: Point::new(rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0)),
    }
}

pub fn dist_to_polyline(p: Point, polyline: &[Point], closed: bool) -> f64 {
    let n = polyline.len();
    let edges = if closed { n } else { n - 1 };
    (0..edges)
        .map(|i| {
            project_onto_segment(p, polyline[i], polyline[(i + 1) % n])
                .0
                .dist(p)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Eleven landmarks in convex position on a jittered ellipse, counter-clockwise in image space.
pub fn convex_landmarks(rng: &mut ChaCha8Rng) -> Vec<Point> {
    let (cx, cy) = (rng.random_range(25.0..40.0), rng.random_range(25.0..40.0));
    let (a, b) = (rng.random_range(15.0..22.0), rng.random_range(6.0..12.0));
    (0..11)
        .map(|k| {
            let t = PI - 2.0 * PI * (k as f64 + rng.random_range(-0.2..0.2)) / 11.0;
            Point::new(cx + a * t.cos(), cy - b * t.sin())
        })
        .collect()
}

/// Landmarks taken from a similarity-transformed template reproduce that
/// template within 0.5 px per contour vertex. Returns the worst distance.
pub fn template_round_trip(trials: usize, seed: u64) -> Result<f64, String> {
    let template = canonical_template();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for k in 0..trials {
        let moved = template.transformed(&random_similarity(&mut rng));
        let lm = landmarks(moved.anchors());
        let al = align_template(&template, &lm).map_err(|e| e.to_string())?;
        ensure(al.residual < 1e-16, || {
            format!("trial {k}: residual {}", al.residual)
        })?;
        let polygon = densify(&lm, &template, DEFAULT_SPACING)
            .map_err(|e| e.to_string())?
            .polygon();
        let w = polygon
            .iter()
            .map(|&p| dist_to_polyline(p, moved.vertices(), true))
            .fold(0.0, f64::max);
        ensure(w <= 0.5, || {
            format!("trial {k}: vertex {w} px off the template")
        })?;
        worst = worst.max(w);
    }
    Ok(worst)
}

/// Every interpolated point sits on its chord with the template's distance
/// ratio, to 1e-6, and no scanned chord point does better. Returns the worst discrepancy.
pub fn ratio_scan(trials: usize, seed: u64) -> Result<f64, String> {
    let template = canonical_template();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let pts = convex_landmarks(&mut rng);
        let lm = landmarks(pts.clone());
        let al = align_template(&template, &lm).map_err(|e| e.to_string())?;
        let anchors = al.template.anchors();
        let dense = densify(&lm, &template, DEFAULT_SPACING).map_err(|e| e.to_string())?;
        let discretized =
            discretize_template(&al.template, DEFAULT_SPACING).map_err(|e| e.to_string())?;
        ensure(dense.interpolated.len() == discretized.len(), || {
            "point count differs".into()
        })?;
        for a in &dense.interpolated {
            let (pi, pj) = (pts[a.segment], pts[(a.segment + 1) % 11]);
            let off = dist_to_polyline(a.point, &[pi, pj], false);
            ensure(off <= 1e-9, || {
                format!("point {:?} is {off} off its chord", a.point)
            })?;
            let source = discretized
                .iter()
                .find(|t| t.segment == a.segment && t.a == a.a)
                .ok_or("interpolated point without a template source")?;
            let (ti, tj) = (anchors[a.segment], anchors[(a.segment + 1) % 11]);
            let want = ti.dist(source.point) / tj.dist(source.point);
            let got = pi.dist(a.point) / pj.dist(a.point);
            let err = (got - want).abs();
            ensure(err <= 1e-6, || format!("ratio {got} vs {want}"))?;
            let scan = (1..10_000)
                .map(|k| pi.lerp(pj, k as f64 / 10_000.0))
                .map(|c| (pi.dist(c) / pj.dist(c) - want).abs())
                .fold(f64::INFINITY, f64::min);
            ensure(err <= scan + 1e-12, || {
                format!("dense scan finds {scan}, got {err}")
            })?;
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

pub fn star_polygon(rng: &mut ChaCha8Rng, size: f64) -> Vec<Point> {
    let n = rng.random_range(6..20);
    let c = Point::new(
        size / 2.0 + rng.random_range(-4.0..4.0),
        size / 2.0 + rng.random_range(-4.0..4.0),
    );
    let offset = rng.random_range(0.0..1.0);
    (0..n)
        .map(|k| {
            let t = 2.0 * PI * (k as f64 + offset) / n as f64;
            let r = rng.random_range(14.0..24.0);
            Point::new(c.x + r * t.cos(), c.y + r * t.sin())
        })
        .collect()
}

/// Size of the largest 4-connected foreground component.
pub fn largest_component(mask: &BinaryMask) -> usize {
    let (h, w) = (mask.height(), mask.width());
    let mut seen = vec![false; h * w];
    let mut best = 0;
    for start in 0..h * w {
        if seen[start] || !mask.get(start / w, start % w) {
            continue;
        }
        seen[start] = true;
        let (mut stack, mut size) = (vec![start], 0);
        while let Some(k) = stack.pop() {
            size += 1;
            let (r, c) = (k / w, k % w);
            let mut push = |r: usize, c: usize| {
                if r < h && c < w && !seen[r * w + c] && mask.get(r, c) {
                    seen[r * w + c] = true;
                    stack.push(r * w + c);
                }
            };
            push(r + 1, c);
            push(r, c + 1);
            push(r.wrapping_sub(1), c);
            push(r, c.wrapping_sub(1));
        }
        best = best.max(size);
    }
    best
}

/// Relative area error against the shoelace area; `stray` bounds the pixels
/// allowed outside the main component.
pub fn area_error(points: &[Point], size: usize, stray: usize) -> Result<f64, String> {
    let r = rasterize_polygon(points, size, size).map_err(|e| e.to_string())?;
    let outside = r.mask.count() - largest_component(&r.mask);
    ensure(outside <= stray, || {
        format!("{outside} pixels outside the main component")
    })?;
    let shoelace = polygon_area(points);
    ensure(shoelace >= 400.0, || {
        format!("polygon area {shoelace} below 400")
    })?;
    Ok((r.mask.count() as f64 - shoelace).abs() / shoelace)
}

/// Random star polygons and scaled lip contours (raw template and densified)
/// rasterize within 2% of their shoelace area. Returns the worst error.
pub fn rasterized_area(stars: usize, lips: usize, seed: u64) -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut record = |e: f64| -> Check {
        worst = worst.max(e);
        ensure(e <= 0.02, || format!("area error {e}"))
    };
    for _ in 0..stars {
        record(area_error(&star_polygon(&mut rng, 64.0), 64, 0)?)?;
    }
    let t = canonical_template();
    let center = Point::new(32.0, 34.0);
    for _ in 0..lips {
        let s = Similarity {
            scale: rng.random_range(1.35..1.6),
            angle: rng.random_range(-0.4..0.4),
            translation: Point::default(),
        };
        let place = |p: Point| s.apply(p - center) + Point::new(40.0, 40.0);
        let moved: Vec<Point> = t.vertices().iter().map(|&p| place(p)).collect();
        let lm = landmarks(t.anchors().iter().map(|&p| place(p)).collect());
        // a commissure cusp narrower than a pixel can leave its tip pixel detached
        record(area_error(&moved, 80, 2)?)?;
        let dense = densify(&lm, &t, DEFAULT_SPACING)
            .map_err(|e| e.to_string())?
            .polygon();
        record(area_error(&dense, 80, 2)?)?;
    }
    Ok(worst)
}
