//! Planar points and the similarity transforms used to move templates around.
//!
//! Coordinates are in pixels with the origin at the top-left pixel center,
//! x pointing right and y pointing down.

use core::ops::{Add, Mul, Sub};

use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, other: Point) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn cross(self, other: Point) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        math::hypot(self.x, self.y)
    }

    pub fn dist(self, other: Point) -> f64 {
        (self - other).norm()
    }

    /// `(1 - a) * self + a * other`
    pub fn lerp(self, other: Point, a: f64) -> Point {
        Point::new(
            self.x + a * (other.x - self.x),
            self.y + a * (other.y - self.y),
        )
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, s: f64) -> Point {
        Point::new(self.x * s, self.y * s)
    }
}

/// `p -> scale * R(angle) * p + translation`
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Similarity {
    pub scale: f64,
    /// Rotation angle in radians, counter-clockwise in a y-up frame.
    pub angle: f64,
    pub translation: Point,
}

impl Similarity {
    pub const IDENTITY: Similarity = Similarity {
        scale: 1.0,
        angle: 0.0,
        translation: Point::new(0.0, 0.0),
    };

    pub fn apply(&self, p: Point) -> Point {
        let (s, c) = (math::sin(self.angle), math::cos(self.angle));
        Point::new(
            self.scale * (c * p.x - s * p.y) + self.translation.x,
            self.scale * (s * p.x + c * p.y) + self.translation.y,
        )
    }
}

/// Shoelace area of a closed polygon (absolute value).
pub fn polygon_area(points: &[Point]) -> f64 {
    signed_area(points).abs()
}

pub fn signed_area(points: &[Point]) -> f64 {
    let n = points.len();
    if n < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..n {
        let a = points[i];
        let b = points[(i + 1) % n];
        acc += a.cross(b);
    }
    0.5 * acc
}

/// Closest point to `p` on the segment `[a, b]` and its parameter along the segment.
pub fn project_onto_segment(p: Point, a: Point, b: Point) -> (Point, f64) {
    let d = b - a;
    let len2 = d.dot(d);
    if len2 == 0.0 {
        return (a, 0.0);
    }
    let t = ((p - a).dot(d) / len2).clamp(0.0, 1.0);
    (a.lerp(b, t), t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_square_area() {
        let sq = [
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(0.0, 1.0),
        ];
        assert_eq!(polygon_area(&sq), 1.0);
    }

    #[test]
    fn similarity_quarter_turn() {
        let t = Similarity {
            scale: 2.0,
            angle: core::f64::consts::FRAC_PI_2,
            translation: Point::new(1.0, 0.0),
        };
        let p = t.apply(Point::new(1.0, 0.0));
        assert!((p.x - 1.0).abs() < 1e-12 && (p.y - 2.0).abs() < 1e-12);
    }

    #[test]
    fn projection_clamps_to_segment() {
        let (q, t) = project_onto_segment(
            Point::new(5.0, 1.0),
            Point::new(0.0, 0.0),
            Point::new(2.0, 0.0),
        );
        assert_eq!(q, Point::new(2.0, 0.0));
        assert_eq!(t, 1.0);
    }
}
