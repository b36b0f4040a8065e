//! Planar primitives shared by the graph, decoder and metrics.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn from_heading(heading: f64) -> Self {
        Self::new(heading.cos(), heading.sin())
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z component of the 3d cross product.
    pub fn cross(self, other: Vec2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Vec2) -> f64 {
        (self - other).norm()
    }

    pub fn heading(self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn lerp(self, other: Vec2, t: f64) -> Vec2 {
        self + (other - self) * t
    }

    pub fn rotate(self, angle: f64) -> Vec2 {
        let (s, c) = angle.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, rhs: f64) -> Vec2 {
        Vec2::new(self.x * rhs, self.y * rhs)
    }
}

/// Wraps an angle into (-pi, pi].
pub fn normalize_angle(angle: f64) -> f64 {
    let mut a = angle.rem_euclid(2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// Absolute difference between two headings, in [0, pi].
pub fn heading_difference(a: f64, b: f64) -> f64 {
    normalize_angle(a - b).abs()
}

/// Result of projecting a point onto a polyline.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projection {
    pub distance: f64,
    /// Positive when the point lies to the left of the travel direction.
    pub signed_lateral: f64,
    pub arc: f64,
    pub segment: usize,
    pub point: Vec2,
    /// Direction of the segment the projection landed on.
    pub heading: f64,
}

/// An ordered point sequence with cached cumulative arc lengths.
#[derive(Clone, Debug, PartialEq)]
pub struct Polyline {
    points: Vec<Vec2>,
    cumulative: Vec<f64>,
}

impl Polyline {
    pub fn new(points: Vec<Vec2>) -> Self {
        let mut cumulative = Vec::with_capacity(points.len());
        let mut acc = 0.0;
        for (i, p) in points.iter().enumerate() {
            if i > 0 {
                acc += p.distance(points[i - 1]);
            }
            cumulative.push(acc);
        }
        Self { points, cumulative }
    }

    pub fn points(&self) -> &[Vec2] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn length(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }

    pub fn first(&self) -> Vec2 {
        self.points[0]
    }

    pub fn last(&self) -> Vec2 {
        self.points[self.points.len() - 1]
    }

    /// Heading of the segment at index `seg`, skipping zero-length segments.
    fn segment_heading(&self, seg: usize) -> f64 {
        let n = self.points.len();
        if n < 2 {
            return 0.0;
        }
        for i in seg..n - 1 {
            let d = self.points[i + 1] - self.points[i];
            if d.norm() > 1e-12 {
                return d.heading();
            }
        }
        for i in (0..seg.min(n - 1)).rev() {
            let d = self.points[i + 1] - self.points[i];
            if d.norm() > 1e-12 {
                return d.heading();
            }
        }
        0.0
    }

    pub fn start_heading(&self) -> f64 {
        self.segment_heading(0)
    }

    pub fn end_heading(&self) -> f64 {
        self.segment_heading(self.points.len().saturating_sub(2))
    }

    pub fn project(&self, p: Vec2) -> Projection {
        self.project_from(p, 0)
    }

    /// Projection restricted to segments with index >= `min_segment`.
    pub fn project_from(&self, p: Vec2, min_segment: usize) -> Projection {
        if self.points.len() == 1 {
            let q = self.points[0];
            return Projection {
                distance: p.distance(q),
                signed_lateral: 0.0,
                arc: 0.0,
                segment: 0,
                point: q,
                heading: 0.0,
            };
        }
        let mut best: Option<Projection> = None;
        for seg in min_segment.min(self.points.len() - 2)..self.points.len() - 1 {
            let a = self.points[seg];
            let b = self.points[seg + 1];
            let ab = b - a;
            let len2 = ab.dot(ab);
            let t = if len2 > 0.0 { ((p - a).dot(ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
            let q = a + ab * t;
            let distance = p.distance(q);
            if best.is_none_or(|b| distance < b.distance) {
                let heading = self.segment_heading(seg);
                let signed_lateral = Vec2::from_heading(heading).cross(p - q).signum() * distance;
                best = Some(Projection {
                    distance,
                    signed_lateral,
                    arc: self.cumulative[seg] + len2.sqrt() * t,
                    segment: seg,
                    point: q,
                    heading,
                });
            }
        }
        best.expect("polyline with at least two points has a segment")
    }

    /// Point at arc length `s`, clamped to the polyline.
    pub fn point_at(&self, s: f64) -> Vec2 {
        let (seg, t) = self.locate(s);
        if seg + 1 >= self.points.len() {
            return self.points[seg];
        }
        self.points[seg].lerp(self.points[seg + 1], t)
    }

    pub fn heading_at(&self, s: f64) -> f64 {
        let (seg, _) = self.locate(s);
        self.segment_heading(seg)
    }

    fn locate(&self, s: f64) -> (usize, f64) {
        let n = self.points.len();
        if n < 2 || s <= 0.0 {
            return (0, 0.0);
        }
        if s >= self.length() {
            return (n - 2, 1.0);
        }
        let seg = match self.cumulative.binary_search_by(|c| c.total_cmp(&s)) {
            Ok(i) => i.min(n - 2),
            Err(i) => i - 1,
        };
        let seg_len = self.cumulative[seg + 1] - self.cumulative[seg];
        let t = if seg_len > 0.0 { (s - self.cumulative[seg]) / seg_len } else { 0.0 };
        (seg, t)
    }

    /// Signed mean curvature: net heading change over length.
    pub fn mean_curvature(&self) -> f64 {
        let len = self.length();
        if len <= 1e-9 || self.points.len() < 3 {
            return 0.0;
        }
        let mut turn = 0.0;
        let mut prev: Option<f64> = None;
        for w in self.points.windows(2) {
            let d = w[1] - w[0];
            if d.norm() <= 1e-12 {
                continue;
            }
            let h = d.heading();
            if let Some(p) = prev {
                turn += normalize_angle(h - p);
            }
            prev = Some(h);
        }
        turn / len
    }

    /// Resamples `count` points evenly spaced over the arc interval [from, to].
    pub fn resample(&self, from: f64, to: f64, count: usize) -> Vec<Vec2> {
        if count == 1 {
            return vec![self.point_at(from)];
        }
        (0..count)
            .map(|i| self.point_at(from + (to - from) * i as f64 / (count - 1) as f64))
            .collect()
    }
}

/// Even-odd point-in-polygon test with points on the boundary counted inside.
pub fn point_in_polygon(p: Vec2, polygon: &[Vec2]) -> bool {
    let n = polygon.len();
    if n < 3 {
        return false;
    }
    let mut inside = false;
    for i in 0..n {
        let a = polygon[i];
        let b = polygon[(i + 1) % n];
        if on_segment(p, a, b) {
            return true;
        }
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x {
                inside = !inside;
            }
        }
    }
    inside
}

fn on_segment(p: Vec2, a: Vec2, b: Vec2) -> bool {
    const EPS: f64 = 1e-9;
    let ab = b - a;
    if (ab).cross(p - a).abs() > EPS * ab.norm().max(1.0) {
        return false;
    }
    let t = (p - a).dot(ab);
    t >= -EPS && t <= ab.dot(ab) + EPS
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_angle_range() {
        assert_eq!(normalize_angle(PI), PI);
        assert!((normalize_angle(-PI) - PI).abs() < 1e-12);
        assert!((normalize_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert!((normalize_angle(0.25)).abs() - 0.25 < 1e-15);
    }

    #[test]
    fn projection_is_signed_and_clamped() {
        let line = Polyline::new(vec![Vec2::new(0.0, 0.0), Vec2::new(10.0, 0.0)]);
        let left = line.project(Vec2::new(4.0, 2.0));
        assert!((left.distance - 2.0).abs() < 1e-12);
        assert!((left.signed_lateral - 2.0).abs() < 1e-12);
        assert!((left.arc - 4.0).abs() < 1e-12);
        let right = line.project(Vec2::new(4.0, -3.0));
        assert!((right.signed_lateral + 3.0).abs() < 1e-12);
        let beyond = line.project(Vec2::new(13.0, 4.0));
        assert!((beyond.distance - 5.0).abs() < 1e-12);
        assert!((beyond.arc - 10.0).abs() < 1e-12);
    }

    #[test]
    fn point_at_interpolates() {
        let line = Polyline::new(vec![Vec2::new(0.0, 0.0), Vec2::new(3.0, 0.0), Vec2::new(3.0, 4.0)]);
        assert_eq!(line.length(), 7.0);
        let p = line.point_at(5.0);
        assert!((p.x - 3.0).abs() < 1e-12 && (p.y - 2.0).abs() < 1e-12);
        assert_eq!(line.point_at(-1.0), Vec2::new(0.0, 0.0));
        assert_eq!(line.point_at(99.0), Vec2::new(3.0, 4.0));
        assert!((line.heading_at(5.0) - PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn polygon_boundary_counts_inside() {
        let square = [
            Vec2::new(0.0, 0.0),
            Vec2::new(2.0, 0.0),
            Vec2::new(2.0, 2.0),
            Vec2::new(0.0, 2.0),
        ];
        assert!(point_in_polygon(Vec2::new(1.0, 1.0), &square));
        assert!(point_in_polygon(Vec2::new(2.0, 1.0), &square));
        assert!(point_in_polygon(Vec2::new(0.0, 0.0), &square));
        assert!(!point_in_polygon(Vec2::new(2.0001, 1.0), &square));
    }

    #[test]
    fn quarter_circle_curvature() {
        let r = 10.0;
        let pts: Vec<Vec2> = (0..=90)
            .map(|i| {
                let a = -PI / 2.0 + (i as f64) * PI / 180.0;
                Vec2::new(r * a.cos(), r + r * a.sin())
            })
            .collect();
        let arc = Polyline::new(pts);
        // chord headings turn 89 degrees over the 90 one-degree chords
        let chords = 90.0 * 2.0 * r * (PI / 360.0).sin();
        assert!((arc.mean_curvature() - (89.0 * PI / 180.0) / chords).abs() < 1e-12);
    }
}
