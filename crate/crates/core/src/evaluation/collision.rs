//! Oriented boxes, overlap tests and at-fault classification.

use crate::geometry::Vec2;

/// Agents slower than this count as stationary.
pub const STATIONARY_SPEED: f64 = 0.1;
/// Contacts behind this fraction of the SDV length (from its centre) are rear hits.
pub const REAR_FRACTION: f64 = 0.25;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrientedBox {
    pub center: Vec2,
    pub heading: f64,
    pub length: f64,
    pub width: f64,
}

impl OrientedBox {
    pub fn new(center: Vec2, heading: f64, length: f64, width: f64) -> Self {
        Self { center, heading, length, width }
    }

    /// Corners counter-clockwise, starting front-left.
    pub fn corners(&self) -> [Vec2; 4] {
        let f = Vec2::from_heading(self.heading) * (self.length / 2.0);
        let l = Vec2::from_heading(self.heading + std::f64::consts::FRAC_PI_2) * (self.width / 2.0);
        let c = self.center;
        [c + f + l, c - f + l, c - f - l, c + f - l]
    }

    fn axes(&self) -> [Vec2; 2] {
        [Vec2::from_heading(self.heading), Vec2::from_heading(self.heading + std::f64::consts::FRAC_PI_2)]
    }

    /// Separating-axis test; touching boxes do not overlap.
    pub fn overlaps(&self, other: &OrientedBox) -> bool {
        let (a, b) = (self.corners(), other.corners());
        for axis in self.axes().into_iter().chain(other.axes()) {
            let (amin, amax) = extent(&a, axis);
            let (bmin, bmax) = extent(&b, axis);
            if amax <= bmin || bmax <= amin {
                return false;
            }
        }
        true
    }

    /// `p` in this box's frame: (longitudinal, lateral).
    pub fn to_local(&self, p: Vec2) -> Vec2 {
        (p - self.center).rotate(-self.heading)
    }
}

fn extent(corners: &[Vec2; 4], axis: Vec2) -> (f64, f64) {
    corners.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), c| {
        let d = c.dot(axis);
        (lo.min(d), hi.max(d))
    })
}

/// Sutherland-Hodgman clip of `subject` by the convex counter-clockwise `clip`.
fn clip_polygon(subject: &[Vec2], clip: &[Vec2]) -> Vec<Vec2> {
    let mut out = subject.to_vec();
    for i in 0..clip.len() {
        if out.is_empty() {
            break;
        }
        let (a, b) = (clip[i], clip[(i + 1) % clip.len()]);
        let inside = |p: Vec2| (b - a).cross(p - a) >= 0.0;
        let input = std::mem::take(&mut out);
        for j in 0..input.len() {
            let cur = input[j];
            let prev = input[(j + input.len() - 1) % input.len()];
            let intersect = || {
                let d = cur - prev;
                let denom = (b - a).cross(d);
                let t = if denom.abs() > 1e-15 { -(b - a).cross(prev - a) / denom } else { 0.0 };
                prev + d * t
            };
            match (inside(prev), inside(cur)) {
                (true, true) => out.push(cur),
                (true, false) => out.push(intersect()),
                (false, true) => {
                    out.push(intersect());
                    out.push(cur);
                }
                (false, false) => {}
            }
        }
    }
    out
}

fn centroid(poly: &[Vec2]) -> Vec2 {
    let mut area = 0.0;
    let mut c = Vec2::new(0.0, 0.0);
    for i in 0..poly.len() {
        let (p, q) = (poly[i], poly[(i + 1) % poly.len()]);
        let w = p.cross(q);
        area += w;
        c = c + (p + q) * w;
    }
    if area.abs() < 1e-12 {
        let n = poly.len().max(1) as f64;
        return poly.iter().fold(Vec2::new(0.0, 0.0), |acc, p| acc + *p) * (1.0 / n);
    }
    c * (1.0 / (3.0 * area))
}

/// Representative contact point: the centroid of the overlap region.
pub fn contact_point(a: &OrientedBox, b: &OrientedBox) -> Option<Vec2> {
    if !a.overlaps(b) {
        return None;
    }
    let region = clip_polygon(&a.corners(), &b.corners());
    if region.is_empty() {
        return Some(a.center.lerp(b.center, 0.5));
    }
    Some(centroid(&region))
}

/// Whether the SDV is to blame for an overlap with an agent: the agent was
/// stationary, or the contact is on the SDV's front or sides.
pub fn at_fault_collision(sdv: &OrientedBox, agent: &OrientedBox, agent_speed: f64) -> bool {
    let Some(contact) = contact_point(sdv, agent) else { return false };
    if agent_speed < STATIONARY_SPEED {
        return true;
    }
    sdv.to_local(contact).x >= -REAR_FRACTION * sdv.length
}
