//! Reference paths through a sequence of lane nodes.

use crate::geometry::{Polyline, Vec2};
use crate::lane_graph::{EdgeKind, LaneGraph, NodeId};

/// Length of the linear cross-fade used for lane changes.
pub const BLEND_LENGTH: f64 = 5.0;
const BLEND_STEP: f64 = 0.5;

/// A centreline path that starts at the SDV's projection; arc 0 is the start.
/// Queries outside `[0, length]` extrapolate along the end directions.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferencePath {
    line: Polyline,
}

#[derive(Clone, Copy)]
struct Entry {
    path_arc: f64,
    /// Lane the path actually follows when this node is entered; differs from
    /// the node itself only after a lane change.
    carrier: NodeId,
    carrier_arc: f64,
}

/// Point at arc `s` on `line`, extended linearly past both ends.
pub fn extrapolated_point(line: &Polyline, s: f64) -> Vec2 {
    if line.len() >= 2 {
        if s < 0.0 {
            return line.first() - Vec2::from_heading(line.start_heading()) * (-s);
        }
        if s > line.length() {
            return line.last() + Vec2::from_heading(line.end_heading()) * (s - line.length());
        }
    }
    line.point_at(s)
}

impl ReferencePath {
    pub fn from_polyline(line: Polyline) -> Self {
        Self { line }
    }

    /// Concatenates the node polylines from the projection of `start` onto
    /// the first node. Lane changes leave the current lane where it was
    /// entered and blend into the target lane over [`BLEND_LENGTH`].
    pub fn from_nodes(graph: &LaneGraph, nodes: &[NodeId], start: Vec2) -> Self {
        let first = graph.node(nodes[0]).polyline();
        let a0 = first.project(start).arc;
        let mut pts = vec![first.point_at(a0)];
        append_after(&mut pts, first, a0);
        let mut entries = vec![Entry { path_arc: 0.0, carrier: nodes[0], carrier_arc: a0 }];

        for w in nodes.windows(2) {
            let (u, v) = (w[0], w[1]);
            let kind = graph.edge_between(u, v).map_or(EdgeKind::Successor, |e| e.kind);
            let target = graph.node(v).polyline();
            if kind == EdgeKind::Proximal {
                let entry = *entries.last().expect("entry per node");
                truncate(&mut pts, entry.path_arc);
                let carrier = graph.node(entry.carrier).polyline();
                let q0 = *pts.last().expect("nonempty path");
                let av = target.project(q0).arc;
                // a change near the end of the target lane blends over what is left of it
                let blend = BLEND_LENGTH.min(target.length() - av).max(0.0);
                let steps = ((blend / BLEND_STEP).ceil() as usize).max(1);
                for i in 1..=steps {
                    let d = blend * i as f64 / steps as f64;
                    let old = extrapolated_point(carrier, entry.carrier_arc + d);
                    let new = extrapolated_point(target, av + d);
                    pts.push(if blend > 0.0 { old.lerp(new, d / blend) } else { new });
                }
                append_after(&mut pts, target, av + blend);
                entries.push(entry);
            } else {
                let path_arc = path_length(&pts);
                let start_idx = usize::from(pts.last().is_some_and(|p| p.distance(target.first()) < 1e-9));
                pts.extend_from_slice(&target.points()[start_idx..]);
                entries.push(Entry { path_arc, carrier: v, carrier_arc: 0.0 });
            }
        }
        pts.dedup_by(|a, b| a.distance(*b) < 1e-9);
        if pts.len() == 1 {
            // degenerate: stay put but keep a heading for extrapolation
            let h = first.heading_at(a0);
            pts.push(pts[0] + Vec2::from_heading(h) * 1e-6);
        }
        Self { line: Polyline::new(pts) }
    }

    pub fn polyline(&self) -> &Polyline {
        &self.line
    }

    pub fn length(&self) -> f64 {
        self.line.length()
    }

    pub fn point_at(&self, s: f64) -> Vec2 {
        extrapolated_point(&self.line, s)
    }

    pub fn heading_at(&self, s: f64) -> f64 {
        if s >= self.line.length() {
            self.line.end_heading()
        } else {
            self.line.heading_at(s)
        }
    }
}

fn path_length(pts: &[Vec2]) -> f64 {
    pts.windows(2).map(|w| w[0].distance(w[1])).sum()
}

/// Appends the vertices of `line` lying strictly beyond arc `from`.
fn append_after(pts: &mut Vec<Vec2>, line: &Polyline, from: f64) {
    let mut arc = 0.0;
    for (i, p) in line.points().iter().enumerate() {
        if i > 0 {
            arc += p.distance(line.points()[i - 1]);
        }
        if arc > from + 1e-9 {
            pts.push(*p);
        }
    }
}

/// Cuts the point list at arc `at`, ending exactly at that arc.
fn truncate(pts: &mut Vec<Vec2>, at: f64) {
    let mut arc = 0.0;
    for i in 1..pts.len() {
        let seg = pts[i].distance(pts[i - 1]);
        if arc + seg >= at - 1e-9 {
            let t = if seg > 0.0 { ((at - arc) / seg).clamp(0.0, 1.0) } else { 0.0 };
            let cut = pts[i - 1].lerp(pts[i], t);
            pts.truncate(i);
            if cut.distance(pts[i - 1]) > 1e-9 {
                pts.push(cut);
            }
            return;
        }
        arc += seg;
    }
}
