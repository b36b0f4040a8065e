//! Per-scenario metrics.

use crate::error::{Error, Result};
use crate::geometry::{point_in_polygon, Polyline, Vec2};
use crate::scenario::Trajectory;

use super::OrientedBox;

/// Final-waypoint error above which a plan counts as a miss.
pub const MISS_THRESHOLD: f64 = 16.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OpenLoopMetrics {
    pub ade: f64,
    pub fde: f64,
    pub miss: bool,
    /// Mean endpoint instability over the replanning sweep.
    pub tpi_mean: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClosedLoopMetrics {
    pub progress: f64,
    pub drivable_compliance: f64,
    pub collision_free: bool,
    pub tpi_mean: f64,
    pub score: f64,
}

impl ClosedLoopMetrics {
    pub fn new(progress: f64, drivable_compliance: f64, collision_free: bool, tpi_mean: f64) -> Self {
        let gate = if collision_free { 1.0 } else { 0.0 };
        Self { progress, drivable_compliance, collision_free, tpi_mean, score: gate * 0.5 * (progress + drivable_compliance) }
    }
}

pub fn ade_fde(plan: &Trajectory, expert: &Trajectory) -> Result<(f64, f64)> {
    if plan.len() != expert.len() || plan.is_empty() || plan.dt != expert.dt {
        return Err(Error::HorizonMismatch { left: plan.len(), right: expert.len() });
    }
    let d: Vec<f64> = plan.waypoints.iter().zip(&expert.waypoints).map(|(a, b)| a.distance(*b)).collect();
    Ok((d.iter().sum::<f64>() / d.len() as f64, d[d.len() - 1]))
}

pub fn miss(plan: &Trajectory, expert: &Trajectory) -> Result<bool> {
    Ok(ade_fde(plan, expert)?.1 > MISS_THRESHOLD)
}

/// Distance between the last waypoint of one plan and the waypoint of the
/// next plan (made one step later) at the same absolute time.
pub fn tpi(plan: &Trajectory, next: &Trajectory) -> f64 {
    let n = plan.len();
    plan.waypoints[n - 1].distance(next.waypoints[n - 2])
}

/// Running progress along `expert_path` for each position, with the
/// projection never moving backwards along the path.
pub fn progress_series(positions: &[Vec2], expert_path: &Polyline) -> Vec<f64> {
    let total = expert_path.length();
    if expert_path.len() < 2 || total <= 0.0 {
        return vec![1.0; positions.len()];
    }
    let mut segment = 0;
    let mut best: f64 = 0.0;
    positions
        .iter()
        .map(|p| {
            let proj = expert_path.project_from(*p, segment);
            segment = proj.segment;
            best = best.max(proj.arc.clamp(0.0, total) / total);
            best
        })
        .collect()
}

pub fn progress(positions: &[Vec2], expert_path: &Polyline) -> f64 {
    progress_series(positions, expert_path).last().copied().unwrap_or(0.0)
}

pub fn box_on_drivable(b: &OrientedBox, drivable_area: &[Vec<Vec2>]) -> bool {
    b.corners()
        .into_iter()
        .chain(std::iter::once(b.center))
        .all(|p| drivable_area.iter().any(|poly| point_in_polygon(p, poly)))
}

pub fn drivable_compliance(boxes: &[OrientedBox], drivable_area: &[Vec<Vec2>]) -> f64 {
    if boxes.is_empty() {
        return 1.0;
    }
    boxes.iter().filter(|b| box_on_drivable(b, drivable_area)).count() as f64 / boxes.len() as f64
}
