//! k-means over decoded trajectories.

use crate::geometry::Vec2;
use crate::rng::{uniform_at, Domain};
use crate::scenario::Trajectory;

pub const DEFAULT_NUM_MODES: usize = 10;
const MAX_ITERATIONS: usize = 100;
const SHIFT_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct PlanMode {
    pub trajectory: Trajectory,
    pub probability: f64,
    pub rank: usize,
    /// Index of the centroid this mode came from, used for tie-breaks.
    pub centroid: usize,
    pub members: usize,
}

/// Modes ordered by rank (rank 1 first).
#[derive(Clone, Debug, PartialEq)]
pub struct PlanSet {
    pub modes: Vec<PlanMode>,
}

impl PlanSet {
    pub fn best(&self) -> &PlanMode {
        &self.modes[0]
    }
}

fn flatten(t: &Trajectory) -> Vec<f64> {
    t.waypoints.iter().flat_map(|p| [p.x, p.y]).collect()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid; ties go to the lower index.
fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, c) in centroids.iter().enumerate() {
        let d = sq_dist(point, c);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

/// Farthest-point initialization from a seeded first pick. Stops early when
/// every point coincides with a chosen centroid.
fn init_centroids(points: &[Vec<f64>], k: usize, seed: u64) -> Vec<Vec<f64>> {
    let first = ((uniform_at(seed, Domain::Cluster, 0, 0) * points.len() as f64) as usize).min(points.len() - 1);
    let mut centroids = vec![points[first].clone()];
    let mut min_d: Vec<f64> = points.iter().map(|p| sq_dist(p, &points[first])).collect();
    while centroids.len() < k {
        let (far, d) = min_d
            .iter()
            .enumerate()
            .fold((0, -1.0), |(bi, bd), (i, &d)| if d > bd { (i, d) } else { (bi, bd) });
        if d <= 0.0 {
            break;
        }
        centroids.push(points[far].clone());
        for (m, p) in min_d.iter_mut().zip(points) {
            *m = m.min(sq_dist(p, &points[far]));
        }
    }
    centroids
}

pub fn cluster_plans(trajectories: &[Trajectory], num_modes: usize, seed: u64) -> PlanSet {
    assert!(!trajectories.is_empty() && num_modes >= 1, "clustering needs trajectories and at least one mode");
    let points: Vec<Vec<f64>> = trajectories.iter().map(flatten).collect();
    let dim = points[0].len();
    let mut centroids = init_centroids(&points, num_modes, seed);
    let mut assignment: Vec<usize> = points.iter().map(|p| nearest(p, &centroids)).collect();
    for _ in 0..MAX_ITERATIONS {
        let mut sums = vec![vec![0.0; dim]; centroids.len()];
        let mut counts = vec![0usize; centroids.len()];
        for (p, &a) in points.iter().zip(&assignment) {
            counts[a] += 1;
            for (s, x) in sums[a].iter_mut().zip(p) {
                *s += x;
            }
        }
        let mut shift: f64 = 0.0;
        for ((c, s), &n) in centroids.iter_mut().zip(&sums).zip(&counts) {
            if n == 0 {
                continue;
            }
            let mean: Vec<f64> = s.iter().map(|v| v / n as f64).collect();
            shift = shift.max(sq_dist(c, &mean).sqrt());
            *c = mean;
        }
        assignment = points.iter().map(|p| nearest(p, &centroids)).collect();
        if shift < SHIFT_TOLERANCE {
            break;
        }
    }

    let mut counts = vec![0usize; centroids.len()];
    for &a in &assignment {
        counts[a] += 1;
    }
    let total = points.len() as f64;
    let mut order: Vec<usize> = (0..centroids.len()).filter(|&i| counts[i] > 0).collect();
    order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
    let modes = order
        .into_iter()
        .enumerate()
        .map(|(r, i)| PlanMode {
            trajectory: Trajectory::new(centroids[i].chunks(2).map(|c| Vec2::new(c[0], c[1])).collect()),
            probability: counts[i] as f64 / total,
            rank: r + 1,
            centroid: i,
            members: counts[i],
        })
        .collect();
    PlanSet { modes }
}
