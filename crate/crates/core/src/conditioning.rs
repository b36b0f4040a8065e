//! Goal conditioning of an edge distribution by a route mask.

use crate::error::{Error, Result};
use crate::lane_graph::RouteMask;
use crate::policy::{hard_mask_row, soft_mask_row, EdgeDistribution};

/// Additive probability bonus for on-route edges.
#[derive(Clone, Copy, Debug, Default, PartialEq, PartialOrd)]
pub struct Beta(f64);

impl Beta {
    pub fn new(value: f64) -> Result<Self> {
        if value.is_finite() && value >= 0.0 {
            Ok(Self(value))
        } else {
            Err(Error::Config(format!("beta must be finite and non-negative, got {value}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

fn map_rows(dist: &EdgeDistribution, route: &RouteMask, f: impl Fn(&[f64], &[bool]) -> Vec<f64>) -> EdgeDistribution {
    let rows = dist
        .rows()
        .iter()
        .map(|row| {
            let probs: Vec<f64> = row.iter().map(|(_, p)| *p).collect();
            let allowed: Vec<bool> = row.iter().map(|(e, _)| route.allows(e)).collect();
            row.iter().map(|(e, _)| *e).zip(f(&probs, &allowed)).collect()
        })
        .collect();
    EdgeDistribution::from_rows(rows)
}

/// Adds `beta` to every on-route edge probability (terminal edges included)
/// and renormalizes each node.
pub fn soft_mask(dist: &EdgeDistribution, route: &RouteMask, beta: Beta) -> EdgeDistribution {
    map_rows(dist, route, |p, a| soft_mask_row(p, a, beta.value()))
}

/// Zeroes off-route edges and renormalizes each node. A node whose remaining
/// mass is zero puts all of it on its terminal edge.
pub fn hard_mask(dist: &EdgeDistribution, route: &RouteMask) -> EdgeDistribution {
    map_rows(dist, route, hard_mask_row)
}
