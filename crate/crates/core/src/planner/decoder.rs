//! Kinematic trajectory decoder.
//!
//! A traversal fixes the geometry (its reference path); the latent sample
//! fixes the speed profile. The first latent component biases the
//! acceleration, the second scales the target speed around the route speed.

use super::path::ReferencePath;
use crate::geometry::Vec2;
use crate::rng::{CounterStream, Domain};
use crate::scenario::{Trajectory, DT, HORIZON_STEPS};

pub const ACCEL_GAIN: f64 = 0.4;
pub const SPEED_SPREAD: f64 = 0.15;
/// Rate at which speed relaxes toward the target (1/s).
pub const SPEED_RELAXATION: f64 = 0.5;
pub const MAX_ACCEL: f64 = 2.0;
pub const MAX_DECEL: f64 = 3.0;
const SUBSTEPS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LatentSample {
    pub z: [f64; 2],
}

impl LatentSample {
    /// Standard-normal draw for sample `index`.
    pub fn draw(seed: u64, index: usize) -> Self {
        let mut s = CounterStream::new(seed, Domain::Latent, index as u64);
        Self { z: [s.next_normal(), s.next_normal()] }
    }

    pub fn zero() -> Self {
        Self { z: [0.0, 0.0] }
    }

    pub fn accel_bias(&self) -> f64 {
        (ACCEL_GAIN * self.z[0]).clamp(-MAX_DECEL, MAX_ACCEL)
    }

    pub fn target_speed(&self, route_speed: f64) -> f64 {
        (route_speed * (1.0 + SPEED_SPREAD * self.z[1])).max(0.0)
    }
}

/// Arc positions at each waypoint time. The SDV never leaves its reference
/// path: near the end it brakes at [`MAX_DECEL`] and stops there, whether the
/// traversal terminated or was cut at the node limit.
pub fn speed_profile(path_length: f64, v0: f64, route_speed: f64, z: &LatentSample) -> Vec<f64> {
    let a_bias = z.accel_bias();
    let v_target = z.target_speed(route_speed);
    let h = DT / SUBSTEPS as f64;
    let length = path_length.max(0.0);
    let stop_speed = |s: f64| (2.0 * MAX_DECEL * (length - s).max(0.0)).sqrt();
    let mut v = v0.max(0.0).min(stop_speed(0.0));
    let mut s: f64 = 0.0;
    let mut out = Vec::with_capacity(HORIZON_STEPS);
    for _ in 0..HORIZON_STEPS {
        for _ in 0..SUBSTEPS {
            let a = (a_bias + SPEED_RELAXATION * (v_target - v)).clamp(-MAX_DECEL, MAX_ACCEL);
            let next = (v + a * h).max(0.0).min(stop_speed(s));
            s = (s + 0.5 * (v + next) * h).min(length);
            v = next;
        }
        out.push(s);
    }
    out
}

pub fn decode_trajectory(path: &ReferencePath, v0: f64, route_speed: f64, z: &LatentSample) -> Trajectory {
    let waypoints: Vec<Vec2> = speed_profile(path.length(), v0, route_speed, z)
        .into_iter()
        .map(|s| path.point_at(s))
        .collect();
    Trajectory::new(waypoints)
}
