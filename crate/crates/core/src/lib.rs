//! Route-conditioned lane-graph traversal planning.
//!
//! A learned edge scorer turns a lane graph into per-node transition
//! probabilities; traversals are sampled from them, decoded into
//! trajectories and clustered into plan modes. Masking the transitions with
//! the route to a goal turns the predictor into a planner. The crate also
//! carries a synthetic scenario generator, an IDM/MOBIL baseline and an
//! open- and closed-loop evaluation harness.

pub mod baselines;
pub mod cli;
pub mod conditioning;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod lane_graph;
pub mod planner;
pub mod policy;
pub mod rng;
pub mod scenario;
pub mod traversal;

pub use error::{Error, Result};
