use std::path::PathBuf;

use thiserror::Error;

use crate::lane_graph::NodeId;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("lane {lane} references unknown lane {reference}")]
    DanglingLane { lane: u32, reference: u32 },

    #[error("lane {lane} has fewer than 2 points")]
    DegenerateLane { lane: u32 },

    #[error("successor lane {to} starts {gap:.3} m away from the end of lane {from}")]
    SuccessorGap { from: u32, to: u32, gap: f64 },

    #[error("invalid graph construction parameter: {0}")]
    GraphParam(String),

    #[error("invalid edge between nodes {from} and {to}: {reason}")]
    InvalidEdge { from: usize, to: usize, reason: &'static str },

    #[error("node {0} does not exist in the lane graph")]
    UnknownNode(NodeId),

    #[error("goal node {goal} is unreachable from start node {start}")]
    EmptyRoute { start: NodeId, goal: NodeId },

    #[error("schema violation at {path}: {message}")]
    Schema { path: String, message: String },

    #[error("scenario {index} violates invariant `{invariant}`: {detail}")]
    Invariant { index: usize, invariant: &'static str, detail: String },

    #[error("cannot label scenario {scenario_id}: {reason}")]
    Labeling { scenario_id: String, reason: String },

    #[error("training set is empty")]
    EmptyTrainingSet,

    #[error("model mode `{model}` cannot drive planner `{planner}`")]
    IncompatibleModel { model: String, planner: String },

    #[error("invalid model file: {0}")]
    ModelFormat(String),

    #[error("traversal enumeration exceeded {limit} traversals")]
    EnumerationGuard { limit: usize },

    #[error("trajectory horizons differ: {left} vs {right} waypoints")]
    HorizonMismatch { left: usize, right: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
