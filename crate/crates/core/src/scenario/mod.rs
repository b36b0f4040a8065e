//! Scenario data model: map, agents, SDV history, route and expert future.

mod format;
mod generator;
mod labels;

pub use format::{load_scenarios, parse_scenarios, save_scenarios, scenarios_to_string, FORMAT_VERSION};
pub use generator::{generate_intersections, GeneratorConfig, ScenarioType};
pub use labels::{check_route_consistency, expert_traversal, LABEL_MAX_DISTANCE};

use crate::error::Result;
use crate::geometry::Vec2;
use crate::lane_graph::{compute_route_mask, GraphParams, LaneGraph, NodeId, Pose, RawLane, RouteMask};

/// Sampling period shared by histories, playback and plans.
pub const DT: f64 = 0.5;
/// States in a history window covering [-2 s, 0].
pub const HISTORY_STEPS: usize = 5;
/// Waypoints in a plan (8 s).
pub const HORIZON_STEPS: usize = 16;
/// Playback states after t = 0 (15 s).
pub const SIM_STEPS: usize = 30;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AgentState {
    pub x: f64,
    pub y: f64,
    pub v: f64,
    pub a: f64,
    pub omega: f64,
    pub heading: f64,
}

impl AgentState {
    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn pose(&self) -> Pose {
        Pose::new(self.x, self.y, self.heading)
    }

    pub fn is_valid(&self) -> bool {
        [self.x, self.y, self.v, self.a, self.omega, self.heading].iter().all(|v| v.is_finite()) && self.v >= 0.0
    }

    pub(crate) fn to_array(self) -> [f64; 6] {
        [self.x, self.y, self.v, self.a, self.omega, self.heading]
    }

    pub(crate) fn from_array(a: [f64; 6]) -> Self {
        Self { x: a[0], y: a[1], v: a[2], a: a[3], omega: a[4], heading: a[5] }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentClass {
    Vehicle,
    Pedestrian,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Footprint {
    pub length: f64,
    pub width: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AgentTrack {
    pub agent_id: u32,
    pub class: AgentClass,
    pub history: Vec<AgentState>,
    pub future_playback: Vec<AgentState>,
    pub footprint: Footprint,
}

impl AgentTrack {
    /// State at simulation step `step` (0 = now, k = k·dt later).
    pub fn state_at(&self, step: usize) -> Option<&AgentState> {
        if step == 0 {
            self.history.last()
        } else {
            self.future_playback.get(step - 1)
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub waypoints: Vec<Vec2>,
    pub dt: f64,
}

impl Trajectory {
    pub fn new(waypoints: Vec<Vec2>) -> Self {
        Self { waypoints, dt: DT }
    }

    pub fn len(&self) -> usize {
        self.waypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waypoints.is_empty()
    }

    pub fn last(&self) -> Vec2 {
        *self.waypoints.last().expect("trajectory has waypoints")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioRecord {
    pub scenario_id: String,
    pub scenario_type: String,
    pub lanes: Vec<RawLane>,
    pub graph_params: GraphParams,
    pub speed_limit: f64,
    pub graph: LaneGraph,
    pub drivable_area: Vec<Vec<Vec2>>,
    pub agents: Vec<AgentTrack>,
    pub sdv_history: Vec<AgentState>,
    pub sdv_footprint: Footprint,
    pub start_node: NodeId,
    pub goal_node: NodeId,
    /// Nodes whose on-route label is flipped, modelling annotation errors.
    pub mislabeled_nodes: Vec<NodeId>,
    pub expert_future: Trajectory,
    /// Logged SDV states over (0, 15 s], used for replay and progress.
    pub expert_log: Vec<AgentState>,
}

impl ScenarioRecord {
    pub fn sdv_state(&self) -> &AgentState {
        self.sdv_history.last().expect("validated history is nonempty")
    }

    /// Logged SDV state at simulation step `step`.
    pub fn expert_state_at(&self, step: usize) -> Option<&AgentState> {
        if step == 0 {
            self.sdv_history.last()
        } else {
            self.expert_log.get(step - 1)
        }
    }

    /// Labelled route mask as seen from `start`, including any label errors.
    pub fn route_mask_from(&self, start: NodeId) -> Result<RouteMask> {
        let mask = compute_route_mask(&self.graph, start, self.goal_node)?;
        if self.mislabeled_nodes.is_empty() {
            Ok(mask)
        } else {
            Ok(mask.with_flipped(&self.graph, &self.mislabeled_nodes))
        }
    }

    pub fn route_mask(&self) -> Result<RouteMask> {
        self.route_mask_from(self.start_node)
    }

    /// Positions of the full logged expert drive, starting at t = 0.
    pub fn expert_path(&self) -> Vec<Vec2> {
        std::iter::once(self.sdv_state().position())
            .chain(self.expert_log.iter().map(AgentState::position))
            .collect()
    }
}
