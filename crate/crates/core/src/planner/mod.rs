//! Plan generation: traversal sampling, decoding, clustering and selection.

mod cluster;
mod decoder;
mod path;

pub use cluster::{cluster_plans, PlanMode, PlanSet, DEFAULT_NUM_MODES};
pub use decoder::{decode_trajectory, speed_profile, LatentSample};
pub use path::{extrapolated_point, ReferencePath, BLEND_LENGTH};

use std::collections::HashMap;

use rayon::prelude::*;

use crate::conditioning::{hard_mask, soft_mask, Beta};
use crate::error::{Error, Result};
use crate::lane_graph::{LaneGraph, NodeId, RouteMask};
use crate::policy::{EdgeDistribution, ScorerModel, SdvContext, TrainingMode};
use crate::scenario::{AgentState, ScenarioRecord, Trajectory};
use crate::traversal::{sample_traversals, SamplerConfig, Traversal, DEFAULT_MAX_NODES, DEFAULT_SAMPLES};

/// Endpoint distance to the route under which a mode counts as on-route.
pub const ON_ROUTE_RADIUS: f64 = 5.0;

pub fn select_plan(plans: &PlanSet) -> &Trajectory {
    &plans.best().trajectory
}

/// Distance from `p` to the nearest on-route node polyline.
pub fn distance_to_route(graph: &LaneGraph, route: &RouteMask, p: crate::geometry::Vec2) -> f64 {
    route
        .on_route_nodes
        .iter()
        .map(|&v| graph.node(v).polyline().project(p).distance)
        .fold(f64::INFINITY, f64::min)
}

/// Most probable mode ending near the route, or the mode ending closest to it.
pub fn filter_on_route<'a>(plans: &'a PlanSet, graph: &LaneGraph, route: &RouteMask) -> &'a Trajectory {
    let dists: Vec<f64> = plans.modes.iter().map(|m| distance_to_route(graph, route, m.trajectory.last())).collect();
    if let Some(i) = dists.iter().position(|d| *d <= ON_ROUTE_RADIUS) {
        return &plans.modes[i].trajectory;
    }
    let mut best = 0;
    for (i, d) in dists.iter().enumerate() {
        if *d < dists[best] {
            best = i;
        }
    }
    &plans.modes[best].trajectory
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, clap::ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum PlannerKind {
    Pgp,
    GcPgp,
    SoftMask,
    HardMaskTrained,
    NodeFeatures,
    FilterOnRoute,
}

impl PlannerKind {
    pub const ALL: [PlannerKind; 6] = [
        PlannerKind::Pgp,
        PlannerKind::GcPgp,
        PlannerKind::SoftMask,
        PlannerKind::HardMaskTrained,
        PlannerKind::NodeFeatures,
        PlannerKind::FilterOnRoute,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PlannerKind::Pgp => "pgp",
            PlannerKind::GcPgp => "gc_pgp",
            PlannerKind::SoftMask => "soft_mask",
            PlannerKind::HardMaskTrained => "hard_mask_trained",
            PlannerKind::NodeFeatures => "node_features",
            PlannerKind::FilterOnRoute => "filter_on_route",
        }
    }

    /// Training mode of the scorer this planner expects.
    pub fn required_mode(self) -> TrainingMode {
        match self {
            PlannerKind::Pgp | PlannerKind::GcPgp | PlannerKind::FilterOnRoute => TrainingMode::Unconditioned,
            PlannerKind::SoftMask => TrainingMode::SoftMask,
            PlannerKind::HardMaskTrained => TrainingMode::HardMaskAtTrain,
            PlannerKind::NodeFeatures => TrainingMode::NodeFeatures,
        }
    }

    pub fn check_model(self, model: &ScorerModel) -> Result<()> {
        if model.mode == self.required_mode() {
            Ok(())
        } else {
            Err(Error::IncompatibleModel { model: model.mode.to_string(), planner: self.as_str().into() })
        }
    }
}

impl std::fmt::Display for PlannerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlannerConfig {
    pub samples: usize,
    pub max_nodes: usize,
    pub num_modes: usize,
    pub seed: u64,
    /// Overrides the soft-mask bonus stored in the model.
    pub beta: Option<Beta>,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self { samples: DEFAULT_SAMPLES, max_nodes: DEFAULT_MAX_NODES, num_modes: DEFAULT_NUM_MODES, seed: 0, beta: None }
    }
}

/// Everything produced by one planning call.
#[derive(Clone, Debug)]
pub struct PlanOutput {
    pub start_node: NodeId,
    /// `None` when the goal is unreachable from the current node.
    pub route: Option<RouteMask>,
    pub distribution: EdgeDistribution,
    pub traversals: Vec<Traversal>,
    pub candidates: Vec<Trajectory>,
    pub plans: PlanSet,
    pub selected: Trajectory,
}

/// Edge distribution used by `kind`, after any conditioning.
pub fn planning_distribution(
    graph: &LaneGraph,
    model: &ScorerModel,
    kind: PlannerKind,
    ctx: &SdvContext,
    route: Option<&RouteMask>,
    beta: Option<Beta>,
) -> EdgeDistribution {
    let base = model.distribution(graph, ctx, route.or(Some(&RouteMask::from_nodes(graph, Default::default()))));
    let Some(route) = route else { return base };
    match kind {
        PlannerKind::GcPgp | PlannerKind::HardMaskTrained => hard_mask(&base, route),
        PlannerKind::SoftMask => soft_mask(&base, route, beta.or(model.beta).unwrap_or_default()),
        PlannerKind::Pgp | PlannerKind::NodeFeatures | PlannerKind::FilterOnRoute => base,
    }
}

/// Samples, decodes and clusters plans for an SDV in `state`.
pub fn plan_from_state(
    record: &ScenarioRecord,
    model: &ScorerModel,
    kind: PlannerKind,
    cfg: &PlannerConfig,
    state: &AgentState,
) -> Result<PlanOutput> {
    kind.check_model(model)?;
    let graph = &record.graph;
    let ctx = SdvContext::new(graph, state);
    let route = match record.route_mask_from(ctx.node) {
        Ok(r) => Some(r),
        Err(Error::EmptyRoute { .. }) => None,
        Err(e) => return Err(e),
    };
    let distribution = planning_distribution(graph, model, kind, &ctx, route.as_ref(), cfg.beta);
    let sampler = SamplerConfig { samples: cfg.samples, max_nodes: cfg.max_nodes, seed: cfg.seed };
    let traversals = sample_traversals(&distribution, ctx.node, &sampler);

    let mut paths: HashMap<&[NodeId], ReferencePath> = HashMap::new();
    for t in &traversals {
        paths
            .entry(t.nodes.as_slice())
            .or_insert_with(|| ReferencePath::from_nodes(graph, &t.nodes, state.position()));
    }
    let candidates: Vec<Trajectory> = traversals
        .par_iter()
        .enumerate()
        .map(|(k, t)| {
            let z = LatentSample::draw(cfg.seed, k);
            decode_trajectory(&paths[t.nodes.as_slice()], state.v, record.speed_limit, &z)
        })
        .collect();
    let plans = cluster_plans(&candidates, cfg.num_modes, cfg.seed);
    let selected = match (kind, &route) {
        (PlannerKind::FilterOnRoute, Some(r)) => filter_on_route(&plans, graph, r).clone(),
        _ => select_plan(&plans).clone(),
    };
    Ok(PlanOutput { start_node: ctx.node, route, distribution, traversals, candidates, plans, selected })
}

/// Plan at t = 0 from the logged SDV state.
pub fn plan(record: &ScenarioRecord, model: &ScorerModel, kind: PlannerKind, cfg: &PlannerConfig) -> Result<Trajectory> {
    Ok(plan_from_state(record, model, kind, cfg, record.sdv_state())?.selected)
}
