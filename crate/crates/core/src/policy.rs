//! Edge scoring and the traversal policy.
//!
//! Each outgoing edge gets a small geometric feature vector relative to the
//! SDV; a two-layer MLP maps it to a score and a per-node softmax turns the
//! scores into transition probabilities. Training is behaviour cloning on
//! expert traversals with plain minibatch gradient descent.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::conditioning::{hard_mask, soft_mask, Beta};
use crate::error::{Error, Result};
use crate::lane_graph::{assign_sdv_node, Edge, EdgeKind, LaneGraph, NodeId, RouteMask};
use crate::rng::{CounterStream, Domain};
use crate::scenario::{expert_traversal, AgentState, ScenarioRecord};

pub const FEATURE_COUNT: usize = 8;
pub const HIDDEN_UNITS: usize = 16;
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Longitudinal gaps are clamped to this range (metres).
pub const GAP_RANGE: (f64, f64) = (-50.0, 200.0);
/// Probability floor inside the log of the training loss.
pub const PROB_FLOOR: f64 = 1e-6;
const INIT_RANGE: f64 = 0.1;

/// Geometric description of one outgoing edge, as seen from the SDV.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EdgeFeature {
    pub heading_alignment: f64,
    pub lateral_offset: f64,
    pub longitudinal_gap: f64,
    pub edge_kind: [f64; 3],
    pub sdv_speed: f64,
    pub target_curvature: f64,
    /// Present only for the node-features ablation.
    pub on_route: Option<f64>,
}

impl EdgeFeature {
    pub fn len(&self) -> usize {
        FEATURE_COUNT + usize::from(self.on_route.is_some())
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Raw feature values in declaration order.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = vec![self.heading_alignment, self.lateral_offset, self.longitudinal_gap];
        v.extend_from_slice(&self.edge_kind);
        v.push(self.sdv_speed);
        v.push(self.target_curvature);
        v.extend(self.on_route);
        v
    }

    /// Network input: the raw values brought to roughly unit scale.
    pub fn to_input(&self) -> Vec<f64> {
        let mut v = vec![
            self.heading_alignment,
            self.lateral_offset / 10.0,
            self.longitudinal_gap / 50.0,
        ];
        v.extend_from_slice(&self.edge_kind);
        v.push(self.sdv_speed / 10.0);
        v.push(self.target_curvature * 10.0);
        v.extend(self.on_route);
        v
    }
}

/// Per-plan SDV data shared by all edge features: its node and the arc
/// distance from its projection to the start of every node.
#[derive(Clone, Debug)]
pub struct SdvContext {
    pub state: AgentState,
    pub node: NodeId,
    distances: Vec<f64>,
}

impl SdvContext {
    pub fn new(graph: &LaneGraph, state: &AgentState) -> Self {
        let node = assign_sdv_node(graph, &state.pose());
        Self::at_node(graph, state, node)
    }

    /// Context with the SDV pinned to `node`.
    pub fn at_node(graph: &LaneGraph, state: &AgentState, node: NodeId) -> Self {
        let arc = graph.node(node).polyline().project(state.position()).arc;
        let (distances, _) = graph.distances_from(node, arc, 0.0);
        Self { state: *state, node, distances }
    }

    /// Arc distance from the SDV to the first point of `node`.
    pub fn distance_to(&self, node: NodeId) -> f64 {
        self.distances[node]
    }
}

pub fn edge_features(graph: &LaneGraph, ctx: &SdvContext, edge: &Edge, route: Option<&RouteMask>) -> EdgeFeature {
    let sdv = &ctx.state;
    let clamp_gap = |g: f64| if g.is_finite() { g.clamp(GAP_RANGE.0, GAP_RANGE.1) } else { GAP_RANGE.1 };
    let on_route = route.map(|r| match edge.to {
        None => 1.0,
        Some(v) => f64::from(u8::from(r.contains_node(v))),
    });
    let mut edge_kind = [0.0; 3];
    edge_kind[edge.kind.index()] = 1.0;
    match edge.to {
        None => {
            let from = graph.node(edge.from);
            EdgeFeature {
                heading_alignment: (sdv.heading - from.end_heading()).cos(),
                lateral_offset: 0.0,
                longitudinal_gap: clamp_gap(ctx.distance_to(edge.from) + from.arc_length),
                edge_kind,
                sdv_speed: sdv.v,
                target_curvature: 0.0,
                on_route,
            }
        }
        Some(v) => {
            let target = graph.node(v);
            EdgeFeature {
                heading_alignment: (sdv.heading - target.end_heading()).cos(),
                lateral_offset: target.polyline().project(sdv.position()).signed_lateral,
                longitudinal_gap: clamp_gap(ctx.distance_to(v)),
                edge_kind,
                sdv_speed: sdv.v,
                target_curvature: target.polyline().mean_curvature(),
                on_route,
            }
        }
    }
}

/// Two affine layers with a ReLU in between.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScorerParams {
    pub w1: Vec<Vec<f64>>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

impl ScorerParams {
    pub fn zeros(input_dim: usize) -> Self {
        Self {
            w1: vec![vec![0.0; input_dim]; HIDDEN_UNITS],
            b1: vec![0.0; HIDDEN_UNITS],
            w2: vec![0.0; HIDDEN_UNITS],
            b2: 0.0,
        }
    }

    /// Seeded initialization, every weight uniform in [-0.1, 0.1].
    pub fn init(input_dim: usize, seed: u64) -> Self {
        let mut stream = CounterStream::new(seed, Domain::Init, input_dim as u64);
        let mut draw = || (2.0 * stream.next_uniform() - 1.0) * INIT_RANGE;
        let mut p = Self::zeros(input_dim);
        for row in &mut p.w1 {
            for w in row.iter_mut() {
                *w = draw();
            }
        }
        for b in &mut p.b1 {
            *b = draw();
        }
        for w in &mut p.w2 {
            *w = draw();
        }
        p.b2 = draw();
        p
    }

    pub fn input_dim(&self) -> usize {
        self.w1.first().map_or(0, Vec::len)
    }

    pub fn param_count(&self) -> usize {
        HIDDEN_UNITS * self.input_dim() + 2 * HIDDEN_UNITS + 1
    }

    pub fn is_finite(&self) -> bool {
        self.to_flat().iter().all(|v| v.is_finite())
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.w1.iter().flatten().copied().collect();
        v.extend(&self.b1);
        v.extend(&self.w2);
        v.push(self.b2);
        v
    }

    pub fn from_flat(input_dim: usize, flat: &[f64]) -> Self {
        let mut it = flat.iter().copied();
        let mut p = Self::zeros(input_dim);
        for row in &mut p.w1 {
            for w in row.iter_mut() {
                *w = it.next().expect("flat parameter vector too short");
            }
        }
        for b in &mut p.b1 {
            *b = it.next().expect("flat parameter vector too short");
        }
        for w in &mut p.w2 {
            *w = it.next().expect("flat parameter vector too short");
        }
        p.b2 = it.next().expect("flat parameter vector too short");
        p
    }

    pub fn score(&self, input: &[f64]) -> f64 {
        let mut s = self.b2;
        for ((row, b), w) in self.w1.iter().zip(&self.b1).zip(&self.w2) {
            let h = row.iter().zip(input).map(|(a, x)| a * x).sum::<f64>() + b;
            if h > 0.0 {
                s += w * h;
            }
        }
        s
    }

    /// Adds `upstream · ∂score/∂params` at `input` into `grad` (flat layout).
    fn accumulate_grad(&self, input: &[f64], upstream: f64, grad: &mut [f64]) {
        let d = self.input_dim();
        let b1_at = HIDDEN_UNITS * d;
        let w2_at = b1_at + HIDDEN_UNITS;
        for (j, (row, b)) in self.w1.iter().zip(&self.b1).enumerate() {
            let h = row.iter().zip(input).map(|(a, x)| a * x).sum::<f64>() + b;
            if h > 0.0 {
                grad[w2_at + j] += upstream * h;
                let back = upstream * self.w2[j];
                for (k, x) in input.iter().enumerate() {
                    grad[j * d + k] += back * x;
                }
                grad[b1_at + j] += back;
            }
        }
        grad[w2_at + HIDDEN_UNITS] += upstream;
    }
}

/// Raw scores, per node, aligned with the graph's outgoing edge order.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeScores {
    pub per_node: Vec<Vec<(Edge, f64)>>,
}

pub fn score_edges(params: &ScorerParams, graph: &LaneGraph, ctx: &SdvContext, route: Option<&RouteMask>) -> EdgeScores {
    let per_node = (0..graph.len())
        .map(|u| {
            graph
                .out_edges(u)
                .iter()
                .map(|e| (*e, params.score(&edge_features(graph, ctx, e, route).to_input())))
                .collect()
        })
        .collect();
    EdgeScores { per_node }
}

/// Per-node categorical distribution over outgoing edges.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeDistribution {
    per_node: Vec<Vec<(Edge, f64)>>,
}

impl EdgeDistribution {
    /// Wraps explicit probabilities. Rows must already be normalized.
    pub fn from_rows(per_node: Vec<Vec<(Edge, f64)>>) -> Self {
        Self { per_node }
    }

    /// Explicit probabilities aligned with `graph.out_edges(u)`.
    pub fn from_probs(graph: &LaneGraph, probs: &[Vec<f64>]) -> Self {
        let per_node = (0..graph.len())
            .map(|u| graph.out_edges(u).iter().copied().zip(probs[u].iter().copied()).collect())
            .collect();
        Self { per_node }
    }

    pub fn node(&self, u: NodeId) -> &[(Edge, f64)] {
        &self.per_node[u]
    }

    pub fn rows(&self) -> &[Vec<(Edge, f64)>] {
        &self.per_node
    }

    pub fn len(&self) -> usize {
        self.per_node.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_node.is_empty()
    }

    pub fn prob(&self, u: NodeId, to: Option<NodeId>) -> f64 {
        self.per_node[u].iter().find(|(e, _)| e.to == to).map_or(0.0, |(_, p)| *p)
    }

    /// Probability mass on edges the route allows.
    pub fn on_route_mass(&self, u: NodeId, route: &RouteMask) -> f64 {
        self.per_node[u].iter().filter(|(e, _)| route.allows(e)).map(|(_, p)| p).sum()
    }
}

fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exp.iter().sum();
    exp.iter().map(|e| e / total).collect()
}

pub fn softmax_per_node(scores: &EdgeScores) -> EdgeDistribution {
    let per_node = scores
        .per_node
        .iter()
        .map(|row| {
            let s: Vec<f64> = row.iter().map(|(_, s)| *s).collect();
            row.iter().map(|(e, _)| *e).zip(softmax(&s)).collect()
        })
        .collect();
    EdgeDistribution { per_node }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum TrainingMode {
    Unconditioned,
    HardMaskAtTrain,
    NodeFeatures,
    SoftMask,
}

impl TrainingMode {
    pub fn as_str(self) -> &'static str {
        match self {
            TrainingMode::Unconditioned => "unconditioned",
            TrainingMode::HardMaskAtTrain => "hard_mask_at_train",
            TrainingMode::NodeFeatures => "node_features",
            TrainingMode::SoftMask => "soft_mask",
        }
    }

    pub fn input_dim(self) -> usize {
        match self {
            TrainingMode::NodeFeatures => FEATURE_COUNT + 1,
            _ => FEATURE_COUNT,
        }
    }

    fn uses_route_features(self) -> bool {
        self == TrainingMode::NodeFeatures
    }
}

impl std::fmt::Display for TrainingMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A trained scorer together with the mode it was trained in.
#[derive(Clone, Debug, PartialEq)]
pub struct ScorerModel {
    pub mode: TrainingMode,
    pub params: ScorerParams,
    /// Soft-mask bonus; present only in soft-mask mode.
    pub beta: Option<Beta>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc {
    format_version: u32,
    mode: TrainingMode,
    input_dim: usize,
    weights: ScorerParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    beta: Option<f64>,
}

impl ScorerModel {
    pub fn init(mode: TrainingMode, seed: u64) -> Self {
        Self {
            mode,
            params: ScorerParams::init(mode.input_dim(), seed),
            beta: (mode == TrainingMode::SoftMask).then(|| Beta::new(1.0).expect("valid constant")),
        }
    }

    /// Unconditioned edge distribution for an SDV context; in node-features
    /// mode the route supplies the extra input.
    pub fn distribution(&self, graph: &LaneGraph, ctx: &SdvContext, route: Option<&RouteMask>) -> EdgeDistribution {
        let route = if self.mode.uses_route_features() { route } else { None };
        softmax_per_node(&score_edges(&self.params, graph, ctx, route))
    }

    pub fn to_json(&self) -> String {
        let doc = ModelDoc {
            format_version: MODEL_FORMAT_VERSION,
            mode: self.mode,
            input_dim: self.params.input_dim(),
            weights: self.params.clone(),
            beta: self.beta.map(Beta::value),
        };
        let mut s = serde_json::to_string_pretty(&doc).expect("model documents always serialize");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDoc = serde_json::from_str(text).map_err(|e| Error::ModelFormat(e.to_string()))?;
        if doc.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::ModelFormat(format!("unsupported format_version {}", doc.format_version)));
        }
        if doc.input_dim != doc.mode.input_dim() {
            return Err(Error::ModelFormat(format!(
                "mode {} expects input_dim {}, file has {}",
                doc.mode,
                doc.mode.input_dim(),
                doc.input_dim
            )));
        }
        let w = &doc.weights;
        let shapes_ok = w.w1.len() == HIDDEN_UNITS
            && w.w1.iter().all(|r| r.len() == doc.input_dim)
            && w.b1.len() == HIDDEN_UNITS
            && w.w2.len() == HIDDEN_UNITS;
        if !shapes_ok {
            return Err(Error::ModelFormat("weight shapes do not match the scorer layout".into()));
        }
        if !w.is_finite() {
            return Err(Error::ModelFormat("non-finite weight".into()));
        }
        let beta = match (doc.mode, doc.beta) {
            (TrainingMode::SoftMask, Some(b)) => Some(Beta::new(b)?),
            (TrainingMode::SoftMask, None) => return Err(Error::ModelFormat("soft_mask model without beta".into())),
            (_, Some(_)) => return Err(Error::ModelFormat("beta is only valid for soft_mask models".into())),
            (_, None) => None,
        };
        Ok(Self { mode: doc.mode, params: doc.weights, beta })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// One supervised decision: the edges leaving a visited node and the one the
/// expert took.
#[derive(Clone, Debug)]
pub struct NodeExample {
    pub inputs: Vec<Vec<f64>>,
    pub target: usize,
    /// Route membership of each edge under the labelled route.
    pub on_route: Vec<bool>,
}

/// Decision examples for one scenario, or the labeling error that excludes it.
pub fn scenario_examples(record: &ScenarioRecord, mode: TrainingMode) -> Result<Vec<NodeExample>> {
    let traversal = expert_traversal(record)?;
    let route = record.route_mask()?;
    let graph = &record.graph;
    let ctx = SdvContext::at_node(graph, record.sdv_state(), record.start_node);
    let feature_route = mode.uses_route_features().then_some(&route);
    let mut out = Vec::with_capacity(traversal.nodes.len());
    for (i, &u) in traversal.nodes.iter().enumerate() {
        let next = traversal.nodes.get(i + 1).copied();
        if next.is_none() && !traversal.terminated {
            break;
        }
        let edges = graph.out_edges(u);
        let target = edges.iter().position(|e| e.to == next).ok_or_else(|| Error::Labeling {
            scenario_id: record.scenario_id.clone(),
            reason: format!("expert traversal uses a missing edge from node {u}"),
        })?;
        out.push(NodeExample {
            inputs: edges.iter().map(|e| edge_features(graph, &ctx, e, feature_route).to_input()).collect(),
            target,
            on_route: edges.iter().map(|e| route.allows(e)).collect(),
        });
    }
    Ok(out)
}

/// Probabilities for one example under the model's training-time conditioning.
fn example_probs(params: &ScorerParams, mode: TrainingMode, beta: f64, ex: &NodeExample) -> (Vec<f64>, Vec<f64>) {
    let scores: Vec<f64> = ex.inputs.iter().map(|x| params.score(x)).collect();
    let base = softmax(&scores);
    let conditioned = match mode {
        TrainingMode::HardMaskAtTrain => hard_mask_row(&base, &ex.on_route),
        TrainingMode::SoftMask => soft_mask_row(&base, &ex.on_route, beta),
        _ => base.clone(),
    };
    (base, conditioned)
}

pub(crate) fn hard_mask_row(probs: &[f64], allowed: &[bool]) -> Vec<f64> {
    if probs.iter().zip(allowed).all(|(p, a)| *a || *p == 0.0) {
        return probs.to_vec();
    }
    let mass: f64 = probs.iter().zip(allowed).filter(|(_, a)| **a).map(|(p, _)| p).sum();
    if mass > 0.0 {
        probs.iter().zip(allowed).map(|(p, a)| if *a { p / mass } else { 0.0 }).collect()
    } else {
        // only reachable when every allowed edge underflowed; the terminal is last
        let mut out = vec![0.0; probs.len()];
        *out.last_mut().expect("nonempty row") = 1.0;
        out
    }
}

pub(crate) fn soft_mask_row(probs: &[f64], on_route: &[bool], beta: f64) -> Vec<f64> {
    let count = on_route.iter().filter(|r| **r).count() as f64;
    let norm = 1.0 + beta * count;
    probs
        .iter()
        .zip(on_route)
        .map(|(p, r)| if *r { (p + beta) / norm } else { p / norm })
        .collect()
}

fn example_nll(params: &ScorerParams, mode: TrainingMode, beta: f64, ex: &NodeExample) -> f64 {
    let (_, q) = example_probs(params, mode, beta, ex);
    -q[ex.target].max(PROB_FLOOR).ln()
}

/// Mean NLL of the expert edges over all examples.
pub fn mean_nll(params: &ScorerParams, mode: TrainingMode, beta: f64, examples: &[&NodeExample]) -> f64 {
    if examples.is_empty() {
        return 0.0;
    }
    examples.iter().map(|ex| example_nll(params, mode, beta, ex)).sum::<f64>() / examples.len() as f64
}

/// Mean NLL and its gradient. The last entry of the gradient is ∂/∂β, which
/// is zero outside soft-mask mode.
pub fn nll_gradient(params: &ScorerParams, mode: TrainingMode, beta: f64, examples: &[&NodeExample]) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; params.param_count() + 1];
    let mut loss = 0.0;
    for ex in examples {
        let (p, q) = example_probs(params, mode, beta, ex);
        let e = ex.target;
        loss -= q[e].max(PROB_FLOOR).ln();
        if q[e] < PROB_FLOOR {
            continue;
        }
        // ∂L/∂score_j for this example
        let upstream: Vec<f64> = match mode {
            TrainingMode::HardMaskAtTrain => (0..p.len())
                .map(|j| if ex.on_route[j] { q[j] - f64::from(u8::from(j == e)) } else { 0.0 })
                .collect(),
            TrainingMode::SoftMask => {
                let r_e = f64::from(u8::from(ex.on_route[e]));
                let denom = p[e] + beta * r_e;
                let count = ex.on_route.iter().filter(|r| **r).count() as f64;
                grad[params.param_count()] -= r_e / denom - count / (1.0 + beta * count);
                (0..p.len())
                    .map(|j| -p[e] * (f64::from(u8::from(j == e)) - p[j]) / denom)
                    .collect()
            }
            _ => (0..p.len()).map(|j| p[j] - f64::from(u8::from(j == e))).collect(),
        };
        for (x, u) in ex.inputs.iter().zip(&upstream) {
            if *u != 0.0 {
                params.accumulate_grad(x, *u, &mut grad);
            }
        }
    }
    let n = examples.len().max(1) as f64;
    for g in &mut grad {
        *g /= n;
    }
    (loss / n, grad)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub batch_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 50, learning_rate: 0.1, seed: 0, batch_size: 16 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub init_train_nll: f64,
    pub init_held_out_nll: f64,
    pub train_nll: f64,
    pub held_out_nll: f64,
    pub train_scenarios: usize,
    pub held_out_scenarios: usize,
    /// Scenario ids dropped because no expert label could be extracted.
    pub excluded: Vec<String>,
}

/// Every fifth usable scenario is held out.
pub const HOLD_OUT_EVERY: usize = 5;

pub fn train_scorer(scenarios: &[ScenarioRecord], mode: TrainingMode, cfg: &TrainConfig) -> Result<(ScorerModel, TrainReport)> {
    let mut excluded = Vec::new();
    let mut labelled = Vec::new();
    for rec in scenarios {
        match scenario_examples(rec, mode) {
            Ok(ex) => labelled.push(ex),
            Err(Error::Labeling { scenario_id, .. }) => excluded.push(scenario_id),
            Err(Error::EmptyRoute { .. }) => excluded.push(rec.scenario_id.clone()),
            Err(e) => return Err(e),
        }
    }
    if labelled.iter().all(Vec::is_empty) {
        return Err(Error::EmptyTrainingSet);
    }
    let (mut train, mut held) = (Vec::new(), Vec::new());
    for (i, ex) in labelled.iter().enumerate() {
        if i % HOLD_OUT_EVERY == HOLD_OUT_EVERY - 1 {
            held.push(ex);
        } else {
            train.push(ex);
        }
    }
    if train.is_empty() {
        std::mem::swap(&mut train, &mut held);
    }
    let held_out_scenarios = held.len();
    if held.is_empty() {
        held = train.clone();
    }
    let train_examples: Vec<&NodeExample> = train.iter().flat_map(|v| v.iter()).collect();
    let held_examples: Vec<&NodeExample> = held.iter().flat_map(|v| v.iter()).collect();

    let mut model = ScorerModel::init(mode, cfg.seed);
    let mut beta = model.beta.map_or(0.0, Beta::value);
    let init_train_nll = mean_nll(&model.params, mode, beta, &train_examples);
    let init_held_out_nll = mean_nll(&model.params, mode, beta, &held_examples);

    let dim = model.params.input_dim();
    let mut flat = model.params.to_flat();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let batch = cfg.batch_size.max(1);
    for epoch in 0..cfg.epochs {
        shuffle(&mut order, cfg.seed, epoch as u64);
        for chunk in order.chunks(batch) {
            let params = ScorerParams::from_flat(dim, &flat);
            let batch_examples: Vec<&NodeExample> = chunk.iter().flat_map(|&i| train[i].iter()).collect();
            if batch_examples.is_empty() {
                continue;
            }
            let (_, grad) = nll_gradient(&params, mode, beta, &batch_examples);
            for (w, g) in flat.iter_mut().zip(&grad) {
                *w -= cfg.learning_rate * g;
            }
            if mode == TrainingMode::SoftMask {
                beta = (beta - cfg.learning_rate * grad[grad.len() - 1]).max(0.0);
            }
        }
    }
    model.params = ScorerParams::from_flat(dim, &flat);
    if mode == TrainingMode::SoftMask {
        model.beta = Some(Beta::new(beta)?);
    }
    let report = TrainReport {
        init_train_nll,
        init_held_out_nll,
        train_nll: mean_nll(&model.params, mode, beta, &train_examples),
        held_out_nll: mean_nll(&model.params, mode, beta, &held_examples),
        train_scenarios: train.len(),
        held_out_scenarios,
        excluded,
    };
    Ok((model, report))
}

/// Seeded Fisher-Yates shuffle; one stream per epoch.
fn shuffle(order: &mut [usize], seed: u64, epoch: u64) {
    let mut stream = CounterStream::new(seed, Domain::Shuffle, epoch);
    for i in (1..order.len()).rev() {
        let j = ((stream.next_uniform() * (i + 1) as f64) as usize).min(i);
        order.swap(i, j);
    }
}

/// Applies the conditioning implied by a model mode at inference time.
pub fn condition(dist: EdgeDistribution, route: &RouteMask, mode: TrainingMode, beta: Option<Beta>) -> EdgeDistribution {
    match mode {
        TrainingMode::HardMaskAtTrain => hard_mask(&dist, route),
        TrainingMode::SoftMask => soft_mask(&dist, route, beta.unwrap_or_default()),
        _ => dist,
    }
}

/// Kind of the edge from `u` to `to`, if it exists.
pub fn edge_kind(graph: &LaneGraph, u: NodeId, to: Option<NodeId>) -> Option<EdgeKind> {
    graph.out_edges(u).iter().find(|e| e.to == to).map(|e| e.kind)
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;
    use crate::geometry::Vec2;
    use crate::lane_graph::LaneNode;

    fn line_nodes(n: usize) -> Vec<LaneNode> {
        (0..n)
            .map(|i| LaneNode::from_positions(i, &[Vec2::new(i as f64 * 10.0, 0.0), Vec2::new(i as f64 * 10.0 + 10.0, 0.0)]))
            .collect()
    }

    /// Chain 0→1→…→n-1 where every successor has probability `p`.
    pub fn chain(n: usize, p: f64) -> (LaneGraph, EdgeDistribution) {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        let g = LaneGraph::from_parts(line_nodes(n), &edges, &[]).unwrap();
        let probs: Vec<Vec<f64>> = (0..n).map(|i| if i + 1 < n { vec![p, 1.0 - p] } else { vec![1.0] }).collect();
        let d = EdgeDistribution::from_probs(&g, &probs);
        (g, d)
    }

    /// Node 0 forks to 1 and 2 with the given probabilities; leaves terminate.
    pub fn fork(a: f64, b: f64) -> (LaneGraph, EdgeDistribution) {
        let g = LaneGraph::from_parts(line_nodes(3), &[(0, 1), (0, 2)], &[]).unwrap();
        let rest = 1.0 - a - b;
        let rest = if rest.abs() < 1e-12 { 0.0 } else { rest };
        let d = EdgeDistribution::from_probs(&g, &[vec![a, b, rest], vec![1.0], vec![1.0]]);
        (g, d)
    }

    /// A→B, A→C, B→D, C→D with terminal mass at every node.
    pub fn diamond() -> (LaneGraph, EdgeDistribution) {
        let g = LaneGraph::from_parts(line_nodes(4), &[(0, 1), (0, 2), (1, 3), (2, 3)], &[]).unwrap();
        let d = EdgeDistribution::from_probs(&g, &[vec![0.5, 0.4, 0.1], vec![0.8, 0.2], vec![0.5, 0.5], vec![1.0]]);
        (g, d)
    }
}
