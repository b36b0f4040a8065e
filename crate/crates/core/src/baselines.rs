//! Intelligent Driver Model car following and MOBIL lane changes.
//!
//! The same follower drives the evaluation baseline and the synthetic expert
//! in the scenario generator.

use crate::error::Result;
use crate::geometry::{normalize_angle, Polyline, Vec2};
use crate::lane_graph::{EdgeKind, LaneGraph, NodeId};
use crate::planner::ReferencePath;
use crate::scenario::{AgentClass, AgentState, ScenarioRecord, Trajectory, DT, HORIZON_STEPS};

/// Lateral band around a path inside which another vehicle counts as a lead.
pub const LEAD_LATERAL_BAND: f64 = 2.0;
pub const LEAD_LOOKAHEAD: f64 = 100.0;
/// Comfortable lateral acceleration used to cap speed in curves.
pub const LATERAL_ACCEL: f64 = 3.0;
pub const CURVE_LOOKAHEAD: f64 = 50.0;
/// Extra cost of a lane change when routing the baseline (metres).
pub const LANE_CHANGE_COST: f64 = 50.0;
/// Lane changes are considered within this distance of a snippet end.
pub const BOUNDARY_WINDOW: f64 = 5.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IdmParams {
    pub v0: f64,
    pub time_headway: f64,
    pub s0: f64,
    pub a_max: f64,
    pub b_comf: f64,
    pub delta: f64,
}

impl IdmParams {
    pub fn with_speed(v0: f64) -> Self {
        Self { v0, ..Self::default() }
    }

    /// Desired dynamic gap s*.
    pub fn desired_gap(&self, v: f64, dv: f64) -> f64 {
        self.s0 + (v * self.time_headway + v * dv / (2.0 * (self.a_max * self.b_comf).sqrt())).max(0.0)
    }
}

impl Default for IdmParams {
    fn default() -> Self {
        Self { v0: 10.0, time_headway: 1.5, s0: 2.0, a_max: 1.5, b_comf: 2.0, delta: 4.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MobilParams {
    pub politeness: f64,
    pub a_thresh: f64,
    pub b_safe: f64,
}

impl Default for MobilParams {
    fn default() -> Self {
        Self { politeness: 0.3, a_thresh: 0.2, b_safe: 3.0 }
    }
}

/// IDM acceleration with `dv` the closing speed to the lead.
pub fn idm_acceleration(p: &IdmParams, v: f64, gap: Option<f64>, dv: f64) -> f64 {
    let free = 1.0 - (v / p.v0).powf(p.delta);
    let interaction = match gap {
        Some(g) => (p.desired_gap(v, dv) / g.max(1e-3)).powi(2),
        None => 0.0,
    };
    (p.a_max * (free - interaction)).clamp(-2.0 * p.b_comf, p.a_max)
}

/// Accelerations before and after a candidate lane change.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MobilAccelerations {
    pub ego_current: f64,
    pub ego_target: f64,
    pub new_follower_current: f64,
    pub new_follower_target: f64,
    pub old_follower_current: f64,
    pub old_follower_target: f64,
}

pub fn mobil_decision(p: &MobilParams, a: &MobilAccelerations) -> bool {
    if a.new_follower_target < -p.b_safe {
        return false;
    }
    let ego_gain = a.ego_target - a.ego_current;
    let others = (a.new_follower_target - a.new_follower_current) + (a.old_follower_target - a.old_follower_current);
    ego_gain + p.politeness * others > p.a_thresh
}

/// A vehicle relative to the ego along a lane: bumper gap and speed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighbour {
    pub gap: f64,
    pub speed: f64,
}

/// Traffic around the ego on its current and target lanes. Follower gaps are
/// measured from the follower's front to the ego's rear.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LaneChangeSituation {
    pub ego_speed: f64,
    pub ego_length: f64,
    pub current_lead: Option<Neighbour>,
    pub current_follower: Option<Neighbour>,
    pub target_lead: Option<Neighbour>,
    pub target_follower: Option<Neighbour>,
}

fn follow(idm: &IdmParams, v: f64, lead: Option<(f64, f64)>) -> f64 {
    match lead {
        Some((gap, lead_v)) => idm_acceleration(idm, v, Some(gap), v - lead_v),
        None => idm_acceleration(idm, v, None, 0.0),
    }
}

pub fn mobil_should_change(p: &MobilParams, idm: &IdmParams, s: &LaneChangeSituation) -> bool {
    let v = s.ego_speed;
    let lead = |n: Option<Neighbour>| n.map(|n| (n.gap, n.speed));
    let ego_current = follow(idm, v, lead(s.current_lead));
    let ego_target = follow(idm, v, lead(s.target_lead));
    let (new_follower_current, new_follower_target) = match s.target_follower {
        Some(f) => {
            let before = s.target_lead.map(|l| (f.gap + s.ego_length + l.gap, l.speed));
            (follow(idm, f.speed, before), follow(idm, f.speed, Some((f.gap, v))))
        }
        None => (0.0, 0.0),
    };
    let (old_follower_current, old_follower_target) = match s.current_follower {
        Some(f) => {
            let after = s.current_lead.map(|l| (f.gap + s.ego_length + l.gap, l.speed));
            (follow(idm, f.speed, Some((f.gap, v))), follow(idm, f.speed, after))
        }
        None => (0.0, 0.0),
    };
    mobil_decision(
        p,
        &MobilAccelerations {
            ego_current,
            ego_target,
            new_follower_current,
            new_follower_target,
            old_follower_current,
            old_follower_target,
        },
    )
}

/// Desired speed along a path, capped so curves are taken at a bounded
/// lateral acceleration and approached with comfortable braking.
#[derive(Clone, Debug)]
pub struct CurveSpeed {
    limit: f64,
    b_comf: f64,
    /// (arc, curve speed) at every vertex with noticeable curvature.
    caps: Vec<(f64, f64)>,
}

impl CurveSpeed {
    pub fn new(line: &Polyline, limit: f64, b_comf: f64) -> Self {
        let pts = line.points();
        let mut caps = Vec::new();
        let mut arc = 0.0;
        for i in 1..pts.len().saturating_sub(1) {
            let a = pts[i] - pts[i - 1];
            let b = pts[i + 1] - pts[i];
            arc += a.norm();
            let span = 0.5 * (a.norm() + b.norm());
            if a.norm() < 1e-9 || b.norm() < 1e-9 || span < 1e-9 {
                continue;
            }
            let kappa = normalize_angle(b.heading() - a.heading()).abs() / span;
            if kappa > 1e-4 {
                caps.push((arc, (LATERAL_ACCEL / kappa).sqrt()));
            }
        }
        Self { limit, b_comf, caps }
    }

    pub fn uniform(limit: f64) -> Self {
        Self { limit, b_comf: 1.0, caps: Vec::new() }
    }

    pub fn desired(&self, s: f64) -> f64 {
        let start = self.caps.partition_point(|(a, _)| *a < s - 1.0);
        let mut v = self.limit;
        for &(arc, cap) in &self.caps[start..] {
            if arc > s + CURVE_LOOKAHEAD {
                break;
            }
            v = v.min((cap * cap + 2.0 * self.b_comf * (arc - s).max(0.0)).sqrt());
        }
        v
    }
}

/// Another road user as seen by a follower.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Obstacle {
    pub position: Vec2,
    pub heading: f64,
    pub speed: f64,
    pub length: f64,
}

/// Nearest obstacle ahead on `path` within the lateral band: (gap, speed
/// along the path).
pub fn lead_on_path(path: &Polyline, s: f64, ego_length: f64, obstacles: &[Obstacle]) -> Option<(f64, f64)> {
    let mut best: Option<(f64, f64)> = None;
    for o in obstacles {
        let proj = path.project(o.position);
        if proj.distance > LEAD_LATERAL_BAND {
            continue;
        }
        let ahead = proj.arc - s;
        if ahead <= 0.0 || ahead > LEAD_LOOKAHEAD {
            continue;
        }
        let gap = (ahead - 0.5 * (ego_length + o.length)).max(0.01);
        let speed = (o.speed * (o.heading - proj.heading).cos()).max(0.0);
        if best.is_none_or(|(g, _)| gap < g) {
            best = Some((gap, speed));
        }
    }
    best
}

/// A vehicle driving along a fixed path under IDM control.
#[derive(Clone, Debug)]
pub struct Follower {
    pub path: ReferencePath,
    pub speed_profile: CurveSpeed,
    pub s: f64,
    pub v: f64,
    pub length: f64,
    /// Treat the path end as a stopped obstacle.
    pub stop_at_end: bool,
}

impl Follower {
    pub fn new(path: ReferencePath, s: f64, v: f64, length: f64, speed_limit: f64, idm: &IdmParams) -> Self {
        let speed_profile = CurveSpeed::new(path.polyline(), speed_limit, idm.b_comf);
        Self { path, speed_profile, s, v, length, stop_at_end: false }
    }

    pub fn position(&self) -> Vec2 {
        self.path.point_at(self.s)
    }

    pub fn heading(&self) -> f64 {
        self.path.heading_at(self.s)
    }

    pub fn obstacle(&self) -> Obstacle {
        Obstacle { position: self.position(), heading: self.heading(), speed: self.v, length: self.length }
    }

    /// IDM acceleration given the other road users.
    pub fn acceleration(&self, idm: &IdmParams, obstacles: &[Obstacle]) -> f64 {
        let p = IdmParams { v0: self.speed_profile.desired(self.s).max(0.1), ..*idm };
        let mut lead = lead_on_path(self.path.polyline(), self.s, self.length, obstacles);
        if self.stop_at_end {
            let gap = (self.path.length() - self.s - 0.5 * self.length).max(0.01);
            if lead.is_none_or(|(g, _)| gap < g) {
                lead = Some((gap, 0.0));
            }
        }
        follow(&p, self.v, lead)
    }

    /// Advances by `dt` with acceleration `a`; speed never drops below zero.
    pub fn advance(&mut self, a: f64, dt: f64) -> f64 {
        let next = (self.v + a * dt).max(0.0);
        self.s += 0.5 * (self.v + next) * dt;
        let applied = (next - self.v) / dt;
        self.v = next;
        applied
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct IdmPlannerConfig {
    /// `v0` is replaced by the scenario speed limit.
    pub idm: IdmParams,
    pub mobil: Option<MobilParams>,
}

fn route_nodes(record: &ScenarioRecord, start: NodeId) -> (Vec<NodeId>, bool) {
    let graph = &record.graph;
    if let Ok(route) = record.route_mask_from(start) {
        let restricted = restrict(graph, &route.on_route_nodes);
        if let Some(nodes) = restricted.shortest(start, record.goal_node) {
            return (nodes, true);
        }
    }
    // off the route: keep following successors
    let mut nodes = vec![start];
    while nodes.len() < 8 {
        let last = *nodes.last().expect("nonempty");
        match graph.out_edges(last).iter().find(|e| e.kind == EdgeKind::Successor).and_then(|e| e.to) {
            Some(v) if !nodes.contains(&v) => nodes.push(v),
            _ => break,
        }
    }
    (nodes, false)
}

/// Shortest paths over on-route nodes with lane changes penalized.
struct Restricted<'a> {
    graph: &'a LaneGraph,
    allowed: &'a std::collections::BTreeSet<NodeId>,
}

fn restrict<'a>(graph: &'a LaneGraph, allowed: &'a std::collections::BTreeSet<NodeId>) -> Restricted<'a> {
    Restricted { graph, allowed }
}

impl Restricted<'_> {
    fn shortest(&self, start: NodeId, goal: NodeId) -> Option<Vec<NodeId>> {
        let n = self.graph.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut prev = vec![None; n];
        let mut done = vec![false; n];
        dist[start] = 0.0;
        loop {
            let mut u = None;
            for v in self.allowed.iter().copied() {
                if !done[v] && dist[v].is_finite() && u.is_none_or(|w: NodeId| dist[v] < dist[w]) {
                    u = Some(v);
                }
            }
            let Some(u) = u else { break };
            done[u] = true;
            for e in self.graph.out_edges(u) {
                let Some(v) = e.to else { continue };
                if !self.allowed.contains(&v) {
                    continue;
                }
                let w = match e.kind {
                    EdgeKind::Proximal => LANE_CHANGE_COST,
                    _ => self.graph.node(u).arc_length,
                };
                if dist[u] + w < dist[v] {
                    dist[v] = dist[u] + w;
                    prev[v] = Some(u);
                }
            }
        }
        if !dist[goal].is_finite() {
            return None;
        }
        let mut path = vec![goal];
        while let Some(p) = prev[*path.last().expect("nonempty")] {
            path.push(p);
        }
        path.reverse();
        Some(path)
    }
}

fn agent_obstacles(record: &ScenarioRecord, step: usize, t: f64) -> Vec<Obstacle> {
    record
        .agents
        .iter()
        .filter(|a| a.class == AgentClass::Vehicle)
        .filter_map(|a| a.state_at(step).map(|s| (a, s)))
        .map(|(a, s)| Obstacle {
            position: s.position() + Vec2::from_heading(s.heading) * (s.v * t),
            heading: s.heading,
            speed: s.v,
            length: a.footprint.length,
        })
        .collect()
}

fn neighbour_on(path: &ReferencePath, s: f64, ego_len: f64, obstacles: &[Obstacle], ahead: bool) -> Option<Neighbour> {
    let mut best: Option<Neighbour> = None;
    for o in obstacles {
        let proj = path.polyline().project(o.position);
        if proj.distance > LEAD_LATERAL_BAND {
            continue;
        }
        let d = if ahead { proj.arc - s } else { s - proj.arc };
        if d <= 0.0 || d > LEAD_LOOKAHEAD {
            continue;
        }
        let gap = (d - 0.5 * (ego_len + o.length)).max(0.01);
        let speed = (o.speed * (o.heading - proj.heading).cos()).max(0.0);
        if best.is_none_or(|b| gap < b.gap) {
            best = Some(Neighbour { gap, speed });
        }
    }
    best
}

/// Lane-change alternative chosen by MOBIL, if any.
fn mobil_alternative(
    record: &ScenarioRecord,
    start: NodeId,
    state: &AgentState,
    current: &ReferencePath,
    obstacles: &[Obstacle],
    cfg: &IdmPlannerConfig,
    idm: &IdmParams,
) -> Option<Vec<NodeId>> {
    let mobil = cfg.mobil?;
    let graph = &record.graph;
    let node = graph.node(start);
    let arc = node.polyline().project(state.position()).arc;
    if node.arc_length - arc > BOUNDARY_WINDOW {
        return None;
    }
    let route = record.route_mask_from(start).ok()?;
    let ego_len = record.sdv_footprint.length;
    for e in graph.out_edges(start).iter().filter(|e| e.kind == EdgeKind::Proximal) {
        let Some(v) = e.to else { continue };
        if !route.contains_node(v) {
            continue;
        }
        let restricted = restrict(graph, &route.on_route_nodes);
        let Some(rest) = restricted.shortest(v, record.goal_node) else { continue };
        let mut nodes = vec![start];
        nodes.extend(rest);
        let target = ReferencePath::from_nodes(graph, &nodes, state.position());
        let situation = LaneChangeSituation {
            ego_speed: state.v,
            ego_length: ego_len,
            current_lead: neighbour_on(current, 0.0, ego_len, obstacles, true),
            current_follower: neighbour_on(current, 0.0, ego_len, obstacles, false),
            target_lead: neighbour_on(&target, BLEND_OFFSET, ego_len, obstacles, true),
            target_follower: neighbour_on(&target, BLEND_OFFSET, ego_len, obstacles, false),
        };
        if mobil_should_change(&mobil, idm, &situation) {
            return Some(nodes);
        }
    }
    None
}

/// Arc at which a lane-change path has fully joined the target lane.
const BLEND_OFFSET: f64 = crate::planner::BLEND_LENGTH;

/// IDM plan from `state` at simulation step `step`, following the route
/// centreline. Other agents are extrapolated at constant velocity.
pub fn idm_route_planner(record: &ScenarioRecord, state: &AgentState, step: usize, cfg: &IdmPlannerConfig) -> Result<Trajectory> {
    let graph = &record.graph;
    let start = crate::lane_graph::assign_sdv_node(graph, &state.pose());
    let idm = IdmParams { v0: record.speed_limit, ..cfg.idm };
    let (mut nodes, on_route) = route_nodes(record, start);
    let mut path = ReferencePath::from_nodes(graph, &nodes, state.position());
    let now = agent_obstacles(record, step, 0.0);
    if on_route {
        if let Some(alt) = mobil_alternative(record, start, state, &path, &now, cfg, &idm) {
            nodes = alt;
            path = ReferencePath::from_nodes(graph, &nodes, state.position());
        }
    }
    let mut ego = Follower::new(path, 0.0, state.v, record.sdv_footprint.length, record.speed_limit, &idm);
    ego.stop_at_end = on_route;
    let mut waypoints = Vec::with_capacity(HORIZON_STEPS);
    for k in 0..HORIZON_STEPS {
        let obstacles = agent_obstacles(record, step, k as f64 * DT);
        let a = ego.acceleration(&idm, &obstacles);
        ego.advance(a, DT);
        waypoints.push(ego.position());
    }
    Ok(Trajectory::new(waypoints))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> IdmParams {
        IdmParams::default()
    }

    #[test]
    fn free_road_equilibrium() {
        assert!(idm_acceleration(&p(), 10.0, None, 0.0).abs() < 1e-12);
        assert_eq!(idm_acceleration(&p(), 0.0, None, 0.0), 1.5);
    }

    #[test]
    fn equilibrium_spacing() {
        let v = 6.0;
        let s_star = p().desired_gap(v, 0.0);
        let gap = s_star / (1.0 - (v / p().v0).powi(4)).sqrt();
        assert!(idm_acceleration(&p(), v, Some(gap), 0.0).abs() < 1e-9);
        // 1% off the equilibrium gap moves the acceleration by a small amount only
        assert!(idm_acceleration(&p(), v, Some(gap * 1.01), 0.0) > 0.0);
        assert!(idm_acceleration(&p(), v, Some(gap * 0.99), 0.0) < 0.0);
    }

    #[test]
    fn output_is_clipped() {
        assert_eq!(idm_acceleration(&p(), 10.0, Some(0.5), 10.0), -4.0);
    }

    #[test]
    fn mobil_examples() {
        let m = MobilParams { politeness: 0.0, ..MobilParams::default() };
        let blocked = LaneChangeSituation {
            ego_speed: 8.0,
            ego_length: 4.8,
            current_lead: Some(Neighbour { gap: 5.0, speed: 0.0 }),
            current_follower: None,
            target_lead: None,
            target_follower: None,
        };
        assert!(mobil_should_change(&m, &p(), &blocked));

        let veto = MobilAccelerations {
            ego_current: -3.0,
            ego_target: 1.0,
            new_follower_current: 0.0,
            new_follower_target: -2.0 * 3.0,
            old_follower_current: 0.0,
            old_follower_target: 0.0,
        };
        assert!(!mobil_decision(&MobilParams::default(), &veto));

        let marginal = MobilAccelerations {
            ego_current: 0.0,
            ego_target: 0.3,
            new_follower_current: 0.0,
            new_follower_target: -0.2,
            old_follower_current: 0.0,
            old_follower_target: 0.0,
        };
        let params = MobilParams { politeness: 0.5, a_thresh: 0.25, b_safe: 3.0 };
        assert!(!mobil_decision(&params, &marginal));
    }

    #[test]
    fn curve_speed_caps_turns() {
        let arc: Vec<Vec2> = (0..=20)
            .map(|i| {
                let t = std::f64::consts::FRAC_PI_2 * i as f64 / 20.0;
                Vec2::new(100.0 + 12.0 * t.sin(), 12.0 - 12.0 * t.cos())
            })
            .collect();
        let mut pts = vec![Vec2::new(0.0, 0.0)];
        pts.extend(arc);
        let profile = CurveSpeed::new(&Polyline::new(pts), 10.0, 2.0);
        assert_eq!(profile.desired(0.0), 10.0);
        let in_curve = profile.desired(105.0);
        assert!((in_curve - (LATERAL_ACCEL * 12.0).sqrt()).abs() < 0.1, "{in_curve}");
        assert!(profile.desired(90.0) > in_curve && profile.desired(90.0) < 10.0);
    }
}
