//! Synthetic 4-way intersections.
//!
//! Every arm is built in a canonical west-arm frame (traffic enters heading
//! east) and rotated by a multiple of 90°. The SDV always approaches from the
//! west arm; its type decides the exit: right turns leave by the next arm
//! counter-clockwise, straight drives by the opposite arm, left turns by the
//! remaining one. All vehicles, the SDV included, are simulated jointly with
//! IDM from t = -2 s; vehicles that would touch the SDV are dropped and the
//! scene is re-simulated, so the logged expert is collision-free.

use std::collections::BTreeSet;
use std::f64::consts::FRAC_PI_2;

use rand::Rng;
use rayon::prelude::*;

use super::{AgentClass, AgentState, AgentTrack, Footprint, ScenarioRecord, Trajectory};
use super::{DT, HISTORY_STEPS, HORIZON_STEPS, SIM_STEPS};
use crate::baselines::{Follower, IdmParams, Obstacle};
use crate::evaluation::OrientedBox;
use crate::geometry::{normalize_angle, Polyline, Vec2};
use crate::lane_graph::{assign_sdv_node, build_graph, CentrelinePoint, GraphParams, LaneGraph, NodeId, Pose, RawLane};
use crate::planner::ReferencePath;
use crate::rng::{mix, stream, Domain};

pub const LANE_WIDTH: f64 = 3.5;
/// Distance from the lane edge to the intersection box boundary.
const BOX_MARGIN: f64 = 4.0;
const ARC_POINTS: usize = 12;
const SLOT_LENGTH: f64 = 20.0;
const VEHICLE: Footprint = Footprint { length: 4.8, width: 2.0 };
const PEDESTRIAN: Footprint = Footprint { length: 0.6, width: 0.6 };

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ScenarioType {
    Traverse,
    LeftTurn,
    RightTurn,
}

impl ScenarioType {
    pub const ALL: [ScenarioType; 3] = [ScenarioType::Traverse, ScenarioType::LeftTurn, ScenarioType::RightTurn];

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioType::Traverse => "traverse",
            ScenarioType::LeftTurn => "left_turn",
            ScenarioType::RightTurn => "right_turn",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeneratorConfig {
    pub arm_length: f64,
    pub lanes_per_arm: usize,
    pub speed_limit: f64,
    /// Probability that a 20 m lane slot holds a vehicle.
    pub agent_density: f64,
    /// Probability of flipping the on-route label of each node near the route.
    pub corrupt_route_fraction: f64,
    pub graph_params: GraphParams,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            arm_length: 120.0,
            lanes_per_arm: 2,
            speed_limit: 10.0,
            agent_density: 0.3,
            corrupt_route_fraction: 0.0,
            graph_params: GraphParams::default(),
        }
    }
}

/// `count` scenarios; record `i` depends only on `(seed, i, cfg)`.
pub fn generate_intersections(seed: u64, count: usize, cfg: &GeneratorConfig) -> Vec<ScenarioRecord> {
    (0..count)
        .into_par_iter()
        .map(|i| generate_one(seed, i, cfg))
        .collect()
}

fn incoming_id(k: usize, i: usize) -> u32 {
    (k * 100 + i) as u32
}

fn outgoing_id(k: usize, i: usize) -> u32 {
    (k * 100 + 10 + i) as u32
}

fn straight_id(k: usize, i: usize) -> u32 {
    (k * 100 + 50 + i) as u32
}

fn left_id(k: usize) -> u32 {
    (k * 100 + 60) as u32
}

fn right_id(k: usize) -> u32 {
    (k * 100 + 61) as u32
}

struct Layout {
    lanes: Vec<RawLane>,
    drivable: Vec<Vec<Vec2>>,
    /// Half-width of the intersection box.
    half: f64,
    n: usize,
    length: f64,
}

fn rotate_arm(k: usize, p: Vec2) -> Vec2 {
    p.rotate(k as f64 * FRAC_PI_2)
}

fn lane(id: u32, k: usize, pts: &[(Vec2, f64)], successors: Vec<u32>, neighbours: Vec<u32>) -> RawLane {
    let turn = k as f64 * FRAC_PI_2;
    RawLane {
        id,
        points: pts
            .iter()
            .map(|(p, h)| {
                let q = rotate_arm(k, *p);
                CentrelinePoint::plain(Pose::new(q.x, q.y, h + turn))
            })
            .collect(),
        successors,
        neighbours,
    }
}

fn arc(center: Vec2, radius: f64, from: f64, to: f64) -> Vec<(Vec2, f64)> {
    let dir = (to - from).signum();
    (0..ARC_POINTS)
        .map(|j| {
            let t = from + (to - from) * j as f64 / (ARC_POINTS - 1) as f64;
            (center + Vec2::from_heading(t) * radius, t + dir * FRAC_PI_2)
        })
        .collect()
}

impl Layout {
    fn new(cfg: &GeneratorConfig) -> Self {
        let n = cfg.lanes_per_arm.max(1);
        let w = LANE_WIDTH;
        let h = n as f64 * w + BOX_MARGIN;
        let len = cfg.arm_length;
        let mut lanes = Vec::new();
        let mut drivable = vec![vec![Vec2::new(-h, -h), Vec2::new(h, -h), Vec2::new(h, h), Vec2::new(-h, h)]];
        for k in 0..4 {
            let half_road = n as f64 * w;
            drivable.push(
                [Vec2::new(-h - len, -half_road), Vec2::new(-h, -half_road), Vec2::new(-h, half_road), Vec2::new(-h - len, half_road)]
                    .iter()
                    .map(|p| rotate_arm(k, *p))
                    .collect(),
            );
            let adjacent = |i: usize, id: fn(usize, usize) -> u32| {
                let mut v = Vec::new();
                if i > 0 {
                    v.push(id(k, i - 1));
                }
                if i + 1 < n {
                    v.push(id(k, i + 1));
                }
                v
            };
            for i in 0..n {
                let y = (i as f64 + 0.5) * w;
                let mut succ = vec![straight_id(k, i)];
                if i == 0 {
                    succ.push(left_id(k));
                }
                if i == n - 1 {
                    succ.push(right_id(k));
                }
                lanes.push(lane(
                    incoming_id(k, i),
                    k,
                    &[(Vec2::new(-h - len, -y), 0.0), (Vec2::new(-h, -y), 0.0)],
                    succ,
                    adjacent(i, incoming_id),
                ));
                lanes.push(lane(
                    outgoing_id(k, i),
                    k,
                    &[(Vec2::new(-h, y), std::f64::consts::PI), (Vec2::new(-h - len, y), std::f64::consts::PI)],
                    vec![],
                    adjacent(i, outgoing_id),
                ));
                lanes.push(lane(
                    straight_id(k, i),
                    k,
                    &[(Vec2::new(-h, -y), 0.0), (Vec2::new(h, -y), 0.0)],
                    vec![outgoing_id((k + 2) % 4, i)],
                    vec![],
                ));
            }
            let left_r = h + 0.5 * w;
            lanes.push(lane(left_id(k), k, &arc(Vec2::new(-h, h), left_r, -FRAC_PI_2, 0.0), vec![outgoing_id((k + 3) % 4, 0)], vec![]));
            let right_r = h - (n as f64 - 0.5) * w;
            lanes.push(lane(right_id(k), k, &arc(Vec2::new(-h, -h), right_r, FRAC_PI_2, 0.0), vec![outgoing_id((k + 1) % 4, n - 1)], vec![]));
        }
        lanes.sort_by_key(|l| l.id);
        Self { lanes, drivable, half: h, n, length: len }
    }

    fn polyline(&self, id: u32) -> Polyline {
        let l = self.lanes.iter().find(|l| l.id == id).expect("known lane id");
        Polyline::new(l.points.iter().map(|p| p.pose.position()).collect())
    }

    fn path(&self, ids: &[u32]) -> ReferencePath {
        let mut pts: Vec<Vec2> = Vec::new();
        for id in ids {
            for p in self.polyline(*id).points() {
                if pts.last().is_none_or(|q| q.distance(*p) > 1e-9) {
                    pts.push(*p);
                }
            }
        }
        ReferencePath::from_polyline(Polyline::new(pts))
    }

    fn exits(&self, k: usize, i: usize) -> Vec<[u32; 2]> {
        let n = self.n;
        let mut v = vec![[straight_id(k, i), outgoing_id((k + 2) % 4, i)]];
        if i == 0 {
            v.push([left_id(k), outgoing_id((k + 3) % 4, 0)]);
        }
        if i == n - 1 {
            v.push([right_id(k), outgoing_id((k + 1) % 4, n - 1)]);
        }
        v
    }
}

struct VehicleSpec {
    follower: Follower,
    agent_id: u32,
}

struct PedestrianSpec {
    start: Vec2,
    heading: f64,
    speed: f64,
    agent_id: u32,
}

const TICKS: usize = HISTORY_STEPS + SIM_STEPS;

/// States of every vehicle at every tick; index 0 is the SDV.
fn simulate(vehicles: &[Follower], idm: &IdmParams) -> Vec<Vec<AgentState>> {
    let mut fleet: Vec<Follower> = vehicles.to_vec();
    let snapshot = |f: &Follower, a: f64, omega: f64| {
        let p = f.position();
        AgentState { x: p.x, y: p.y, v: f.v, a, omega, heading: normalize_angle(f.heading()) }
    };
    let mut states: Vec<Vec<AgentState>> = fleet.iter().map(|f| vec![snapshot(f, 0.0, 0.0)]).collect();
    for _ in 1..TICKS {
        let obstacles: Vec<Obstacle> = fleet.iter().map(Follower::obstacle).collect();
        let accels: Vec<f64> = fleet
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let others: Vec<Obstacle> =
                    obstacles.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, o)| *o).collect();
                f.acceleration(idm, &others)
            })
            .collect();
        for (i, (f, a)) in fleet.iter_mut().zip(accels).enumerate() {
            let before = f.heading();
            let applied = f.advance(a, DT);
            let omega = normalize_angle(f.heading() - before) / DT;
            states[i].push(snapshot(f, applied, omega));
        }
    }
    states
}

fn boxes_touch(a: &AgentState, fa: Footprint, b: &AgentState, fb: Footprint) -> bool {
    OrientedBox::new(a.position(), a.heading, fa.length, fa.width)
        .overlaps(&OrientedBox::new(b.position(), b.heading, fb.length, fb.width))
}

fn generate_one(seed: u64, index: usize, cfg: &GeneratorConfig) -> ScenarioRecord {
    let record_seed = mix(seed, index as u64);
    let mut rng = stream(record_seed, Domain::Generator, 0);
    let layout = Layout::new(cfg);
    let n = layout.n;
    let v_lim = cfg.speed_limit;
    let idm = IdmParams::with_speed(v_lim);

    let scenario_type = ScenarioType::ALL[rng.random_range(0..3)];
    let sdv_lane = match scenario_type {
        ScenarioType::LeftTurn => 0,
        ScenarioType::RightTurn => n - 1,
        ScenarioType::Traverse => rng.random_range(0..n),
    };
    let exits = layout.exits(0, sdv_lane);
    let exit = match scenario_type {
        ScenarioType::Traverse => exits[0],
        ScenarioType::LeftTurn => exits.iter().copied().find(|e| e[0] == left_id(0)).expect("left exit"),
        ScenarioType::RightTurn => exits.iter().copied().find(|e| e[0] == right_id(0)).expect("right exit"),
    };
    let route_ids = [incoming_id(0, sdv_lane), exit[0], exit[1]];
    let sdv_speed = v_lim * rng.random_range(0.8..1.0);
    let before_box = rng.random_range(15.0..45.0);
    let sdv_arc = (layout.length - before_box - (HISTORY_STEPS - 1) as f64 * DT * sdv_speed).max(0.0);
    let mut sdv = Follower::new(layout.path(&route_ids), sdv_arc, sdv_speed, VEHICLE.length, v_lim, &idm);
    sdv.stop_at_end = true;

    // background vehicles, one candidate per lane slot
    let mut candidates: Vec<VehicleSpec> = Vec::new();
    let slots = (layout.length / SLOT_LENGTH).floor() as usize;
    let mut next_id = 1u32;
    for k in 0..4 {
        for i in 0..n {
            for j in 0..slots {
                let arc = SLOT_LENGTH * (j as f64 + 0.5) + rng.random_range(-3.0..3.0);
                let occupied = rng.random_bool(cfg.agent_density.clamp(0.0, 1.0));
                let speed = v_lim * rng.random_range(0.5..1.0);
                let route = rng.random_range(0..layout.exits(k, i).len());
                if occupied && !(k == 0 && i == sdv_lane && (arc - sdv_arc).abs() < 15.0) {
                    let exit = layout.exits(k, i)[route];
                    let path = layout.path(&[incoming_id(k, i), exit[0], exit[1]]);
                    candidates.push(VehicleSpec {
                        follower: Follower::new(path, arc, speed, VEHICLE.length, v_lim, &idm),
                        agent_id: next_id,
                    });
                    next_id += 1;
                }
                let occupied = rng.random_bool(cfg.agent_density.clamp(0.0, 1.0));
                let speed = v_lim * rng.random_range(0.5..1.0);
                if occupied {
                    let path = layout.path(&[outgoing_id(k, i)]);
                    candidates.push(VehicleSpec {
                        follower: Follower::new(path, arc, speed, VEHICLE.length, v_lim, &idm),
                        agent_id: next_id,
                    });
                    next_id += 1;
                }
            }
        }
    }
    let pedestrian_count = rng.random_range(0..=2);
    let pedestrians: Vec<PedestrianSpec> = (0..pedestrian_count)
        .map(|p| {
            let k = rng.random_range(0..4);
            let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let lateral = side * (n as f64 * LANE_WIDTH + 2.0);
            let along = -layout.half - rng.random_range(5.0..layout.length - 5.0);
            let east = rng.random_bool(0.5);
            PedestrianSpec {
                start: rotate_arm(k, Vec2::new(along, lateral)),
                heading: normalize_angle(k as f64 * FRAC_PI_2 + if east { 0.0 } else { std::f64::consts::PI }),
                speed: rng.random_range(1.0..1.5),
                agent_id: 1000 + p as u32,
            }
        })
        .collect();

    // drop vehicles that would touch the expert, then re-simulate
    let mut kept: Vec<usize> = (0..candidates.len()).collect();
    let states = loop {
        let mut fleet = vec![sdv.clone()];
        fleet.extend(kept.iter().map(|&c| candidates[c].follower.clone()));
        let states = simulate(&fleet, &idm);
        let hits: BTreeSet<usize> = (1..fleet.len())
            .filter(|&v| (0..TICKS).any(|t| boxes_touch(&states[0][t], VEHICLE, &states[v][t], VEHICLE)))
            .collect();
        if hits.is_empty() {
            break states;
        }
        kept = kept.iter().enumerate().filter(|(slot, _)| !hits.contains(&(slot + 1))).map(|(_, c)| *c).collect();
    };

    let pedestrian_states: Vec<Vec<AgentState>> = pedestrians
        .iter()
        .map(|p| {
            (0..TICKS)
                .map(|t| {
                    let q = p.start + Vec2::from_heading(p.heading) * (p.speed * DT * t as f64);
                    AgentState { x: q.x, y: q.y, v: p.speed, a: 0.0, omega: 0.0, heading: p.heading }
                })
                .collect()
        })
        .collect();

    // shift the scene so the SDV sits at the origin at t = 0
    let origin = states[0][HISTORY_STEPS - 1].position();
    let shift_state = |s: &AgentState| AgentState { x: s.x - origin.x, y: s.y - origin.y, ..*s };
    let lanes: Vec<RawLane> = layout
        .lanes
        .iter()
        .map(|l| RawLane {
            points: l
                .points
                .iter()
                .map(|p| CentrelinePoint { pose: Pose::new(p.pose.x - origin.x, p.pose.y - origin.y, p.pose.heading), ..*p })
                .collect(),
            ..l.clone()
        })
        .collect();
    let graph = build_graph(&lanes, cfg.graph_params).expect("generated layout is a valid lane graph");
    let drivable_area = layout.drivable.iter().map(|poly| poly.iter().map(|p| *p - origin).collect()).collect();

    let split = |track: &[AgentState]| -> (Vec<AgentState>, Vec<AgentState>) {
        let shifted: Vec<AgentState> = track.iter().map(shift_state).collect();
        (shifted[..HISTORY_STEPS].to_vec(), shifted[HISTORY_STEPS..].to_vec())
    };
    let mut agents = Vec::new();
    for (slot, &c) in kept.iter().enumerate() {
        let (history, future_playback) = split(&states[slot + 1]);
        agents.push(AgentTrack {
            agent_id: candidates[c].agent_id,
            class: AgentClass::Vehicle,
            history,
            future_playback,
            footprint: VEHICLE,
        });
    }
    for (p, track) in pedestrians.iter().zip(&pedestrian_states) {
        let (history, future_playback) = split(track);
        agents.push(AgentTrack {
            agent_id: p.agent_id,
            class: AgentClass::Pedestrian,
            history,
            future_playback,
            footprint: PEDESTRIAN,
        });
    }
    let (sdv_history, expert_log) = split(&states[0]);
    let expert_future = Trajectory::new(expert_log[..HORIZON_STEPS].iter().map(AgentState::position).collect());

    let t0 = sdv_history[HISTORY_STEPS - 1];
    let start_node = assign_sdv_node(&graph, &t0.pose());
    let goal_node = last_snippet(&graph, exit[1]);
    let mislabeled_nodes = corrupt(&graph, start_node, goal_node, cfg.corrupt_route_fraction, &mut rng);

    ScenarioRecord {
        scenario_id: format!("isec_{seed}_{index:04}"),
        scenario_type: scenario_type.as_str().to_string(),
        lanes,
        graph_params: cfg.graph_params,
        speed_limit: v_lim,
        graph,
        drivable_area,
        agents,
        sdv_history,
        sdv_footprint: VEHICLE,
        start_node,
        goal_node,
        mislabeled_nodes,
        expert_future,
        expert_log,
    }
}

fn last_snippet(graph: &LaneGraph, lane_id: u32) -> NodeId {
    graph
        .nodes()
        .iter()
        .filter(|n| n.lane_id == lane_id)
        .max_by(|a, b| a.lane_range.0.total_cmp(&b.lane_range.0))
        .expect("exit lane has snippets")
        .id
}

/// Flips route labels of on-route nodes and their off-route neighbours.
fn corrupt(graph: &LaneGraph, start: NodeId, goal: NodeId, fraction: f64, rng: &mut impl Rng) -> Vec<NodeId> {
    if fraction <= 0.0 {
        return Vec::new();
    }
    let route = crate::lane_graph::compute_route_mask(graph, start, goal).expect("generated goal is reachable");
    let mut candidates: BTreeSet<NodeId> = route.on_route_nodes.clone();
    for &u in &route.on_route_nodes {
        candidates.extend(graph.next_nodes(u));
    }
    candidates.remove(&start);
    candidates.into_iter().filter(|_| rng.random_bool(fraction.min(1.0))).collect()
}
