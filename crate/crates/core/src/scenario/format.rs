//! Scenario file reading and writing.
//!
//! The file is a single JSON object `{"format_version":1,"scenarios":[...]}`
//! with one scenario per line, so fixtures diff cleanly. Floats are written
//! in shortest round-trip form.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AgentClass, AgentState, AgentTrack, Footprint, ScenarioRecord, Trajectory};
use super::{HISTORY_STEPS, HORIZON_STEPS, SIM_STEPS};
use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::lane_graph::{build_graph, CentrelinePoint, GraphParams, Pose, RawLane};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileDoc {
    format_version: u32,
    scenarios: Vec<ScenarioDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioDoc {
    scenario_id: String,
    scenario_type: String,
    map: MapDoc,
    agents: Vec<AgentDoc>,
    sdv: SdvDoc,
    route: RouteDoc,
    expert_future: Vec<[f64; 2]>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MapDoc {
    lanes: Vec<LaneDoc>,
    drivable_area: Vec<Vec<[f64; 2]>>,
    speed_limit: f64,
    snippet_length_max: f64,
    max_points: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LaneDoc {
    id: u32,
    /// `[x, y, heading]`, or `[x, y, heading, stop_line, crosswalk]` with 0/1 flags.
    points: Vec<Vec<f64>>,
    successors: Vec<u32>,
    neighbours: Vec<u32>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AgentDoc {
    agent_id: u32,
    class: AgentClass,
    footprint: [f64; 2],
    history: Vec<[f64; 6]>,
    future_playback: Vec<[f64; 6]>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SdvDoc {
    history: Vec<[f64; 6]>,
    footprint: [f64; 2],
    future_playback: Vec<[f64; 6]>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RouteDoc {
    start_node: usize,
    goal_node: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    mislabeled: Vec<usize>,
}

pub fn load_scenarios(path: impl AsRef<Path>) -> Result<Vec<ScenarioRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_scenarios(&text)
}

pub fn parse_scenarios(text: &str) -> Result<Vec<ScenarioRecord>> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let doc: FileDoc = serde_path_to_error::deserialize(de).map_err(|e| Error::Schema {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })?;
    if doc.format_version != FORMAT_VERSION {
        return Err(Error::Schema {
            path: "format_version".into(),
            message: format!("unsupported version {}, expected {FORMAT_VERSION}", doc.format_version),
        });
    }
    doc.scenarios.into_iter().enumerate().map(|(i, s)| from_doc(i, s)).collect()
}

pub fn save_scenarios(path: impl AsRef<Path>, records: &[ScenarioRecord]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, scenarios_to_string(records)).map_err(|e| Error::io(path, e))
}

pub fn scenarios_to_string(records: &[ScenarioRecord]) -> String {
    let mut out = format!("{{\"format_version\":{FORMAT_VERSION},\"scenarios\":[\n");
    for (i, r) in records.iter().enumerate() {
        if i > 0 {
            out.push_str(",\n");
        }
        out.push_str(&serde_json::to_string(&to_doc(r)).expect("scenario documents always serialize"));
    }
    out.push_str("\n]}\n");
    out
}

fn to_doc(r: &ScenarioRecord) -> ScenarioDoc {
    let states = |v: &[AgentState]| v.iter().map(|s| s.to_array()).collect::<Vec<_>>();
    ScenarioDoc {
        scenario_id: r.scenario_id.clone(),
        scenario_type: r.scenario_type.clone(),
        map: MapDoc {
            lanes: r
                .lanes
                .iter()
                .map(|l| LaneDoc {
                    id: l.id,
                    points: l
                        .points
                        .iter()
                        .map(|p| {
                            let mut v = vec![p.pose.x, p.pose.y, p.pose.heading];
                            if p.stop_line || p.crosswalk {
                                v.push(f64::from(u8::from(p.stop_line)));
                                v.push(f64::from(u8::from(p.crosswalk)));
                            }
                            v
                        })
                        .collect(),
                    successors: l.successors.clone(),
                    neighbours: l.neighbours.clone(),
                })
                .collect(),
            drivable_area: r
                .drivable_area
                .iter()
                .map(|poly| poly.iter().map(|p| [p.x, p.y]).collect())
                .collect(),
            speed_limit: r.speed_limit,
            snippet_length_max: r.graph_params.snippet_length_max,
            max_points: r.graph_params.max_points,
        },
        agents: r
            .agents
            .iter()
            .map(|a| AgentDoc {
                agent_id: a.agent_id,
                class: a.class,
                footprint: [a.footprint.length, a.footprint.width],
                history: states(&a.history),
                future_playback: states(&a.future_playback),
            })
            .collect(),
        sdv: SdvDoc {
            history: states(&r.sdv_history),
            footprint: [r.sdv_footprint.length, r.sdv_footprint.width],
            future_playback: states(&r.expert_log),
        },
        route: RouteDoc {
            start_node: r.start_node,
            goal_node: r.goal_node,
            mislabeled: r.mislabeled_nodes.clone(),
        },
        expert_future: r.expert_future.waypoints.iter().map(|p| [p.x, p.y]).collect(),
    }
}

fn from_doc(index: usize, d: ScenarioDoc) -> Result<ScenarioRecord> {
    let invariant = |invariant: &'static str, detail: String| Error::Invariant { index, invariant, detail };
    let schema = |path: String, message: String| Error::Schema { path: format!("scenarios[{index}].{path}"), message };

    let mut lanes = Vec::with_capacity(d.map.lanes.len());
    for (li, l) in d.map.lanes.into_iter().enumerate() {
        let mut points = Vec::with_capacity(l.points.len());
        for (pi, p) in l.points.iter().enumerate() {
            let flag = |v: f64| v != 0.0;
            let point = match p.as_slice() {
                [x, y, h] => CentrelinePoint::plain(Pose::new(*x, *y, *h)),
                [x, y, h, s, c] => CentrelinePoint {
                    pose: Pose::new(*x, *y, *h),
                    stop_line: flag(*s),
                    crosswalk: flag(*c),
                },
                _ => {
                    return Err(schema(
                        format!("map.lanes[{li}].points[{pi}]"),
                        format!("expected 3 or 5 numbers, got {}", p.len()),
                    ))
                }
            };
            if !(point.pose.x.is_finite() && point.pose.y.is_finite() && point.pose.heading.is_finite()) {
                return Err(invariant("lane points finite", format!("lane {} point {pi}", l.id)));
            }
            points.push(point);
        }
        lanes.push(RawLane { id: l.id, points, successors: l.successors, neighbours: l.neighbours });
    }

    let graph_params = GraphParams { snippet_length_max: d.map.snippet_length_max, max_points: d.map.max_points };
    let graph = build_graph(&lanes, graph_params).map_err(|e| invariant("map.lanes form a valid lane graph", e.to_string()))?;

    if !(d.map.speed_limit > 0.0 && d.map.speed_limit.is_finite()) {
        return Err(invariant("map.speed_limit > 0", d.map.speed_limit.to_string()));
    }
    for (name, id) in [("route.start_node", d.route.start_node), ("route.goal_node", d.route.goal_node)] {
        if id >= graph.len() {
            return Err(invariant(
                if name == "route.start_node" { "route.start_node is a graph node" } else { "route.goal_node is a graph node" },
                format!("{name} = {id} but the graph has {} nodes", graph.len()),
            ));
        }
    }
    if let Some(bad) = d.route.mislabeled.iter().find(|&&n| n >= graph.len()) {
        return Err(invariant("route.mislabeled are graph nodes", format!("node {bad}")));
    }

    let footprint = |f: [f64; 2], what: &'static str| -> Result<Footprint> {
        if f[0] > 0.0 && f[1] > 0.0 && f[0].is_finite() && f[1].is_finite() {
            Ok(Footprint { length: f[0], width: f[1] })
        } else {
            Err(invariant(what, format!("{f:?}")))
        }
    };
    let states = |v: &[[f64; 6]], expected: usize, what: &'static str| -> Result<Vec<AgentState>> {
        if v.len() != expected {
            return Err(invariant(what, format!("expected {expected} states, got {}", v.len())));
        }
        let out: Vec<AgentState> = v.iter().map(|a| AgentState::from_array(*a)).collect();
        if let Some(i) = out.iter().position(|s| !s.is_valid()) {
            return Err(invariant("agent states finite with v >= 0", format!("{what}: state {i}")));
        }
        Ok(out)
    };

    let mut agents = Vec::with_capacity(d.agents.len());
    for a in &d.agents {
        agents.push(AgentTrack {
            agent_id: a.agent_id,
            class: a.class,
            footprint: footprint(a.footprint, "agent footprint positive")?,
            history: states(&a.history, HISTORY_STEPS, "agent history has 5 states")?,
            future_playback: states(&a.future_playback, SIM_STEPS, "agent playback has 30 states")?,
        });
    }
    let sdv_history = states(&d.sdv.history, HISTORY_STEPS, "sdv history has 5 states")?;
    let expert_log = states(&d.sdv.future_playback, SIM_STEPS, "sdv playback has 30 states")?;

    if d.expert_future.len() != HORIZON_STEPS {
        return Err(invariant(
            "expert_future has 16 waypoints",
            format!("got {}", d.expert_future.len()),
        ));
    }
    let waypoints: Vec<Vec2> = d.expert_future.iter().map(|p| Vec2::new(p[0], p[1])).collect();
    if !waypoints.iter().all(|p| p.is_finite()) {
        return Err(invariant("expert_future finite", String::new()));
    }
    for (i, (w, s)) in waypoints.iter().zip(&expert_log).enumerate() {
        if w.distance(s.position()) > 1e-6 {
            return Err(invariant(
                "expert_future matches sdv playback",
                format!("waypoint {i} is {:.3} m from the logged state", w.distance(s.position())),
            ));
        }
    }

    Ok(ScenarioRecord {
        scenario_id: d.scenario_id,
        scenario_type: d.scenario_type,
        lanes,
        graph_params,
        speed_limit: d.map.speed_limit,
        graph,
        drivable_area: d
            .map
            .drivable_area
            .iter()
            .map(|poly| poly.iter().map(|p| Vec2::new(p[0], p[1])).collect())
            .collect(),
        agents,
        sdv_history,
        sdv_footprint: footprint(d.sdv.footprint, "sdv footprint positive")?,
        start_node: d.route.start_node,
        goal_node: d.route.goal_node,
        mislabeled_nodes: d.route.mislabeled,
        expert_future: Trajectory::new(waypoints),
        expert_log,
    })
}
