//! Expert traversal labels.
//!
//! The SDV position at t = 0 and the expert waypoints are assigned to graph
//! nodes jointly: each waypoint may stay on the previous node or advance up to
//! two edges, and the assignment with the smallest summed projection distance
//! wins (a small per-hop penalty breaks ties toward fewer nodes). This keeps
//! the label on a connected path even where connector snippets overlap inside
//! an intersection.

use super::ScenarioRecord;
use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::lane_graph::{compute_route_mask, LaneGraph, NodeId};
use crate::traversal::Traversal;

/// Waypoints farther than this from their assigned node invalidate the label.
pub const LABEL_MAX_DISTANCE: f64 = 5.0;
const HOP_PENALTY: f64 = 0.01;

#[derive(Clone, Copy)]
struct Back {
    prev: NodeId,
    via: Option<NodeId>,
}

pub fn expert_traversal(record: &ScenarioRecord) -> Result<Traversal> {
    let mut points = vec![record.sdv_state().position()];
    points.extend(record.expert_future.waypoints.iter().copied());
    label_points(&record.graph, record.start_node, &points).map_err(|reason| Error::Labeling {
        scenario_id: record.scenario_id.clone(),
        reason,
    })
}

/// Node sequence best explaining `points`, which start on `start`.
pub(crate) fn label_points(graph: &LaneGraph, start: NodeId, points: &[Vec2]) -> std::result::Result<Traversal, String> {
    let n = graph.len();
    let dist = |p: Vec2, v: NodeId| graph.node(v).polyline().project(p).distance;

    // moves[u] = (target, intermediate, hops)
    let moves: Vec<Vec<(NodeId, Option<NodeId>, usize)>> = (0..n)
        .map(|u| {
            let mut out = vec![(u, None, 0)];
            for v in graph.next_nodes(u) {
                out.push((v, None, 1));
                for w in graph.next_nodes(v) {
                    if w != u {
                        out.push((w, Some(v), 2));
                    }
                }
            }
            out
        })
        .collect();

    let mut cost = vec![f64::INFINITY; n];
    cost[start] = dist(points[0], start);
    let mut back: Vec<Vec<Option<Back>>> = vec![vec![None; n]];
    for &p in &points[1..] {
        let mut next = vec![f64::INFINITY; n];
        let mut step = vec![None; n];
        let mut local = vec![f64::NAN; n];
        for u in 0..n {
            if !cost[u].is_finite() {
                continue;
            }
            for &(v, via, hops) in &moves[u] {
                if local[v].is_nan() {
                    local[v] = dist(p, v);
                }
                let c = cost[u] + local[v] + HOP_PENALTY * hops as f64;
                if c < next[v] {
                    next[v] = c;
                    step[v] = Some(Back { prev: u, via });
                }
            }
        }
        cost = next;
        back.push(step);
    }

    let mut end = None;
    for (v, c) in cost.iter().enumerate() {
        if c.is_finite() && end.is_none_or(|e: NodeId| *c < cost[e]) {
            end = Some(v);
        }
    }
    let mut current = end.ok_or("no node sequence explains the waypoints")?;

    let mut assigned = Vec::with_capacity(points.len());
    let mut reversed = vec![current];
    for i in (1..points.len()).rev() {
        assigned.push((i, current));
        let b = back[i][current].expect("finite cost has a back-pointer");
        if let Some(via) = b.via {
            reversed.push(via);
        }
        reversed.push(b.prev);
        current = b.prev;
    }
    assigned.push((0, current));
    for (i, v) in assigned {
        let d = dist(points[i], v);
        if d > LABEL_MAX_DISTANCE {
            return Err(format!("waypoint {i} is {d:.2} m from its nearest reachable node {v}"));
        }
    }
    reversed.reverse();
    reversed.dedup();
    Ok(Traversal { nodes: reversed, terminated: true })
}

/// Checks that the expert stays on the true route between start and goal.
pub fn check_route_consistency(record: &ScenarioRecord) -> Result<()> {
    let route = compute_route_mask(&record.graph, record.start_node, record.goal_node)?;
    let traversal = expert_traversal(record)?;
    match traversal.nodes.iter().find(|v| !route.contains_node(**v)) {
        None => Ok(()),
        Some(v) => Err(Error::Labeling {
            scenario_id: record.scenario_id.clone(),
            reason: format!("expert visits off-route node {v}"),
        }),
    }
}
