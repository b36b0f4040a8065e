//! Directed lane graph over centreline snippets.
//!
//! Lanes are cut into snippets of near-equal length; each snippet becomes a
//! node. Successor edges follow traffic flow, proximal edges connect laterally
//! adjacent snippets of neighbouring lanes, and every node owns exactly one
//! terminal edge that ends a traversal.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, VecDeque};

use crate::error::{Error, Result};
use crate::geometry::{heading_difference, normalize_angle, Polyline, Vec2};

pub type NodeId = usize;

/// Maximum end-to-start distance between a lane and its successor.
pub const SUCCESSOR_GAP_TOLERANCE: f64 = 1.0;

/// Minimum arc-length overlap, as a fraction of the shorter snippet, for a
/// proximal edge.
pub const PROXIMAL_OVERLAP_FRACTION: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self { x, y, heading: normalize_angle(heading) }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CentrelinePoint {
    pub pose: Pose,
    pub stop_line: bool,
    pub crosswalk: bool,
}

impl CentrelinePoint {
    pub fn plain(pose: Pose) -> Self {
        Self { pose, stop_line: false, crosswalk: false }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LaneNode {
    pub id: NodeId,
    pub points: Vec<CentrelinePoint>,
    pub arc_length: f64,
    /// Raw lane this snippet was cut from.
    pub lane_id: u32,
    /// Arc interval covered within the raw lane.
    pub lane_range: (f64, f64),
    polyline: Polyline,
}

impl LaneNode {
    pub fn new(id: NodeId, points: Vec<CentrelinePoint>, lane_id: u32, lane_range: (f64, f64)) -> Self {
        let polyline = Polyline::new(points.iter().map(|p| p.pose.position()).collect());
        Self { id, arc_length: polyline.length(), points, lane_id, lane_range, polyline }
    }

    /// Snippet from bare positions; headings follow the segment directions.
    pub fn from_positions(id: NodeId, positions: &[Vec2]) -> Self {
        let line = Polyline::new(positions.to_vec());
        let mut arc = 0.0;
        let points = positions
            .iter()
            .enumerate()
            .map(|(i, p)| {
                if i > 0 {
                    arc += p.distance(positions[i - 1]);
                }
                CentrelinePoint::plain(Pose::new(p.x, p.y, line.heading_at(arc)))
            })
            .collect();
        Self::new(id, points, id as u32, (0.0, line.length()))
    }

    pub fn polyline(&self) -> &Polyline {
        &self.polyline
    }

    pub fn start(&self) -> Vec2 {
        self.polyline.first()
    }

    pub fn end(&self) -> Vec2 {
        self.polyline.last()
    }

    pub fn end_heading(&self) -> f64 {
        self.polyline.end_heading()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EdgeKind {
    Successor,
    Proximal,
    Terminal,
}

impl EdgeKind {
    pub fn index(self) -> usize {
        match self {
            EdgeKind::Successor => 0,
            EdgeKind::Proximal => 1,
            EdgeKind::Terminal => 2,
        }
    }
}

/// A directed edge; `to == None` marks the terminal edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Edge {
    pub from: NodeId,
    pub to: Option<NodeId>,
    pub kind: EdgeKind,
}

impl Edge {
    pub fn is_terminal(&self) -> bool {
        self.kind == EdgeKind::Terminal
    }
}

/// Raw lane centreline with topology, as read from a map.
#[derive(Clone, Debug, PartialEq)]
pub struct RawLane {
    pub id: u32,
    pub points: Vec<CentrelinePoint>,
    pub successors: Vec<u32>,
    pub neighbours: Vec<u32>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GraphParams {
    pub snippet_length_max: f64,
    pub max_points: usize,
}

impl Default for GraphParams {
    fn default() -> Self {
        Self { snippet_length_max: 20.0, max_points: 20 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LaneGraph {
    nodes: Vec<LaneNode>,
    edges: Vec<Vec<Edge>>,
}

impl LaneGraph {
    /// Assembles a graph from snippets and explicit edge lists. Node ids must
    /// equal their position; a terminal edge is appended to every node.
    pub fn from_parts(
        nodes: Vec<LaneNode>,
        successors: &[(NodeId, NodeId)],
        proximals: &[(NodeId, NodeId)],
    ) -> Result<Self> {
        for (i, n) in nodes.iter().enumerate() {
            if n.id != i {
                return Err(Error::GraphParam(format!("node at position {i} carries id {}", n.id)));
            }
            if n.points.is_empty() {
                return Err(Error::GraphParam(format!("node {i} has no points")));
            }
        }
        let mut succ: Vec<BTreeSet<NodeId>> = vec![BTreeSet::new(); nodes.len()];
        let mut prox: Vec<BTreeSet<NodeId>> = vec![BTreeSet::new(); nodes.len()];
        for (list, sets) in [(successors, &mut succ), (proximals, &mut prox)] {
            for &(from, to) in list {
                if from >= nodes.len() || to >= nodes.len() {
                    return Err(Error::InvalidEdge { from, to, reason: "endpoint out of range" });
                }
                if from == to {
                    return Err(Error::InvalidEdge { from, to, reason: "self-loop" });
                }
                sets[from].insert(to);
            }
        }
        let edges = (0..nodes.len())
            .map(|u| {
                let mut out: Vec<Edge> = succ[u]
                    .iter()
                    .map(|&v| Edge { from: u, to: Some(v), kind: EdgeKind::Successor })
                    .collect();
                out.extend(
                    prox[u]
                        .iter()
                        .filter(|v| !succ[u].contains(v))
                        .map(|&v| Edge { from: u, to: Some(v), kind: EdgeKind::Proximal }),
                );
                out.push(Edge { from: u, to: None, kind: EdgeKind::Terminal });
                out
            })
            .collect();
        Ok(Self { nodes, edges })
    }

    pub fn nodes(&self) -> &[LaneNode] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &LaneNode {
        &self.nodes[id]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn contains(&self, id: NodeId) -> bool {
        id < self.nodes.len()
    }

    /// Outgoing edges of `u`; the terminal edge is always last.
    pub fn out_edges(&self, u: NodeId) -> &[Edge] {
        &self.edges[u]
    }

    pub fn edge_count(&self) -> usize {
        self.edges.iter().map(Vec::len).sum()
    }

    /// Non-terminal neighbours of `u`.
    pub fn next_nodes(&self, u: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.edges[u].iter().filter_map(|e| e.to)
    }

    pub fn edge_between(&self, u: NodeId, v: NodeId) -> Option<&Edge> {
        self.edges[u].iter().find(|e| e.to == Some(v))
    }

    pub fn terminal_edge(&self, u: NodeId) -> &Edge {
        self.edges[u].last().expect("every node owns a terminal edge")
    }

    fn forward_reachable(&self, start: NodeId) -> Vec<bool> {
        let mut seen = vec![false; self.len()];
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(u) = queue.pop_front() {
            for v in self.next_nodes(u) {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        seen
    }

    fn backward_reachable(&self, goal: NodeId) -> Vec<bool> {
        let mut incoming: Vec<Vec<NodeId>> = vec![Vec::new(); self.len()];
        for u in 0..self.len() {
            for v in self.next_nodes(u) {
                incoming[v].push(u);
            }
        }
        let mut seen = vec![false; self.len()];
        let mut queue = VecDeque::from([goal]);
        seen[goal] = true;
        while let Some(v) = queue.pop_front() {
            for &u in &incoming[v] {
                if !seen[u] {
                    seen[u] = true;
                    queue.push_back(u);
                }
            }
        }
        seen
    }

    /// Dijkstra over successor/proximal edges. The start node is entered at
    /// `start_arc`, so distances measure arc length from that point to each
    /// node's first point. Proximal edges cost `proximal_cost`.
    pub fn distances_from(&self, start: NodeId, start_arc: f64, proximal_cost: f64) -> (Vec<f64>, Vec<Option<NodeId>>) {
        let mut dist = vec![f64::INFINITY; self.len()];
        let mut prev = vec![None; self.len()];
        let mut heap = BinaryHeap::new();
        dist[start] = -start_arc;
        heap.push(HeapEntry { cost: -start_arc, node: start });
        while let Some(HeapEntry { cost, node }) = heap.pop() {
            if cost > dist[node] {
                continue;
            }
            for e in self.out_edges(node) {
                let Some(v) = e.to else { continue };
                let step = match e.kind {
                    EdgeKind::Successor => self.nodes[node].arc_length,
                    _ => proximal_cost,
                };
                let next = cost + step;
                if next < dist[v] {
                    dist[v] = next;
                    prev[v] = Some(node);
                    heap.push(HeapEntry { cost: next, node: v });
                }
            }
        }
        (dist, prev)
    }

    /// Cheapest node sequence from `start` to `goal`.
    pub fn shortest_path(&self, start: NodeId, goal: NodeId, proximal_cost: f64) -> Option<Vec<NodeId>> {
        let (dist, prev) = self.distances_from(start, 0.0, proximal_cost);
        if !dist[goal].is_finite() {
            return None;
        }
        let mut path = vec![goal];
        let mut cur = goal;
        while let Some(p) = prev[cur] {
            path.push(p);
            cur = p;
        }
        path.reverse();
        Some(path)
    }
}

#[derive(PartialEq)]
struct HeapEntry {
    cost: f64,
    node: NodeId,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.cost.total_cmp(&self.cost).then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Cuts raw lanes into snippets and wires successor, proximal and terminal edges.
pub fn build_graph(lanes: &[RawLane], params: GraphParams) -> Result<LaneGraph> {
    if !(params.snippet_length_max > 0.0 && params.snippet_length_max.is_finite()) {
        return Err(Error::GraphParam(format!(
            "snippet_length_max must be positive, got {}",
            params.snippet_length_max
        )));
    }
    if params.max_points < 2 {
        return Err(Error::GraphParam(format!("max_points must be at least 2, got {}", params.max_points)));
    }
    let index: BTreeMap<u32, usize> = lanes.iter().enumerate().map(|(i, l)| (l.id, i)).collect();
    if index.len() != lanes.len() {
        return Err(Error::GraphParam("duplicate lane ids".into()));
    }
    for lane in lanes {
        if lane.points.len() < 2 {
            return Err(Error::DegenerateLane { lane: lane.id });
        }
        for r in lane.successors.iter().chain(&lane.neighbours) {
            if !index.contains_key(r) {
                return Err(Error::DanglingLane { lane: lane.id, reference: *r });
            }
        }
    }

    let lines: Vec<Polyline> = lanes
        .iter()
        .map(|l| Polyline::new(l.points.iter().map(|p| p.pose.position()).collect()))
        .collect();

    let mut nodes = Vec::new();
    let mut lane_nodes: Vec<Vec<NodeId>> = Vec::with_capacity(lanes.len());
    for (lane, line) in lanes.iter().zip(&lines) {
        let total = line.length();
        if total <= 0.0 {
            return Err(Error::DegenerateLane { lane: lane.id });
        }
        let count = ((total / params.snippet_length_max) - 1e-9).ceil().max(1.0) as usize;
        let piece = total / count as f64;
        let mut ids = Vec::with_capacity(count);
        for k in 0..count {
            let from = piece * k as f64;
            let to = if k + 1 == count { total } else { piece * (k + 1) as f64 };
            let points = snippet_points(lane, line, from, to, params.max_points);
            let id = nodes.len();
            nodes.push(LaneNode::new(id, points, lane.id, (from, to)));
            ids.push(id);
        }
        lane_nodes.push(ids);
    }

    let mut successors = Vec::new();
    for (li, lane) in lanes.iter().enumerate() {
        let ids = &lane_nodes[li];
        successors.extend(ids.windows(2).map(|w| (w[0], w[1])));
        let last = *ids.last().expect("lane has at least one snippet");
        for s in &lane.successors {
            let si = index[s];
            let gap = lines[li].last().distance(lines[si].first());
            if gap > SUCCESSOR_GAP_TOLERANCE {
                return Err(Error::SuccessorGap { from: lane.id, to: *s, gap });
            }
            successors.push((last, lane_nodes[si][0]));
        }
    }

    let mut pairs = BTreeSet::new();
    for (li, lane) in lanes.iter().enumerate() {
        for n in &lane.neighbours {
            let ni = index[n];
            if ni != li {
                pairs.insert((li, ni));
                pairs.insert((ni, li));
            }
        }
    }
    let mut proximals = Vec::new();
    for &(a, b) in &pairs {
        for &u in &lane_nodes[a] {
            let node = &nodes[u];
            let s0 = lines[b].project(node.start()).arc;
            let s1 = lines[b].project(node.end()).arc;
            let (lo, hi) = if s0 <= s1 { (s0, s1) } else { (s1, s0) };
            let own = node.lane_range.1 - node.lane_range.0;
            for &v in &lane_nodes[b] {
                let (b0, b1) = nodes[v].lane_range;
                let overlap = (hi.min(b1) - lo.max(b0)).max(0.0);
                let shorter = own.min(b1 - b0);
                if overlap > 0.0 && overlap >= PROXIMAL_OVERLAP_FRACTION * shorter - 1e-9 {
                    proximals.push((u, v));
                }
            }
        }
    }

    LaneGraph::from_parts(nodes, &successors, &proximals)
}

fn snippet_points(lane: &RawLane, line: &Polyline, from: f64, to: f64, count: usize) -> Vec<CentrelinePoint> {
    let spacing = (to - from) / (count - 1) as f64;
    // arc position of each raw vertex, for carrying the stop-line / crosswalk flags
    let mut raw_arcs = Vec::with_capacity(lane.points.len());
    let mut acc = 0.0;
    for (i, p) in lane.points.iter().enumerate() {
        if i > 0 {
            acc += p.pose.position().distance(lane.points[i - 1].pose.position());
        }
        raw_arcs.push(acc);
    }
    (0..count)
        .map(|i| {
            let s = if i + 1 == count { to } else { from + spacing * i as f64 };
            let p = line.point_at(s);
            let heading = if i + 1 == count { line.heading_at(s - 1e-9) } else { line.heading_at(s) };
            let near = |flag: fn(&CentrelinePoint) -> bool| {
                lane.points
                    .iter()
                    .zip(&raw_arcs)
                    .any(|(rp, &a)| flag(rp) && (a - s).abs() <= spacing / 2.0)
            };
            CentrelinePoint {
                pose: Pose::new(p.x, p.y, heading),
                stop_line: near(|c| c.stop_line),
                crosswalk: near(|c| c.crosswalk),
            }
        })
        .collect()
}

/// On-route node set and the edges between on-route nodes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RouteMask {
    pub on_route_nodes: BTreeSet<NodeId>,
    pub route_edges: BTreeSet<(NodeId, Option<NodeId>)>,
}

impl RouteMask {
    /// Derives the edge set from a node set: an edge is on-route iff both ends
    /// are, or it is the terminal edge of an on-route node.
    pub fn from_nodes(graph: &LaneGraph, on_route_nodes: BTreeSet<NodeId>) -> Self {
        let mut route_edges = BTreeSet::new();
        for &u in &on_route_nodes {
            for e in graph.out_edges(u) {
                match e.to {
                    None => {
                        route_edges.insert((u, None));
                    }
                    Some(v) if on_route_nodes.contains(&v) => {
                        route_edges.insert((u, Some(v)));
                    }
                    Some(_) => {}
                }
            }
        }
        Self { on_route_nodes, route_edges }
    }

    /// Whether the masks keep `edge`. Terminal edges are always kept.
    pub fn allows(&self, edge: &Edge) -> bool {
        edge.is_terminal() || self.route_edges.contains(&(edge.from, edge.to))
    }

    pub fn contains_node(&self, id: NodeId) -> bool {
        self.on_route_nodes.contains(&id)
    }

    /// The same mask with the on-route label of `nodes` flipped.
    pub fn with_flipped(&self, graph: &LaneGraph, nodes: &[NodeId]) -> Self {
        let mut set = self.on_route_nodes.clone();
        for n in nodes {
            if !set.remove(n) {
                set.insert(*n);
            }
        }
        Self::from_nodes(graph, set)
    }
}

/// Nodes reachable from `start` that can still reach `goal`.
pub fn compute_route_mask(graph: &LaneGraph, start: NodeId, goal: NodeId) -> Result<RouteMask> {
    for id in [start, goal] {
        if !graph.contains(id) {
            return Err(Error::UnknownNode(id));
        }
    }
    let fwd = graph.forward_reachable(start);
    if !fwd[goal] {
        return Err(Error::EmptyRoute { start, goal });
    }
    let bwd = graph.backward_reachable(goal);
    let nodes = (0..graph.len()).filter(|&v| fwd[v] && bwd[v]).collect();
    Ok(RouteMask::from_nodes(graph, nodes))
}

/// Closest node to the pose; ties go to the better heading match, then the
/// smaller id.
pub fn assign_sdv_node(graph: &LaneGraph, pose: &Pose) -> NodeId {
    const TIE: f64 = 1e-9;
    let p = pose.position();
    let mut best: Option<(f64, f64, NodeId)> = None;
    for node in graph.nodes() {
        let proj = node.polyline().project(p);
        let dh = heading_difference(pose.heading, proj.heading);
        let better = match best {
            None => true,
            Some((d, h, _)) => {
                proj.distance < d - TIE || ((proj.distance - d).abs() <= TIE && dh < h - TIE)
            }
        };
        if better {
            best = Some((proj.distance, dh, node.id));
        }
    }
    best.expect("graph must be nonempty").2
}

#[cfg(test)]
mod tests {
    use super::*;

    fn straight_lane(id: u32, from: (f64, f64), to: (f64, f64)) -> RawLane {
        let h = (to.1 - from.1).atan2(to.0 - from.0);
        RawLane {
            id,
            points: vec![
                CentrelinePoint::plain(Pose::new(from.0, from.1, h)),
                CentrelinePoint::plain(Pose::new(to.0, to.1, h)),
            ],
            successors: vec![],
            neighbours: vec![],
        }
    }

    fn count(graph: &LaneGraph, kind: EdgeKind) -> usize {
        (0..graph.len()).flat_map(|u| graph.out_edges(u)).filter(|e| e.kind == kind).count()
    }

    fn params() -> GraphParams {
        GraphParams { snippet_length_max: 20.0, max_points: 10 }
    }

    #[test]
    fn single_lane_splits_into_two() {
        let g = build_graph(&[straight_lane(1, (0.0, 0.0), (40.0, 0.0))], params()).unwrap();
        assert_eq!(g.len(), 2);
        assert_eq!(count(&g, EdgeKind::Successor), 1);
        assert_eq!(count(&g, EdgeKind::Terminal), 2);
        for n in g.nodes() {
            assert!((n.arc_length - 20.0).abs() < 1e-9);
            assert_eq!(n.points.len(), 10);
        }
    }

    #[test]
    fn near_equal_split_avoids_short_tail() {
        let g = build_graph(&[straight_lane(1, (0.0, 0.0), (41.0, 0.0))], params()).unwrap();
        assert_eq!(g.len(), 3);
        for n in g.nodes() {
            assert!((n.arc_length - 41.0 / 3.0).abs() < 1e-9);
        }
    }

    #[test]
    fn parallel_neighbours_get_proximal_edges_both_ways() {
        let mut a = straight_lane(1, (0.0, 0.0), (20.0, 0.0));
        a.neighbours.push(2);
        let b = straight_lane(2, (0.0, 3.5), (20.0, 3.5));
        let g = build_graph(&[a, b], params()).unwrap();
        assert_eq!(g.len(), 2);
        assert_eq!(count(&g, EdgeKind::Proximal), 2);
        assert_eq!(count(&g, EdgeKind::Terminal), 2);
        assert_eq!(count(&g, EdgeKind::Successor), 0);
    }

    #[test]
    fn y_fork_has_two_successors() {
        let mut root = straight_lane(1, (0.0, 0.0), (20.0, 0.0));
        root.successors = vec![2, 3];
        let left = straight_lane(2, (20.0, 0.0), (36.0, 12.0));
        let right = straight_lane(3, (20.0, 0.0), (36.0, -12.0));
        let g = build_graph(&[root, left, right], params()).unwrap();
        assert_eq!(g.len(), 3);
        let succ: Vec<_> = g.out_edges(0).iter().filter(|e| e.kind == EdgeKind::Successor).collect();
        assert_eq!(succ.len(), 2);
        assert!(g.out_edges(0).last().unwrap().is_terminal());
    }

    #[test]
    fn dangling_reference_names_lane() {
        let mut a = straight_lane(7, (0.0, 0.0), (20.0, 0.0));
        a.successors.push(99);
        match build_graph(&[a], params()) {
            Err(Error::DanglingLane { lane, reference }) => {
                assert_eq!((lane, reference), (7, 99));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn successor_gap_is_rejected() {
        let mut a = straight_lane(1, (0.0, 0.0), (20.0, 0.0));
        a.successors.push(2);
        let b = straight_lane(2, (25.0, 0.0), (45.0, 0.0));
        assert!(matches!(build_graph(&[a, b], params()), Err(Error::SuccessorGap { .. })));
    }

    #[test]
    fn proximal_needs_half_overlap() {
        // lane 2 is shifted by 15 m: overlap 5 m of 20 m snippets
        let mut a = straight_lane(1, (0.0, 0.0), (20.0, 0.0));
        a.neighbours.push(2);
        let b = straight_lane(2, (15.0, 3.5), (35.0, 3.5));
        let g = build_graph(&[a, b], params()).unwrap();
        assert_eq!(count(&g, EdgeKind::Proximal), 0);
    }

    fn chain_graph(n: usize, edges: &[(usize, usize)]) -> LaneGraph {
        let nodes = (0..n)
            .map(|i| LaneNode::from_positions(i, &[Vec2::new(i as f64 * 10.0, 0.0), Vec2::new(i as f64 * 10.0 + 10.0, 0.0)]))
            .collect();
        LaneGraph::from_parts(nodes, edges, &[]).unwrap()
    }

    #[test]
    fn route_mask_zero_length() {
        let g = chain_graph(3, &[(0, 1), (1, 2)]);
        let m = compute_route_mask(&g, 0, 0).unwrap();
        assert_eq!(m.on_route_nodes, BTreeSet::from([0]));
    }

    #[test]
    fn route_mask_chain() {
        let g = chain_graph(3, &[(0, 1), (1, 2)]);
        let m = compute_route_mask(&g, 0, 2).unwrap();
        assert_eq!(m.on_route_nodes, BTreeSet::from([0, 1, 2]));
        assert!(m.route_edges.contains(&(0, Some(1))));
        assert!(m.route_edges.contains(&(2, None)));
    }

    #[test]
    fn route_mask_diamond_excludes_branch() {
        // A=0, B=1, C=2, D=3, E=4
        let g = chain_graph(5, &[(0, 1), (0, 2), (1, 3), (2, 3), (0, 4)]);
        let m = compute_route_mask(&g, 0, 3).unwrap();
        assert_eq!(m.on_route_nodes, BTreeSet::from([0, 1, 2, 3]));
        assert!(!m.allows(g.edge_between(0, 4).unwrap()));
        assert!(m.allows(g.terminal_edge(4)));
    }

    #[test]
    fn unreachable_goal_is_empty_route() {
        let g = chain_graph(3, &[(0, 1)]);
        assert!(matches!(compute_route_mask(&g, 0, 2), Err(Error::EmptyRoute { start: 0, goal: 2 })));
        assert!(matches!(compute_route_mask(&g, 0, 9), Err(Error::UnknownNode(9))));
    }

    #[test]
    fn assign_on_centreline() {
        let g = chain_graph(5, &[(0, 1), (1, 2), (2, 3), (3, 4)]);
        assert_eq!(assign_sdv_node(&g, &Pose::new(35.0, 0.0, 0.0)), 3);
    }

    #[test]
    fn assign_heading_tie_break() {
        // node 0 runs west, node 1 runs east; SDV midway heading east
        let nodes = vec![
            LaneNode::from_positions(0, &[Vec2::new(20.0, 2.0), Vec2::new(0.0, 2.0)]),
            LaneNode::from_positions(1, &[Vec2::new(0.0, -2.0), Vec2::new(20.0, -2.0)]),
        ];
        let g = LaneGraph::from_parts(nodes, &[], &[]).unwrap();
        assert_eq!(assign_sdv_node(&g, &Pose::new(10.0, 0.0, 0.0)), 1);
        assert_eq!(assign_sdv_node(&g, &Pose::new(10.0, 0.0, std::f64::consts::PI)), 0);
    }

    #[test]
    fn assign_prefers_nearer_polyline() {
        let nodes = vec![
            LaneNode::from_positions(0, &[Vec2::new(0.0, 5.0), Vec2::new(20.0, 5.0)]),
            LaneNode::from_positions(1, &[Vec2::new(0.0, 1.3), Vec2::new(20.0, 1.3)]),
            LaneNode::from_positions(2, &[Vec2::new(0.0, -1.8), Vec2::new(20.0, -1.8)]),
        ];
        let g = LaneGraph::from_parts(nodes, &[], &[]).unwrap();
        // distances 5.0, 1.3, 1.8
        assert_eq!(assign_sdv_node(&g, &Pose::new(10.0, 0.0, 0.0)), 1);
    }

    #[test]
    fn from_parts_rejects_self_loops() {
        let nodes = vec![LaneNode::from_positions(0, &[Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0)])];
        assert!(LaneGraph::from_parts(nodes, &[(0, 0)], &[]).is_err());
    }

    #[test]
    fn shortest_path_follows_successors() {
        let g = chain_graph(5, &[(0, 1), (0, 2), (1, 3), (2, 3), (0, 4)]);
        assert_eq!(g.shortest_path(0, 3, 5.0), Some(vec![0, 1, 3]));
        assert_eq!(g.shortest_path(3, 0, 5.0), None);
    }
}
