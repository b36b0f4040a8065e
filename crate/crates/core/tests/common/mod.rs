#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use laneplan::geometry::Vec2;
use laneplan::lane_graph::{compute_route_mask, LaneGraph, LaneNode, NodeId, RouteMask};
use laneplan::policy::EdgeDistribution;
use laneplan::traversal::Traversal;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A random graph, a distribution over its edges and a route from node 0.
pub struct Fixture {
    pub graph: LaneGraph,
    pub dist: EdgeDistribution,
    pub route: RouteMask,
    pub start: NodeId,
    pub goal: NodeId,
}

pub fn line_nodes(n: usize) -> Vec<LaneNode> {
    (0..n)
        .map(|i| LaneNode::from_positions(i, &[Vec2::new(i as f64 * 10.0, 0.0), Vec2::new(i as f64 * 10.0 + 10.0, 0.0)]))
        .collect()
}

pub type EdgeList = Vec<(NodeId, NodeId)>;

/// Random edges over `n` nodes. Successors point forward (`i < j`); with
/// `cyclic` set, proximal edges may point anywhere, closing cycles.
pub fn random_edges(rng: &mut ChaCha8Rng, n: usize, density: f64, cyclic: bool) -> (EdgeList, EdgeList) {
    let mut succ = Vec::new();
    let mut prox = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(density) {
                succ.push((i, j));
            }
        }
        if cyclic {
            for j in 0..n {
                if j != i && rng.random_bool(density / 2.0) {
                    prox.push((i, j));
                }
            }
        }
    }
    (succ, prox)
}

/// Random row-stochastic probabilities; about one edge in ten gets zero mass.
pub fn random_distribution(rng: &mut ChaCha8Rng, graph: &LaneGraph) -> EdgeDistribution {
    let probs: Vec<Vec<f64>> = (0..graph.len())
        .map(|u| {
            let k = graph.out_edges(u).len();
            let mut w: Vec<f64> = (0..k).map(|_| if rng.random_bool(0.1) { 0.0 } else { rng.random_range(0.01..1.0) }).collect();
            if w.iter().all(|x| *x == 0.0) {
                w[k - 1] = 1.0;
            }
            let total: f64 = w.iter().sum();
            w.iter().map(|x| x / total).collect()
        })
        .collect();
    EdgeDistribution::from_probs(graph, &probs)
}

pub fn random_fixture(seed: u64, nodes: std::ops::RangeInclusive<usize>, density: f64, cyclic: bool) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(nodes);
    let (succ, prox) = random_edges(&mut rng, n, density, cyclic);
    let graph = LaneGraph::from_parts(line_nodes(n), &succ, &prox).expect("valid fixture graph");
    let dist = random_distribution(&mut rng, &graph);
    let reachable = reachable_from(&graph, 0);
    let candidates: Vec<NodeId> = reachable.into_iter().collect();
    let goal = candidates[rng.random_range(0..candidates.len())];
    let route = compute_route_mask(&graph, 0, goal).expect("goal reachable by construction");
    Fixture { graph, dist, route, start: 0, goal }
}

pub fn reachable_from(graph: &LaneGraph, start: NodeId) -> BTreeSet<NodeId> {
    let mut seen = BTreeSet::from([start]);
    let mut stack = vec![start];
    while let Some(u) = stack.pop() {
        for v in graph.next_nodes(u) {
            if seen.insert(v) {
                stack.push(v);
            }
        }
    }
    seen
}

/// Union of the nodes of every simple path from `start` to `goal`.
pub fn simple_path_union(graph: &LaneGraph, start: NodeId, goal: NodeId) -> BTreeSet<NodeId> {
    fn walk(graph: &LaneGraph, path: &mut Vec<NodeId>, goal: NodeId, out: &mut BTreeSet<NodeId>) {
        let u = *path.last().unwrap();
        if u == goal {
            out.extend(path.iter().copied());
            return;
        }
        let next: Vec<NodeId> = graph.next_nodes(u).collect();
        for v in next {
            if !path.contains(&v) {
                path.push(v);
                walk(graph, path, goal, out);
                path.pop();
            }
        }
    }
    let mut out = BTreeSet::new();
    walk(graph, &mut vec![start], goal, &mut out);
    out
}

pub fn empirical(samples: &[Traversal]) -> BTreeMap<Traversal, f64> {
    let mut counts: BTreeMap<Traversal, f64> = BTreeMap::new();
    for t in samples {
        *counts.entry(t.clone()).or_default() += 1.0;
    }
    let n = samples.len() as f64;
    counts.values_mut().for_each(|c| *c /= n);
    counts
}

pub fn total_variation(a: &BTreeMap<Traversal, f64>, b: &BTreeMap<Traversal, f64>) -> f64 {
    let keys: BTreeSet<&Traversal> = a.keys().chain(b.keys()).collect();
    0.5 * keys.into_iter().map(|k| (a.get(k).unwrap_or(&0.0) - b.get(k).unwrap_or(&0.0)).abs()).sum::<f64>()
}
