//! Behaviour-level traversals of the lane graph.
//!
//! Sampling walks the graph from a start node, drawing one outgoing edge per
//! step by inverse CDF. Each draw reads the counter-based stream at
//! `(seed, sample index, step index)`, so samples are independent of each
//! other and of the thread that produced them.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lane_graph::NodeId;
use crate::policy::EdgeDistribution;
use crate::rng::{CounterStream, Domain};

pub const DEFAULT_SAMPLES: usize = 1000;
pub const DEFAULT_MAX_NODES: usize = 8;
pub const ENUMERATION_LIMIT: usize = 1_000_000;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Traversal {
    pub nodes: Vec<NodeId>,
    /// The terminal edge was drawn before the node cap was reached.
    pub terminated: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SamplerConfig {
    pub samples: usize,
    pub max_nodes: usize,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { samples: DEFAULT_SAMPLES, max_nodes: DEFAULT_MAX_NODES, seed: 0 }
    }
}

/// Index of the outgoing edge selected by the uniform draw `u`.
/// Zero-probability edges are never selected.
fn inverse_cdf(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last_positive = None;
    for (i, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last_positive = Some(i);
        if u < acc {
            return i;
        }
    }
    last_positive.expect("distribution has positive mass")
}

fn sample_one(dist: &EdgeDistribution, start: NodeId, cfg: &SamplerConfig, index: usize) -> Traversal {
    let mut stream = CounterStream::new(cfg.seed, Domain::Traversal, index as u64);
    let mut nodes = vec![start];
    let mut current = start;
    while nodes.len() < cfg.max_nodes {
        let u = stream.next_uniform();
        let out = dist.node(current);
        let probs: Vec<f64> = out.iter().map(|(_, p)| *p).collect();
        let (edge, _) = out[inverse_cdf(&probs, u)];
        match edge.to {
            None => return Traversal { nodes, terminated: true },
            Some(next) => {
                nodes.push(next);
                current = next;
            }
        }
    }
    Traversal { nodes, terminated: false }
}

/// Draws `cfg.samples` traversals starting at `start`, in sample-index order.
pub fn sample_traversals(dist: &EdgeDistribution, start: NodeId, cfg: &SamplerConfig) -> Vec<Traversal> {
    (0..cfg.samples)
        .into_par_iter()
        .map(|k| sample_one(dist, start, cfg, k))
        .collect()
}

/// Log-probability of a traversal under `dist`; `-inf` when it leaves the support.
pub fn traversal_log_prob(dist: &EdgeDistribution, traversal: &Traversal) -> f64 {
    let mut lp = 0.0;
    for w in traversal.nodes.windows(2) {
        match dist.node(w[0]).iter().find(|(e, _)| e.to == Some(w[1])) {
            Some((_, p)) if *p > 0.0 => lp += p.ln(),
            _ => return f64::NEG_INFINITY,
        }
    }
    if traversal.terminated {
        let last = *traversal.nodes.last().expect("traversal has a start node");
        match dist.node(last).iter().find(|(e, _)| e.is_terminal()) {
            Some((_, p)) if *p > 0.0 => lp += p.ln(),
            _ => return f64::NEG_INFINITY,
        }
    }
    lp
}

/// Every traversal with positive probability, by depth-first expansion.
pub fn enumerate_traversals(dist: &EdgeDistribution, start: NodeId, max_nodes: usize) -> Result<Vec<(Traversal, f64)>> {
    let mut out = Vec::new();
    let mut path = vec![start];
    expand(dist, &mut path, 1.0, max_nodes, &mut out)?;
    Ok(out)
}

fn expand(
    dist: &EdgeDistribution,
    path: &mut Vec<NodeId>,
    prob: f64,
    max_nodes: usize,
    out: &mut Vec<(Traversal, f64)>,
) -> Result<()> {
    if path.len() >= max_nodes {
        push_guarded(out, Traversal { nodes: path.clone(), terminated: false }, prob)?;
        return Ok(());
    }
    let current = *path.last().expect("nonempty path");
    for (edge, p) in dist.node(current) {
        if *p <= 0.0 {
            continue;
        }
        match edge.to {
            None => push_guarded(out, Traversal { nodes: path.clone(), terminated: true }, prob * p)?,
            Some(next) => {
                path.push(next);
                expand(dist, path, prob * p, max_nodes, out)?;
                path.pop();
            }
        }
    }
    Ok(())
}

fn push_guarded(out: &mut Vec<(Traversal, f64)>, t: Traversal, p: f64) -> Result<()> {
    if out.len() >= ENUMERATION_LIMIT {
        return Err(Error::EnumerationGuard { limit: ENUMERATION_LIMIT });
    }
    out.push((t, p));
    Ok(())
}

#[cfg(test)]
mod tests {
    use std::collections::HashMap;

    use super::*;
    use crate::policy::test_support::{chain, diamond, fork};

    #[test]
    fn deterministic_chain() {
        let (_, dist) = chain(3, 1.0);
        let cfg = SamplerConfig { samples: 20, max_nodes: 3, seed: 9 };
        for t in sample_traversals(&dist, 0, &cfg) {
            assert_eq!(t.nodes, vec![0, 1, 2]);
            assert!(!t.terminated);
            assert_eq!(traversal_log_prob(&dist, &t), 0.0);
        }
    }

    #[test]
    fn fork_frequency_matches_probability() {
        let (_, dist) = fork(0.7, 0.3);
        let cfg = SamplerConfig { samples: 10_000, max_nodes: 8, seed: 3 };
        let samples = sample_traversals(&dist, 0, &cfg);
        let a = samples.iter().filter(|t| t.nodes.get(1) == Some(&1)).count() as f64 / 10_000.0;
        assert!((a - 0.7).abs() < 0.02, "branch frequency {a}");
    }

    #[test]
    fn immediate_terminal() {
        let (_, dist) = chain(3, 0.0);
        let cfg = SamplerConfig { samples: 50, max_nodes: 8, seed: 1 };
        for t in sample_traversals(&dist, 0, &cfg) {
            assert_eq!(t, Traversal { nodes: vec![0], terminated: true });
        }
    }

    #[test]
    fn log_prob_of_fork_branch() {
        let (_, dist) = fork(0.7, 0.3);
        let t = Traversal { nodes: vec![0, 1], terminated: true };
        assert!((traversal_log_prob(&dist, &t) - 0.7f64.ln()).abs() < 1e-12);
        let off = Traversal { nodes: vec![0, 2, 1], terminated: false };
        assert_eq!(traversal_log_prob(&dist, &off), f64::NEG_INFINITY);
    }

    #[test]
    fn enumerate_fork() {
        let (_, dist) = fork(0.7, 0.3);
        let all = enumerate_traversals(&dist, 0, 8).unwrap();
        let map: HashMap<_, _> = all.into_iter().map(|(t, p)| (t.nodes, p)).collect();
        assert_eq!(map.len(), 2);
        assert!((map[&vec![0, 1]] - 0.7).abs() < 1e-12);
        assert!((map[&vec![0, 2]] - 0.3).abs() < 1e-12);
    }

    #[test]
    fn enumerate_single_node_cap() {
        let (_, dist) = fork(0.7, 0.3);
        let all = enumerate_traversals(&dist, 0, 1).unwrap();
        assert_eq!(all, vec![(Traversal { nodes: vec![0], terminated: false }, 1.0)]);
    }

    #[test]
    fn enumerate_diamond_reaches_sink_through_both_branches() {
        let (_, dist) = diamond();
        let all = enumerate_traversals(&dist, 0, 8).unwrap();
        let total: f64 = all.iter().map(|(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-12);
        let reach_d: f64 = all.iter().filter(|(t, _)| t.nodes.contains(&3)).map(|(_, p)| p).sum();
        // A→B 0.5, A→C 0.4, B→D 0.8, C→D 0.5  ⇒  0.5·0.8 + 0.4·0.5
        assert!((reach_d - 0.6).abs() < 1e-12);
    }

    #[test]
    fn log_prob_agrees_with_enumeration() {
        let (_, dist) = diamond();
        for (t, p) in enumerate_traversals(&dist, 0, 8).unwrap() {
            assert!((traversal_log_prob(&dist, &t) - p.ln()).abs() < 1e-12);
        }
    }
}
