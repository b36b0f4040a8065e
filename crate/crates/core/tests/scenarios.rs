use std::sync::OnceLock;

use laneplan::evaluation::OrientedBox;
use laneplan::lane_graph::compute_route_mask;
use laneplan::scenario::{
    expert_traversal, generate_intersections, load_scenarios, parse_scenarios, save_scenarios, scenarios_to_string, AgentState,
    GeneratorConfig, ScenarioRecord, ScenarioType,
};

fn suite() -> &'static [ScenarioRecord] {
    static SUITE: OnceLock<Vec<ScenarioRecord>> = OnceLock::new();
    SUITE.get_or_init(|| generate_intersections(11, 300, &GeneratorConfig::default()))
}

#[test]
fn same_seed_same_bytes() {
    let cfg = GeneratorConfig::default();
    let a = scenarios_to_string(&generate_intersections(1, 1, &cfg));
    let b = scenarios_to_string(&generate_intersections(1, 1, &cfg));
    assert_eq!(a, b);
    let other = scenarios_to_string(&generate_intersections(2, 1, &cfg));
    assert_ne!(a, other);
}

#[test]
fn scenario_types_are_balanced() {
    for ty in ScenarioType::ALL {
        let n = suite().iter().filter(|r| r.scenario_type == ty.as_str()).count();
        assert!(n >= 80, "{} has only {n} scenarios", ty.as_str());
    }
}

#[test]
fn experts_stay_on_route() {
    for r in suite() {
        let route = compute_route_mask(&r.graph, r.start_node, r.goal_node).unwrap();
        let t = expert_traversal(r).unwrap();
        assert!(t.nodes.iter().all(|v| route.contains_node(*v)), "{}: {:?}", r.scenario_id, t.nodes);
    }
}

fn footprint_box(s: &AgentState, length: f64, width: f64) -> OrientedBox {
    OrientedBox::new(s.position(), s.heading, length, width)
}

#[test]
fn experts_never_touch_agents() {
    for r in suite() {
        let sdv: Vec<&AgentState> = r.sdv_history.iter().chain(&r.expert_log).collect();
        for agent in &r.agents {
            let track: Vec<&AgentState> = agent.history.iter().chain(&agent.future_playback).collect();
            for (t, (a, b)) in sdv.iter().zip(&track).enumerate() {
                let ego = footprint_box(a, r.sdv_footprint.length, r.sdv_footprint.width);
                let other = footprint_box(b, agent.footprint.length, agent.footprint.width);
                assert!(!ego.overlaps(&other), "{} agent {} at tick {t}", r.scenario_id, agent.agent_id);
            }
        }
    }
}

#[test]
fn free_road_expert_reaches_the_limit() {
    let cfg = GeneratorConfig { agent_density: 0.0, ..GeneratorConfig::default() };
    let records = generate_intersections(4, 30, &cfg);
    let mut checked = 0;
    for r in records.iter().filter(|r| r.scenario_type == "traverse") {
        // free-road IDM approaches the limit asymptotically from below
        let speeds: Vec<f64> = r.expert_log.iter().map(|s| s.v).collect();
        let peak = speeds.iter().enumerate().fold(0, |best, (i, v)| if *v > speeds[best] { i } else { best });
        let top = speeds[peak];
        assert!(top >= 0.95 * cfg.speed_limit && top <= cfg.speed_limit + 1e-9, "{}: top speed {top}", r.scenario_id);
        assert!(speeds[..=peak].windows(2).all(|w| w[1] >= w[0] - 1e-9), "{}", r.scenario_id);
        checked += 1;
    }
    assert!(checked > 0);
}

#[test]
fn file_round_trip_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.json");
    let records = &suite()[..5];
    save_scenarios(&path, records).unwrap();
    let back = load_scenarios(&path).unwrap();
    assert_eq!(back, records);
    assert_eq!(scenarios_to_string(&back), std::fs::read_to_string(&path).unwrap());
    assert_eq!(parse_scenarios(&scenarios_to_string(&back)).unwrap(), back);
}

#[test]
fn corruption_flips_labels_near_the_route() {
    let cfg = GeneratorConfig { corrupt_route_fraction: 0.2, ..GeneratorConfig::default() };
    let records = generate_intersections(11, 20, &cfg);
    let flipped: usize = records.iter().map(|r| r.mislabeled_nodes.len()).sum();
    assert!(flipped > 0);
    for (clean, noisy) in suite().iter().zip(&records) {
        // corruption only touches the labels
        assert_eq!(clean.expert_future, noisy.expert_future);
        assert!(noisy.mislabeled_nodes.iter().all(|v| *v != noisy.start_node));
    }
}
