mod common;

use common::{empirical, random_fixture, simple_path_union, total_variation};
use laneplan::baselines::{idm_acceleration, Follower, IdmParams, Obstacle};
use laneplan::conditioning::{hard_mask, soft_mask, Beta};
use laneplan::evaluation::{ade_fde, progress_series, tpi, OrientedBox};
use laneplan::geometry::{Polyline, Vec2};
use laneplan::lane_graph::{compute_route_mask, LaneGraph};
use laneplan::planner::ReferencePath;
use laneplan::scenario::{Trajectory, HORIZON_STEPS};
use laneplan::traversal::{enumerate_traversals, sample_traversals, SamplerConfig};
use proptest::prelude::*;

fn beta(b: f64) -> Beta {
    Beta::new(b).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn every_node_has_an_out_edge(seed in any::<u64>(), cyclic in any::<bool>()) {
        let f = random_fixture(seed, 2..=12, 0.3, cyclic);
        for u in 0..f.graph.len() {
            prop_assert!(!f.graph.out_edges(u).is_empty());
            prop_assert!(f.graph.out_edges(u).iter().any(|e| e.is_terminal()));
        }
    }

    #[test]
    fn route_mask_matches_simple_paths_on_dags(seed in any::<u64>()) {
        let f = random_fixture(seed, 2..=12, 0.3, false);
        prop_assert_eq!(&f.route.on_route_nodes, &simple_path_union(&f.graph, f.start, f.goal));
    }

    #[test]
    fn route_mask_covers_simple_paths_with_cycles(seed in any::<u64>()) {
        let f = random_fixture(seed, 2..=10, 0.3, true);
        prop_assert!(simple_path_union(&f.graph, f.start, f.goal).is_subset(&f.route.on_route_nodes));
    }

    #[test]
    fn removing_an_off_route_node_keeps_the_route(seed in any::<u64>(), pick in any::<usize>()) {
        let f = random_fixture(seed, 3..=12, 0.3, true);
        let off: Vec<usize> = (0..f.graph.len()).filter(|v| !f.route.contains_node(*v)).collect();
        prop_assume!(!off.is_empty());
        let removed = off[pick % off.len()];
        // rebuild without `removed`, renumbering the nodes after it
        let renum = |v: usize| if v > removed { v - 1 } else { v };
        let keep = |v: usize| v != removed;
        let mut succ = Vec::new();
        let mut prox = Vec::new();
        for u in (0..f.graph.len()).filter(|u| keep(*u)) {
            for e in f.graph.out_edges(u) {
                if let Some(v) = e.to.filter(|v| keep(*v)) {
                    match e.kind {
                        laneplan::lane_graph::EdgeKind::Successor => succ.push((renum(u), renum(v))),
                        _ => prox.push((renum(u), renum(v))),
                    }
                }
            }
        }
        let g = LaneGraph::from_parts(common::line_nodes(f.graph.len() - 1), &succ, &prox).unwrap();
        let route = compute_route_mask(&g, renum(f.start), renum(f.goal)).unwrap();
        let expected: std::collections::BTreeSet<usize> = f.route.on_route_nodes.iter().map(|v| renum(*v)).collect();
        prop_assert_eq!(route.on_route_nodes, expected);
    }

    #[test]
    fn hard_mask_support_and_normalization(seed in any::<u64>(), cyclic in any::<bool>()) {
        let f = random_fixture(seed, 2..=12, 0.35, cyclic);
        let masked = hard_mask(&f.dist, &f.route);
        for row in masked.rows() {
            let total: f64 = row.iter().map(|(_, p)| p).sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
            for (e, p) in row {
                if *p > 0.0 {
                    prop_assert!(e.is_terminal() || f.route.route_edges.contains(&(e.from, e.to)));
                }
            }
        }
        prop_assert_eq!(hard_mask(&masked, &f.route), masked);
    }

    #[test]
    fn hard_mask_keeps_on_route_ratios(seed in any::<u64>()) {
        let f = random_fixture(seed, 2..=10, 0.4, true);
        let masked = hard_mask(&f.dist, &f.route);
        for (before, after) in f.dist.rows().iter().zip(masked.rows()) {
            let kept: Vec<(f64, f64)> = before.iter().zip(after).filter(|((e, _), _)| f.route.allows(e)).map(|((_, p), (_, q))| (*p, *q)).collect();
            if kept.iter().all(|(p, _)| *p == 0.0) {
                continue;
            }
            for (pi, qi) in &kept {
                for (pj, qj) in &kept {
                    prop_assert!((pi * qj - pj * qi).abs() <= 1e-15 * (pi * qj).abs().max(1e-300) * 4.0 + 1e-300);
                }
            }
        }
    }

    #[test]
    fn soft_mask_shifts_on_route_edges_equally(seed in any::<u64>(), b in 0.0f64..20.0) {
        let f = random_fixture(seed, 2..=10, 0.4, true);
        let masked = soft_mask(&f.dist, &f.route, beta(b));
        for (before, after) in f.dist.rows().iter().zip(masked.rows()) {
            let on = before.iter().filter(|(e, _)| f.route.allows(e)).count() as f64;
            let scale = 1.0 + b * on;
            for ((e, p), (_, q)) in before.iter().zip(after) {
                let bonus = if f.route.allows(e) { b } else { 0.0 };
                prop_assert!((q * scale - (p + bonus)).abs() < 1e-12 * scale);
            }
            let total: f64 = after.iter().map(|(_, q)| q).sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn soft_mask_mass_is_monotone_and_saturates(seed in any::<u64>()) {
        let f = random_fixture(seed, 2..=10, 0.4, true);
        prop_assert_eq!(soft_mask(&f.dist, &f.route, beta(0.0)), f.dist.clone());
        for u in 0..f.graph.len() {
            let mut last = f.dist.on_route_mass(u, &f.route);
            for b in [0.1, 1.0, 10.0, 100.0, 1e6] {
                let mass = soft_mask(&f.dist, &f.route, beta(b)).on_route_mass(u, &f.route);
                prop_assert!(mass >= last - 1e-12);
                last = mass;
            }
            prop_assert!(last > 1.0 - 1e-5);
        }
    }

    #[test]
    fn enumeration_is_complete(seed in any::<u64>(), cyclic in any::<bool>()) {
        let f = random_fixture(seed, 2..=7, 0.35, cyclic);
        let all = enumerate_traversals(&f.dist, f.start, 6).unwrap();
        let total: f64 = all.iter().map(|(_, p)| p).sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn sampled_hard_mask_traversals_stay_on_route(seed in any::<u64>(), cyclic in any::<bool>()) {
        let f = random_fixture(seed, 2..=12, 0.35, cyclic);
        let masked = hard_mask(&f.dist, &f.route);
        let cfg = SamplerConfig { samples: 200, max_nodes: 8, seed };
        for t in sample_traversals(&masked, f.start, &cfg) {
            prop_assert!(t.nodes.iter().all(|v| f.route.contains_node(*v)));
        }
    }

    #[test]
    fn sampling_is_thread_count_independent(seed in any::<u64>()) {
        let f = random_fixture(seed, 2..=10, 0.35, true);
        let cfg = SamplerConfig { samples: 300, max_nodes: 8, seed };
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| sample_traversals(&f.dist, f.start, &cfg));
        let b = four.install(|| sample_traversals(&f.dist, f.start, &cfg));
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a, sample_traversals(&f.dist, f.start, &cfg));
    }

    #[test]
    fn overlap_is_symmetric(
        ax in -5.0f64..5.0, ay in -5.0f64..5.0, ah in -3.2f64..3.2,
        bx in -5.0f64..5.0, by in -5.0f64..5.0, bh in -3.2f64..3.2,
        al in 0.5f64..6.0, aw in 0.5f64..3.0, bl in 0.5f64..6.0, bw in 0.5f64..3.0,
    ) {
        let a = OrientedBox::new(Vec2::new(ax, ay), ah, al, aw);
        let b = OrientedBox::new(Vec2::new(bx, by), bh, bl, bw);
        prop_assert_eq!(a.overlaps(&b), b.overlaps(&a));
    }

    #[test]
    fn progress_never_decreases(xs in proptest::collection::vec((-20.0f64..120.0, -5.0f64..5.0), 1..40)) {
        let path = Polyline::new(vec![Vec2::new(0.0, 0.0), Vec2::new(50.0, 0.0), Vec2::new(50.0, 50.0)]);
        let positions: Vec<Vec2> = xs.iter().map(|(x, y)| Vec2::new(*x, *y)).collect();
        let series = progress_series(&positions, &path);
        prop_assert!(series.windows(2).all(|w| w[1] >= w[0]));
        prop_assert!(series.iter().all(|p| (0.0..=1.0).contains(p)));
    }

    #[test]
    fn displacement_errors_are_nonnegative(pts in proptest::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 2 * HORIZON_STEPS)) {
        let v: Vec<Vec2> = pts.iter().map(|(x, y)| Vec2::new(*x, *y)).collect();
        let a = Trajectory::new(v[..HORIZON_STEPS].to_vec());
        let b = Trajectory::new(v[HORIZON_STEPS..].to_vec());
        let (ade, fde) = ade_fde(&a, &b).unwrap();
        prop_assert!(ade >= 0.0 && fde >= 0.0);
        prop_assert!(tpi(&a, &b) >= 0.0);
    }

    #[test]
    fn idm_is_bounded_and_continuous(v in 0.0f64..20.0, gap in 0.1f64..200.0, dv in -10.0f64..10.0) {
        let p = IdmParams::default();
        let a = idm_acceleration(&p, v, Some(gap), dv);
        prop_assert!(a.is_finite() && a <= p.a_max && a >= -2.0 * p.b_comf);
        let h = 1e-7;
        let b = idm_acceleration(&p, v + h, Some(gap + h), dv + h);
        prop_assert!((a - b).abs() < 1e-3);
    }

    #[test]
    fn idm_follower_never_rear_ends_a_braking_lead(
        v_lead in 0.0f64..15.0,
        v_follow in 0.0f64..15.0,
        extra_gap in 0.0f64..30.0,
        brake in 0.0f64..6.0,
    ) {
        let idm = IdmParams::with_speed(15.0);
        // start no closer than the IDM equilibrium spacing for the follower's speed
        let ratio = (v_follow / idm.v0).powf(idm.delta).min(0.99);
        let equilibrium = idm.desired_gap(v_follow, v_follow - v_lead) / (1.0 - ratio).sqrt();
        let gap0 = equilibrium.max(idm.s0) + extra_gap;
        let path = ReferencePath::from_polyline(Polyline::new(vec![Vec2::new(0.0, 0.0), Vec2::new(2000.0, 0.0)]));
        let mut ego = Follower::new(path, 0.0, v_follow, 4.8, 15.0, &idm);
        let (mut lead_s, mut lead_v) = (gap0 + 4.8, v_lead);
        let dt = 0.5;
        for _ in 0..80 {
            let lead = Obstacle { position: Vec2::new(lead_s, 0.0), heading: 0.0, speed: lead_v, length: 4.8 };
            let a = ego.acceleration(&idm, &[lead]);
            ego.advance(a, dt);
            let next_v = (lead_v - brake * dt).max(0.0);
            let t_stop = if brake > 0.0 { (lead_v / brake).min(dt) } else { dt };
            lead_s += lead_v * t_stop - 0.5 * brake * t_stop * t_stop + next_v * (dt - t_stop);
            lead_v = next_v;
            prop_assert!(ego.v >= 0.0);
            prop_assert!(lead_s - ego.s > 4.8, "bumper gap {} at speed {}", lead_s - ego.s - 4.8, ego.v);
        }
    }
}

#[test]
fn idm_stops_behind_a_stopped_lead() {
    let idm = IdmParams::with_speed(10.0);
    let path = ReferencePath::from_polyline(Polyline::new(vec![Vec2::new(0.0, 0.0), Vec2::new(500.0, 0.0)]));
    let mut ego = Follower::new(path, 0.0, 10.0, 4.8, 10.0, &idm);
    let lead = Obstacle { position: Vec2::new(30.0 + 4.8, 0.0), heading: 0.0, speed: 0.0, length: 4.8 };
    for _ in 0..120 {
        let a = ego.acceleration(&idm, &[lead]);
        ego.advance(a, 0.5);
    }
    let gap = 30.0 - ego.s;
    assert!((gap - idm.s0).abs() <= 0.5, "final gap {gap}");
}

#[test]
fn sampler_matches_enumeration_on_a_small_fixture() {
    let f = random_fixture(3, 4..=6, 0.4, true);
    let exact: std::collections::BTreeMap<_, _> = enumerate_traversals(&f.dist, f.start, 5).unwrap().into_iter().collect();
    let samples = sample_traversals(&f.dist, f.start, &SamplerConfig { samples: 20_000, max_nodes: 5, seed: 1 });
    assert!(total_variation(&empirical(&samples), &exact) < 0.03);
}
