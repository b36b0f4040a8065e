//! Open-loop and log-playback closed-loop evaluation.

use rayon::prelude::*;

use crate::baselines::{idm_route_planner, IdmPlannerConfig};
use crate::error::Result;
use crate::geometry::{normalize_angle, Polyline, Vec2};
use crate::planner::{plan_from_state, PlannerConfig, PlannerKind};
use crate::policy::ScorerModel;
use crate::rng::mix;
use crate::scenario::{AgentState, ScenarioRecord, Trajectory, DT, HORIZON_STEPS, SIM_STEPS};

use super::metrics::{ade_fde, drivable_compliance, progress, tpi, ClosedLoopMetrics, OpenLoopMetrics, MISS_THRESHOLD};
use super::{at_fault_collision, OrientedBox};

/// Replan instants of the open-loop instability sweep: every dt over the first 4 s.
pub const TPI_SWEEP_STEPS: usize = 8;

/// Anything that turns an SDV state at a simulation step into a plan.
pub trait Planner: Sync {
    fn name(&self) -> String;
    fn plan(&self, record: &ScenarioRecord, step: usize, state: &AgentState) -> Result<Trajectory>;
}

/// 64-bit FNV-1a, used to key plan seeds by scenario id.
fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ u64::from(*b)).wrapping_mul(0x0100_0000_01b3))
}

/// Seed of the plan made in `scenario_id` at `step`; independent of
/// evaluation order and thread count.
pub fn plan_seed(seed: u64, scenario_id: &str, step: usize) -> u64 {
    mix(mix(seed, fnv1a(scenario_id.as_bytes())), step as u64)
}

pub struct LearnedPlanner {
    pub model: ScorerModel,
    pub kind: PlannerKind,
    pub cfg: PlannerConfig,
}

impl LearnedPlanner {
    pub fn new(model: ScorerModel, kind: PlannerKind, cfg: PlannerConfig) -> Result<Self> {
        kind.check_model(&model)?;
        Ok(Self { model, kind, cfg })
    }
}

impl Planner for LearnedPlanner {
    fn name(&self) -> String {
        self.kind.as_str().to_string()
    }

    fn plan(&self, record: &ScenarioRecord, step: usize, state: &AgentState) -> Result<Trajectory> {
        let cfg = PlannerConfig { seed: plan_seed(self.cfg.seed, &record.scenario_id, step), ..self.cfg };
        Ok(plan_from_state(record, &self.model, self.kind, &cfg, state)?.selected)
    }
}

#[derive(Default)]
pub struct IdmPlanner {
    pub cfg: IdmPlannerConfig,
}

impl Planner for IdmPlanner {
    fn name(&self) -> String {
        "idm".into()
    }

    fn plan(&self, record: &ScenarioRecord, step: usize, state: &AgentState) -> Result<Trajectory> {
        idm_route_planner(record, state, step, &self.cfg)
    }
}

/// Replays the logged expert drive, extrapolating at constant velocity past
/// the end of the log.
pub struct ExpertReplay;

impl Planner for ExpertReplay {
    fn name(&self) -> String {
        "expert".into()
    }

    fn plan(&self, record: &ScenarioRecord, step: usize, _state: &AgentState) -> Result<Trajectory> {
        let last = record.expert_log.len();
        let at = |k: usize| record.expert_state_at(k).expect("step within log").position();
        let waypoints = (step + 1..=step + HORIZON_STEPS)
            .map(|k| {
                if k <= last {
                    at(k)
                } else {
                    let (a, b) = (at(last.saturating_sub(1)), at(last));
                    b + (b - a) * (k - last) as f64
                }
            })
            .collect();
        Ok(Trajectory::new(waypoints))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OpenLoopResult {
    pub scenario_id: String,
    pub scenario_type: String,
    pub metrics: OpenLoopMetrics,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClosedLoopResult {
    pub scenario_id: String,
    pub scenario_type: String,
    pub metrics: ClosedLoopMetrics,
    /// SDV positions at steps 0..=30.
    pub positions: Vec<Vec2>,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Plans once at t = 0, plus the replanning sweep from logged states.
pub fn open_loop_scenario(record: &ScenarioRecord, planner: &dyn Planner) -> Result<OpenLoopResult> {
    let plans = (0..=TPI_SWEEP_STEPS)
        .map(|step| planner.plan(record, step, record.expert_state_at(step).expect("sweep within log")))
        .collect::<Result<Vec<_>>>()?;
    let (ade, fde) = ade_fde(&plans[0], &record.expert_future)?;
    let tpi_mean = mean(plans.windows(2).map(|w| tpi(&w[0], &w[1])));
    Ok(OpenLoopResult {
        scenario_id: record.scenario_id.clone(),
        scenario_type: record.scenario_type.clone(),
        metrics: OpenLoopMetrics { ade, fde, miss: fde > MISS_THRESHOLD, tpi_mean },
    })
}

/// SDV state after moving exactly to `next` in one step.
fn track(prev: &AgentState, next: Vec2) -> AgentState {
    let d = next - prev.position();
    let v = d.norm() / DT;
    let heading = if d.norm() > 1e-6 { d.heading() } else { prev.heading };
    AgentState {
        x: next.x,
        y: next.y,
        v,
        a: (v - prev.v) / DT,
        omega: normalize_angle(heading - prev.heading) / DT,
        heading,
    }
}

fn sdv_box(record: &ScenarioRecord, s: &AgentState) -> OrientedBox {
    OrientedBox::new(s.position(), s.heading, record.sdv_footprint.length, record.sdv_footprint.width)
}

fn at_fault_at(record: &ScenarioRecord, step: usize, sdv: &OrientedBox) -> bool {
    record.agents.iter().any(|agent| {
        agent.state_at(step).is_some_and(|s| {
            let b = OrientedBox::new(s.position(), s.heading, agent.footprint.length, agent.footprint.width);
            at_fault_collision(sdv, &b, s.v)
        })
    })
}

/// 15 s log-playback rollout with replanning every step and exact tracking.
pub fn closed_loop_scenario(record: &ScenarioRecord, planner: &dyn Planner) -> Result<ClosedLoopResult> {
    let mut state = *record.sdv_state();
    let mut states = vec![state];
    let mut plans: Vec<Trajectory> = Vec::with_capacity(SIM_STEPS);
    for step in 0..SIM_STEPS {
        let plan = planner.plan(record, step, &state)?;
        state = track(&state, plan.waypoints[0]);
        states.push(state);
        plans.push(plan);
    }
    let boxes: Vec<OrientedBox> = states[1..].iter().map(|s| sdv_box(record, s)).collect();
    let collision_free = !boxes.iter().enumerate().any(|(i, b)| at_fault_at(record, i + 1, b));
    let positions: Vec<Vec2> = states.iter().map(AgentState::position).collect();
    let expert_path = Polyline::new(record.expert_path());
    let metrics = ClosedLoopMetrics::new(
        progress(&positions, &expert_path),
        drivable_compliance(&boxes, &record.drivable_area),
        collision_free,
        mean(plans.windows(2).map(|w| tpi(&w[0], &w[1]))),
    );
    Ok(ClosedLoopResult {
        scenario_id: record.scenario_id.clone(),
        scenario_type: record.scenario_type.clone(),
        metrics,
        positions,
    })
}

/// Scenarios run in parallel; results keep the input order.
pub fn run_open_loop(scenarios: &[ScenarioRecord], planner: &dyn Planner) -> Result<Vec<OpenLoopResult>> {
    scenarios.par_iter().map(|r| open_loop_scenario(r, planner)).collect()
}

pub fn run_closed_loop(scenarios: &[ScenarioRecord], planner: &dyn Planner) -> Result<Vec<ClosedLoopResult>> {
    scenarios.par_iter().map(|r| closed_loop_scenario(r, planner)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OpenLoopAggregate {
    pub ade: f64,
    pub fde: f64,
    pub miss_rate: f64,
    pub tpi_mean: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClosedLoopAggregate {
    pub progress: f64,
    pub drivable_compliance: f64,
    pub collision_free_rate: f64,
    pub tpi_mean: f64,
    pub score: f64,
}

fn sorted_by_id<T>(items: &[T], id: impl Fn(&T) -> &str) -> Vec<&T> {
    let mut v: Vec<&T> = items.iter().collect();
    v.sort_by(|a, b| id(a).cmp(id(b)));
    v
}

/// Means reduced in scenario-id order.
pub fn aggregate_open_loop(results: &[OpenLoopResult]) -> OpenLoopAggregate {
    let r = sorted_by_id(results, |r| &r.scenario_id);
    OpenLoopAggregate {
        ade: mean(r.iter().map(|x| x.metrics.ade)),
        fde: mean(r.iter().map(|x| x.metrics.fde)),
        miss_rate: mean(r.iter().map(|x| f64::from(u8::from(x.metrics.miss)))),
        tpi_mean: mean(r.iter().map(|x| x.metrics.tpi_mean)),
    }
}

pub fn aggregate_closed_loop(results: &[ClosedLoopResult]) -> ClosedLoopAggregate {
    let r = sorted_by_id(results, |r| &r.scenario_id);
    ClosedLoopAggregate {
        progress: mean(r.iter().map(|x| x.metrics.progress)),
        drivable_compliance: mean(r.iter().map(|x| x.metrics.drivable_compliance)),
        collision_free_rate: mean(r.iter().map(|x| f64::from(u8::from(x.metrics.collision_free)))),
        tpi_mean: mean(r.iter().map(|x| x.metrics.tpi_mean)),
        score: mean(r.iter().map(|x| x.metrics.score)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a(b""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(fnv1a(b"a"), 0xaf63_dc4c_8601_ec8c);
        assert_eq!(fnv1a(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn tracking_derives_speed_and_heading() {
        let s = AgentState { x: 0.0, y: 0.0, v: 8.0, a: 0.0, omega: 0.0, heading: 0.0 };
        let n = track(&s, Vec2::new(0.0, 5.0));
        assert!((n.v - 10.0).abs() < 1e-12);
        assert!((n.heading - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        assert!((n.a - 4.0).abs() < 1e-12);
        let still = track(&n, Vec2::new(0.0, 5.0));
        assert_eq!(still.heading, n.heading);
        assert_eq!(still.v, 0.0);
    }
}
