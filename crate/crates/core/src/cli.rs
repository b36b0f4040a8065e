//! Command-line front end: generate, train, eval, report.
//!
//! Settings resolve as flag (or `LANEPLAN_*` environment variable), then the
//! matching table of the `--config` TOML file, then the built-in default.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::RngCore;
use serde::Deserialize;

use crate::baselines::{IdmParams, IdmPlannerConfig, MobilParams};
use crate::conditioning::Beta;
use crate::error::{Error, Result};
use crate::evaluation::{
    closed_loop_rows, comparison_table, open_loop_rows, read_csv, repeat_rows, run_closed_loop, run_open_loop, write_csv,
    write_plot_data, ExpertReplay, IdmPlanner, LearnedPlanner, MetricsRow, Planner,
};
use crate::planner::{PlannerConfig, PlannerKind, DEFAULT_NUM_MODES};
use crate::policy::{train_scorer, ScorerModel, TrainConfig, TrainReport, TrainingMode};
use crate::rng::{stream, Domain};
use crate::scenario::{generate_intersections, load_scenarios, save_scenarios, GeneratorConfig};
use crate::traversal::{DEFAULT_MAX_NODES, DEFAULT_SAMPLES};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "laneplan", version, about = "Route-conditioned lane-graph planning and evaluation")]
pub struct Cli {
    /// TOML file with [generate], [train], [eval] and [report] tables.
    #[arg(long, global = true, env = "LANEPLAN_CONFIG")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write synthetic intersection scenarios.
    Generate(GenerateArgs),
    /// Fit an edge scorer on a scenario file.
    Train(TrainArgs),
    /// Evaluate a planner and write a metrics CSV.
    Eval(EvalArgs),
    /// Compare metrics CSVs side by side.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenerateArgs {
    #[arg(long, env = "LANEPLAN_SEED")]
    pub seed: Option<u64>,
    #[arg(long, env = "LANEPLAN_COUNT")]
    pub count: Option<usize>,
    #[arg(long, env = "LANEPLAN_OUT")]
    pub out: Option<PathBuf>,
    #[arg(long, env = "LANEPLAN_CORRUPT_ROUTE_FRACTION")]
    pub corrupt_route_fraction: Option<f64>,
    #[arg(long, env = "LANEPLAN_ARM_LENGTH")]
    pub arm_length: Option<f64>,
    #[arg(long, env = "LANEPLAN_LANES_PER_ARM")]
    pub lanes_per_arm: Option<usize>,
    #[arg(long, env = "LANEPLAN_SPEED_LIMIT")]
    pub speed_limit: Option<f64>,
    #[arg(long, env = "LANEPLAN_AGENT_DENSITY")]
    pub agent_density: Option<f64>,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainArgs {
    #[arg(long, env = "LANEPLAN_SCENARIOS")]
    pub scenarios: Option<PathBuf>,
    #[arg(long, value_enum, env = "LANEPLAN_MODE")]
    pub mode: Option<TrainingMode>,
    #[arg(long, env = "LANEPLAN_EPOCHS")]
    pub epochs: Option<usize>,
    #[arg(long, env = "LANEPLAN_LR")]
    pub lr: Option<f64>,
    #[arg(long, env = "LANEPLAN_BATCH_SIZE")]
    pub batch_size: Option<usize>,
    #[arg(long, env = "LANEPLAN_SEED")]
    pub seed: Option<u64>,
    #[arg(long, env = "LANEPLAN_OUT")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum PlannerArg {
    Pgp,
    GcPgp,
    SoftMask,
    HardMaskTrained,
    NodeFeatures,
    FilterOnRoute,
    Idm,
    Expert,
}

impl PlannerArg {
    pub fn learned(self) -> Option<PlannerKind> {
        Some(match self {
            PlannerArg::Pgp => PlannerKind::Pgp,
            PlannerArg::GcPgp => PlannerKind::GcPgp,
            PlannerArg::SoftMask => PlannerKind::SoftMask,
            PlannerArg::HardMaskTrained => PlannerKind::HardMaskTrained,
            PlannerArg::NodeFeatures => PlannerKind::NodeFeatures,
            PlannerArg::FilterOnRoute => PlannerKind::FilterOnRoute,
            PlannerArg::Idm | PlannerArg::Expert => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoopMode {
    Open,
    Closed,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalArgs {
    #[arg(long, env = "LANEPLAN_SCENARIOS")]
    pub scenarios: Option<PathBuf>,
    /// Scorer file; not needed for the idm and expert planners.
    #[arg(long, env = "LANEPLAN_MODEL")]
    pub model: Option<PathBuf>,
    #[arg(long, value_enum, env = "LANEPLAN_PLANNER")]
    pub planner: Option<PlannerArg>,
    #[arg(long = "loop", value_enum, env = "LANEPLAN_LOOP")]
    #[serde(rename = "loop")]
    pub loop_mode: Option<LoopMode>,
    #[arg(long, env = "LANEPLAN_SEED")]
    pub seed: Option<u64>,
    /// Traversals sampled per plan.
    #[arg(long, env = "LANEPLAN_SAMPLES")]
    pub samples: Option<usize>,
    /// Maximum nodes per traversal.
    #[arg(long, env = "LANEPLAN_MAX_NODES")]
    pub max_nodes: Option<usize>,
    #[arg(long, env = "LANEPLAN_NUM_MODES")]
    pub num_modes: Option<usize>,
    /// Overrides the soft-mask bonus stored in the model.
    #[arg(long, env = "LANEPLAN_BETA")]
    pub beta: Option<f64>,
    #[arg(long, env = "LANEPLAN_REPEAT")]
    pub repeat: Option<usize>,
    /// Worker threads; defaults to the available cores.
    #[arg(long, env = "LANEPLAN_JOBS")]
    pub jobs: Option<usize>,
    #[arg(long, env = "LANEPLAN_OUT")]
    pub out: Option<PathBuf>,
    #[arg(long, env = "LANEPLAN_IDM_TIME_HEADWAY")]
    pub idm_time_headway: Option<f64>,
    #[arg(long, env = "LANEPLAN_IDM_MIN_GAP")]
    pub idm_min_gap: Option<f64>,
    #[arg(long, env = "LANEPLAN_IDM_MAX_ACCEL")]
    pub idm_max_accel: Option<f64>,
    #[arg(long, env = "LANEPLAN_IDM_COMFORT_DECEL")]
    pub idm_comfort_decel: Option<f64>,
    /// Let the IDM planner change lanes with MOBIL.
    #[arg(long, env = "LANEPLAN_MOBIL")]
    pub mobil: Option<bool>,
    #[arg(long, env = "LANEPLAN_MOBIL_POLITENESS")]
    pub mobil_politeness: Option<f64>,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReportArgs {
    /// Metrics CSV files written by `eval`.
    pub csv: Vec<PathBuf>,
    /// Directory for per-metric plot-data CSVs.
    #[arg(long, env = "LANEPLAN_PLOT_DIR")]
    pub plot_dir: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    generate: Option<GenerateArgs>,
    train: Option<TrainArgs>,
    eval: Option<EvalArgs>,
    report: Option<ReportArgs>,
}

fn load_config(path: Option<&Path>) -> Result<ConfigFile> {
    let Some(path) = path else { return Ok(ConfigFile::default()) };
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

macro_rules! fill_from {
    ($flags:expr, $file:expr, $($field:ident),+) => {
        if let Some(file) = $file {
            $( if $flags.$field.is_none() { $flags.$field = file.$field; } )+
        }
    };
}

fn required<T>(value: Option<T>, flag: &str) -> Result<T> {
    value.ok_or_else(|| Error::Config(format!("missing required setting --{flag}")))
}

fn check(ok: bool, message: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Config(message.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenerateSettings {
    pub seed: u64,
    pub count: usize,
    pub out: PathBuf,
    pub generator: GeneratorConfig,
}

impl GenerateArgs {
    pub fn resolve(mut self, file: Option<GenerateArgs>) -> Result<GenerateSettings> {
        fill_from!(self, file, seed, count, out, corrupt_route_fraction, arm_length, lanes_per_arm, speed_limit, agent_density);
        let d = GeneratorConfig::default();
        let generator = GeneratorConfig {
            arm_length: self.arm_length.unwrap_or(d.arm_length),
            lanes_per_arm: self.lanes_per_arm.unwrap_or(d.lanes_per_arm),
            speed_limit: self.speed_limit.unwrap_or(d.speed_limit),
            agent_density: self.agent_density.unwrap_or(d.agent_density),
            corrupt_route_fraction: self.corrupt_route_fraction.unwrap_or(d.corrupt_route_fraction),
            graph_params: d.graph_params,
        };
        check((0.0..=1.0).contains(&generator.corrupt_route_fraction), "--corrupt-route-fraction must lie in [0, 1]")?;
        check((0.0..=1.0).contains(&generator.agent_density), "--agent-density must lie in [0, 1]")?;
        check(generator.arm_length >= 20.0, "--arm-length must be at least 20 m")?;
        check(generator.lanes_per_arm >= 1, "--lanes-per-arm must be at least 1")?;
        check(generator.speed_limit > 0.0, "--speed-limit must be positive")?;
        let count = self.count.unwrap_or(300);
        check(count >= 1, "--count must be at least 1")?;
        Ok(GenerateSettings { seed: self.seed.unwrap_or(0), count, out: required(self.out, "out")?, generator })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainSettings {
    pub scenarios: PathBuf,
    pub mode: TrainingMode,
    pub train: TrainConfig,
    pub out: PathBuf,
}

impl TrainArgs {
    pub fn resolve(mut self, file: Option<TrainArgs>) -> Result<TrainSettings> {
        fill_from!(self, file, scenarios, mode, epochs, lr, batch_size, seed, out);
        let d = TrainConfig::default();
        let train = TrainConfig {
            epochs: self.epochs.unwrap_or(d.epochs),
            learning_rate: self.lr.unwrap_or(d.learning_rate),
            seed: self.seed.unwrap_or(d.seed),
            batch_size: self.batch_size.unwrap_or(d.batch_size),
        };
        check(train.learning_rate.is_finite() && train.learning_rate > 0.0, "--lr must be positive")?;
        check(train.batch_size >= 1, "--batch-size must be at least 1")?;
        Ok(TrainSettings {
            scenarios: required(self.scenarios, "scenarios")?,
            mode: self.mode.unwrap_or(TrainingMode::Unconditioned),
            train,
            out: required(self.out, "out")?,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalSettings {
    pub scenarios: PathBuf,
    pub model: Option<PathBuf>,
    pub planner: PlannerArg,
    pub loop_mode: LoopMode,
    pub planner_cfg: PlannerConfig,
    pub idm: IdmPlannerConfig,
    pub repeat: usize,
    pub jobs: Option<usize>,
    pub out: PathBuf,
}

impl EvalArgs {
    pub fn resolve(mut self, file: Option<EvalArgs>) -> Result<EvalSettings> {
        fill_from!(
            self,
            file,
            scenarios,
            model,
            planner,
            loop_mode,
            seed,
            samples,
            max_nodes,
            num_modes,
            beta,
            repeat,
            jobs,
            out,
            idm_time_headway,
            idm_min_gap,
            idm_max_accel,
            idm_comfort_decel,
            mobil,
            mobil_politeness
        );
        let planner = required(self.planner, "planner")?;
        let planner_cfg = PlannerConfig {
            samples: self.samples.unwrap_or(DEFAULT_SAMPLES),
            max_nodes: self.max_nodes.unwrap_or(DEFAULT_MAX_NODES),
            num_modes: self.num_modes.unwrap_or(DEFAULT_NUM_MODES),
            seed: self.seed.unwrap_or(0),
            beta: self.beta.map(Beta::new).transpose()?,
        };
        check(planner_cfg.samples >= 1, "--samples must be at least 1")?;
        check(planner_cfg.max_nodes >= 1, "--max-nodes must be at least 1")?;
        check(planner_cfg.num_modes >= 1, "--num-modes must be at least 1")?;
        let d = IdmParams::default();
        let idm = IdmParams {
            time_headway: self.idm_time_headway.unwrap_or(d.time_headway),
            s0: self.idm_min_gap.unwrap_or(d.s0),
            a_max: self.idm_max_accel.unwrap_or(d.a_max),
            b_comf: self.idm_comfort_decel.unwrap_or(d.b_comf),
            ..d
        };
        check(
            idm.time_headway > 0.0 && idm.s0 >= 0.0 && idm.a_max > 0.0 && idm.b_comf > 0.0,
            "IDM parameters must be positive",
        )?;
        let mobil = self.mobil.unwrap_or(false).then(|| MobilParams {
            politeness: self.mobil_politeness.unwrap_or(MobilParams::default().politeness),
            ..MobilParams::default()
        });
        let repeat = self.repeat.unwrap_or(1);
        check(repeat >= 1, "--repeat must be at least 1")?;
        check(self.jobs != Some(0), "--jobs must be at least 1")?;
        if planner.learned().is_some() && self.model.is_none() {
            return Err(Error::Config("missing required setting --model for a learned planner".into()));
        }
        Ok(EvalSettings {
            scenarios: required(self.scenarios, "scenarios")?,
            model: self.model,
            planner,
            loop_mode: self.loop_mode.unwrap_or(LoopMode::Open),
            planner_cfg,
            idm: IdmPlannerConfig { idm, mobil },
            repeat,
            jobs: self.jobs,
            out: required(self.out, "out")?,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportSettings {
    pub csv: Vec<PathBuf>,
    pub plot_dir: Option<PathBuf>,
}

impl ReportArgs {
    pub fn resolve(mut self, file: Option<ReportArgs>) -> Result<ReportSettings> {
        if let Some(file) = file {
            if self.csv.is_empty() {
                self.csv = file.csv;
            }
            if self.plot_dir.is_none() {
                self.plot_dir = file.plot_dir;
            }
        }
        check(!self.csv.is_empty(), "report needs at least one CSV file")?;
        Ok(ReportSettings { csv: self.csv, plot_dir: self.plot_dir })
    }
}

pub fn cmd_generate(s: &GenerateSettings) -> Result<()> {
    let records = generate_intersections(s.seed, s.count, &s.generator);
    save_scenarios(&s.out, &records)
}

pub fn cmd_train(s: &TrainSettings) -> Result<TrainReport> {
    let scenarios = load_scenarios(&s.scenarios)?;
    let (model, report) = train_scorer(&scenarios, s.mode, &s.train)?;
    model.save(&s.out)?;
    Ok(report)
}

/// Seed of repeat `r`; repeat 0 keeps the base seed.
pub fn repeat_seed(seed: u64, r: usize) -> u64 {
    if r == 0 {
        seed
    } else {
        stream(seed, Domain::Repeat, r as u64).next_u64()
    }
}

fn evaluate(s: &EvalSettings) -> Result<Vec<MetricsRow>> {
    let scenarios = load_scenarios(&s.scenarios)?;
    let model = match (s.planner.learned(), &s.model) {
        (Some(_), Some(path)) => Some(ScorerModel::load(path)?),
        _ => None,
    };
    let mut runs = Vec::with_capacity(s.repeat);
    for r in 0..s.repeat {
        let planner: Box<dyn Planner> = match (s.planner.learned(), &model) {
            (Some(kind), Some(m)) => {
                let cfg = PlannerConfig { seed: repeat_seed(s.planner_cfg.seed, r), ..s.planner_cfg };
                Box::new(LearnedPlanner::new(m.clone(), kind, cfg)?)
            }
            _ if s.planner == PlannerArg::Expert => Box::new(ExpertReplay),
            _ => Box::new(IdmPlanner { cfg: s.idm }),
        };
        let name = planner.name();
        let rows = match s.loop_mode {
            LoopMode::Open => open_loop_rows(&name, &run_open_loop(&scenarios, planner.as_ref())?),
            LoopMode::Closed => closed_loop_rows(&name, &run_closed_loop(&scenarios, planner.as_ref())?),
        };
        runs.push(rows);
    }
    Ok(if s.repeat == 1 { runs.pop().expect("one run") } else { repeat_rows(runs) })
}

pub fn cmd_eval(s: &EvalSettings) -> Result<Vec<MetricsRow>> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = s.jobs {
        builder = builder.num_threads(jobs);
    }
    let pool = builder.build().map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let rows = pool.install(|| evaluate(s))?;
    write_csv(&s.out, &rows)?;
    Ok(rows)
}

pub fn cmd_report(s: &ReportSettings) -> Result<String> {
    let mut rows = Vec::new();
    for path in &s.csv {
        rows.extend(read_csv(path)?);
    }
    if let Some(dir) = &s.plot_dir {
        write_plot_data(dir, &rows)?;
    }
    Ok(comparison_table(&rows))
}

fn execute(cli: Cli) -> Result<()> {
    let file = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Generate(args) => {
            let s = args.resolve(file.generate)?;
            cmd_generate(&s)?;
            println!("wrote {} scenarios to {}", s.count, s.out.display());
        }
        Command::Train(args) => {
            let s = args.resolve(file.train)?;
            let r = cmd_train(&s)?;
            println!(
                "mode {}: train nll {:.4} -> {:.4}, held-out nll {:.4} -> {:.4} ({} train / {} held-out scenarios, {} excluded)",
                s.mode,
                r.init_train_nll,
                r.train_nll,
                r.init_held_out_nll,
                r.held_out_nll,
                r.train_scenarios,
                r.held_out_scenarios,
                r.excluded.len()
            );
        }
        Command::Eval(args) => {
            let s = args.resolve(file.eval)?;
            let rows = cmd_eval(&s)?;
            print!("{}", comparison_table(&rows));
        }
        Command::Report(args) => {
            let s = args.resolve(file.report)?;
            print!("{}", cmd_report(&s)?);
        }
    }
    Ok(())
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, Error::Config(_)) {
                EXIT_USAGE
            } else {
                EXIT_RUNTIME
            }
        }
    }
}
