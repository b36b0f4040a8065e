//! Open-loop imitation metrics and log-playback closed-loop simulation.

mod collision;
mod metrics;
mod report;
mod runner;

pub use collision::{at_fault_collision, contact_point, OrientedBox, REAR_FRACTION, STATIONARY_SPEED};
pub use metrics::{
    ade_fde, box_on_drivable, drivable_compliance, miss, progress, progress_series, tpi, ClosedLoopMetrics, OpenLoopMetrics,
    MISS_THRESHOLD,
};
pub use report::{
    closed_loop_rows, comparison_table, open_loop_rows, parse_csv, read_csv, repeat_rows, rows_to_csv, summary_rows, write_csv,
    write_plot_data, MetricsRow, AGGREGATE_ID, CSV_HEADER, MEAN_ID, METRIC_COLUMNS, STD_ID,
};
pub use runner::{
    aggregate_closed_loop, aggregate_open_loop, closed_loop_scenario, open_loop_scenario, plan_seed, run_closed_loop, run_open_loop,
    ClosedLoopAggregate, ClosedLoopResult, ExpertReplay, IdmPlanner, LearnedPlanner, OpenLoopAggregate, OpenLoopResult, Planner,
    TPI_SWEEP_STEPS,
};
