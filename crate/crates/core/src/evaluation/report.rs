//! Metrics CSV rows, repeat statistics and the comparison table.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

use super::runner::{aggregate_closed_loop, aggregate_open_loop, ClosedLoopResult, OpenLoopResult};

pub const CSV_HEADER: [&str; 11] = [
    "scenario_id",
    "scenario_type",
    "planner",
    "ade",
    "fde",
    "miss",
    "tpi_mean",
    "progress",
    "drivable_compliance",
    "collision_free",
    "score",
];

/// Names of the numeric columns, in CSV order.
pub const METRIC_COLUMNS: [&str; 8] = ["ade", "fde", "miss", "tpi_mean", "progress", "drivable_compliance", "collision_free", "score"];

pub const AGGREGATE_ID: &str = "aggregate";
pub const MEAN_ID: &str = "mean";
pub const STD_ID: &str = "std";

/// One CSV line; metrics that do not apply to the loop mode are `None`.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub scenario_id: String,
    pub scenario_type: String,
    pub planner: String,
    pub values: [Option<f64>; 8],
}

impl MetricsRow {
    pub fn value(&self, column: &str) -> Option<f64> {
        METRIC_COLUMNS.iter().position(|c| *c == column).and_then(|i| self.values[i])
    }

    pub fn is_summary(&self) -> bool {
        self.scenario_id.starts_with(AGGREGATE_ID) || self.scenario_id == MEAN_ID || self.scenario_id == STD_ID
    }
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// Per-scenario rows followed by the aggregate row.
pub fn open_loop_rows(planner: &str, results: &[OpenLoopResult]) -> Vec<MetricsRow> {
    let mut rows: Vec<MetricsRow> = results
        .iter()
        .map(|r| {
            let m = r.metrics;
            MetricsRow {
                scenario_id: r.scenario_id.clone(),
                scenario_type: r.scenario_type.clone(),
                planner: planner.to_string(),
                values: [Some(m.ade), Some(m.fde), Some(flag(m.miss)), Some(m.tpi_mean), None, None, None, None],
            }
        })
        .collect();
    let a = aggregate_open_loop(results);
    rows.push(MetricsRow {
        scenario_id: AGGREGATE_ID.into(),
        scenario_type: "all".into(),
        planner: planner.to_string(),
        values: [Some(a.ade), Some(a.fde), Some(a.miss_rate), Some(a.tpi_mean), None, None, None, None],
    });
    rows
}

pub fn closed_loop_rows(planner: &str, results: &[ClosedLoopResult]) -> Vec<MetricsRow> {
    let mut rows: Vec<MetricsRow> = results
        .iter()
        .map(|r| {
            let m = r.metrics;
            MetricsRow {
                scenario_id: r.scenario_id.clone(),
                scenario_type: r.scenario_type.clone(),
                planner: planner.to_string(),
                values: [
                    None,
                    None,
                    None,
                    Some(m.tpi_mean),
                    Some(m.progress),
                    Some(m.drivable_compliance),
                    Some(flag(m.collision_free)),
                    Some(m.score),
                ],
            }
        })
        .collect();
    let a = aggregate_closed_loop(results);
    rows.push(MetricsRow {
        scenario_id: AGGREGATE_ID.into(),
        scenario_type: "all".into(),
        planner: planner.to_string(),
        values: [
            None,
            None,
            None,
            Some(a.tpi_mean),
            Some(a.progress),
            Some(a.drivable_compliance),
            Some(a.collision_free_rate),
            Some(a.score),
        ],
    });
    rows
}

/// Concatenates repeated runs (ids suffixed `@r<k>`) and appends mean and
/// sample standard deviation of the per-run aggregates.
pub fn repeat_rows(runs: Vec<Vec<MetricsRow>>) -> Vec<MetricsRow> {
    let mut out = Vec::new();
    let mut aggregates = Vec::new();
    for (r, rows) in runs.into_iter().enumerate() {
        for mut row in rows {
            if row.scenario_id == AGGREGATE_ID {
                aggregates.push(row.clone());
            }
            row.scenario_id = format!("{}@r{r}", row.scenario_id);
            out.push(row);
        }
    }
    let Some(first) = aggregates.first().cloned() else { return out };
    let n = aggregates.len() as f64;
    let mut mean_row = MetricsRow { scenario_id: MEAN_ID.into(), ..first.clone() };
    let mut std_row = MetricsRow { scenario_id: STD_ID.into(), ..first };
    for i in 0..METRIC_COLUMNS.len() {
        let vals: Option<Vec<f64>> = aggregates.iter().map(|a| a.values[i]).collect();
        let (m, s) = match vals {
            Some(v) => {
                let m = v.iter().sum::<f64>() / n;
                let var = if v.len() > 1 { v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
                (Some(m), Some(var.sqrt()))
            }
            None => (None, None),
        };
        mean_row.values[i] = m;
        std_row.values[i] = s;
    }
    out.push(mean_row);
    out.push(std_row);
    out
}

fn format_value(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.6}"))
}

pub fn rows_to_csv(rows: &[MetricsRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER).expect("in-memory write");
    for r in rows {
        let mut record = vec![r.scenario_id.clone(), r.scenario_type.clone(), r.planner.clone()];
        record.extend(r.values.iter().map(|v| format_value(*v)));
        w.write_record(&record).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
}

pub fn write_csv(path: impl AsRef<Path>, rows: &[MetricsRow]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, rows_to_csv(rows)).map_err(|e| Error::io(path, e))
}

pub fn parse_csv(text: &str, source: &str) -> Result<Vec<MetricsRow>> {
    let schema = |message: String| Error::Schema { path: source.to_string(), message };
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| schema(e.to_string()))?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(schema(format!("unexpected header `{}`", header.iter().collect::<Vec<_>>().join(","))));
    }
    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| schema(e.to_string()))?;
        let mut values = [None; 8];
        for (i, v) in values.iter_mut().enumerate() {
            let cell = &record[3 + i];
            if !cell.is_empty() {
                *v = Some(cell.parse::<f64>().map_err(|e| schema(format!("row {}: {}: {e}", line + 2, METRIC_COLUMNS[i])))?);
            }
        }
        rows.push(MetricsRow {
            scenario_id: record[0].to_string(),
            scenario_type: record[1].to_string(),
            planner: record[2].to_string(),
            values,
        });
    }
    Ok(rows)
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<Vec<MetricsRow>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text, &path.display().to_string())
}

/// Summary row per planner: the repeat mean when present, else the aggregate.
pub fn summary_rows(rows: &[MetricsRow]) -> Vec<MetricsRow> {
    let mut by_planner: BTreeMap<&str, &MetricsRow> = BTreeMap::new();
    for r in rows {
        let rank = |x: &MetricsRow| match x.scenario_id.as_str() {
            MEAN_ID => 2,
            AGGREGATE_ID => 1,
            _ => 0,
        };
        if rank(r) == 0 {
            continue;
        }
        if by_planner.get(r.planner.as_str()).is_none_or(|cur| rank(r) > rank(cur)) {
            by_planner.insert(&r.planner, r);
        }
    }
    by_planner.into_values().cloned().collect()
}

/// Planners side by side, best score first (ties and missing scores fall
/// back to lower ADE, then name).
pub fn comparison_table(rows: &[MetricsRow]) -> String {
    let mut summaries = summary_rows(rows);
    summaries.sort_by(|a, b| {
        let score = |r: &MetricsRow| r.value("score").unwrap_or(f64::NEG_INFINITY);
        let ade = |r: &MetricsRow| r.value("ade").unwrap_or(f64::INFINITY);
        score(b).total_cmp(&score(a)).then(ade(a).total_cmp(&ade(b))).then(a.planner.cmp(&b.planner))
    });
    let width = summaries.iter().map(|r| r.planner.len()).max().unwrap_or(0).max(10);
    let mut out = format!("{:<20}", "metric");
    for r in &summaries {
        let _ = write!(out, " {:>width$}", r.planner);
    }
    out.push('\n');
    for (i, column) in METRIC_COLUMNS.iter().enumerate() {
        let _ = write!(out, "{column:<20}");
        for r in &summaries {
            let cell = r.values[i].map_or_else(|| "-".to_string(), |v| format!("{v:.3}"));
            let _ = write!(out, " {cell:>width$}");
        }
        out.push('\n');
    }
    out
}

/// One CSV per metric with `planner,scenario_id,value` for every
/// per-scenario row that has the metric.
pub fn write_plot_data(dir: impl AsRef<Path>, rows: &[MetricsRow]) -> Result<Vec<std::path::PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    for (i, column) in METRIC_COLUMNS.iter().enumerate() {
        let series: Vec<&MetricsRow> = rows.iter().filter(|r| !r.is_summary() && r.values[i].is_some()).collect();
        if series.is_empty() {
            continue;
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["planner", "scenario_id", "value"]).expect("in-memory write");
        for r in series {
            w.write_record([r.planner.as_str(), r.scenario_id.as_str(), &format_value(r.values[i])]).expect("in-memory write");
        }
        let path = dir.join(format!("{column}.csv"));
        std::fs::write(&path, w.into_inner().expect("in-memory flush")).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}
