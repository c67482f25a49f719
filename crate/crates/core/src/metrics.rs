//! Run-level metrics, the results CSV, and grouped summaries.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schedulers::SchedulerKind;
use crate::sim::IntervalReport;

/// CSV column order; the results file's stable contract.
pub const CSV_HEADER: [&str; 11] = [
    "scheduler",
    "seed",
    "users",
    "tasks_released",
    "tasks_completed",
    "sla_violations",
    "avg_response_ms",
    "energy_j",
    "migrations",
    "avg_migration_time_ms",
    "avg_schedule_time_ms",
];

/// Numeric metrics reported by [`summarize`], in display order.
pub const SUMMARY_METRICS: [&str; 8] = [
    "tasks_released",
    "tasks_completed",
    "sla_violations",
    "avg_response_ms",
    "energy_j",
    "migrations",
    "avg_migration_time_ms",
    "avg_schedule_time_ms",
];

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("bad csv header: expected `{expected}`, found `{found}`")]
    Header { expected: String, found: String },
    #[error("line {line}: bad `{column}` value `{value}`")]
    Field { line: u64, column: &'static str, value: String },
}

/// One interval's contribution to a run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IntervalMetrics {
    pub interval: u64,
    pub tasks_released: u64,
    pub tasks_completed: u64,
    pub sla_violations: u64,
    pub avg_response_ms: f64,
    pub energy_j: f64,
    pub migrations: u64,
    pub avg_migration_time_ms: f64,
    pub schedule_time_ms: f64,
}

/// Aggregate metrics of one `(scheduler, seed, users)` run. Only offloadable
/// tasks are counted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scheduler: SchedulerKind,
    pub seed: u64,
    pub users: u32,
    pub tasks_released: u64,
    pub tasks_completed: u64,
    pub sla_violations: u64,
    pub avg_response_ms: f64,
    pub energy_j: f64,
    pub migrations: u64,
    pub avg_migration_time_ms: f64,
    pub avg_schedule_time_ms: f64,
    pub intervals: u64,
    /// Assigned but unfinished at the horizon.
    pub tasks_dropped: u64,
    /// Never assigned by the horizon.
    pub tasks_pending: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub series: Vec<IntervalMetrics>,
}

impl RunReport {
    pub fn new(scheduler: SchedulerKind, seed: u64, users: u32) -> Self {
        Self {
            scheduler,
            seed,
            users,
            tasks_released: 0,
            tasks_completed: 0,
            sla_violations: 0,
            avg_response_ms: 0.0,
            energy_j: 0.0,
            migrations: 0,
            avg_migration_time_ms: 0.0,
            avg_schedule_time_ms: 0.0,
            intervals: 0,
            tasks_dropped: 0,
            tasks_pending: 0,
            series: Vec::new(),
        }
    }

    /// Folds one simulated interval into the running totals and means.
    pub fn accumulate(&mut self, interval: &IntervalReport, released: u64, schedule_time: Duration) {
        let mut m = IntervalMetrics {
            interval: interval.interval,
            tasks_released: released,
            energy_j: interval.energy_j(),
            sla_violations: interval.deadline_misses as u64,
            migrations: interval.migrations as u64,
            schedule_time_ms: schedule_time.as_secs_f64() * 1e3,
            ..Default::default()
        };
        for c in interval.offloadable_completions() {
            m.tasks_completed += 1;
            let ms = c.response().as_millis_f64();
            m.avg_response_ms += (ms - m.avg_response_ms) / m.tasks_completed as f64;
            self.tasks_completed += 1;
            self.avg_response_ms += (ms - self.avg_response_ms) / self.tasks_completed as f64;
        }
        if m.migrations > 0 {
            m.avg_migration_time_ms = interval.migration_time.as_millis_f64() / m.migrations as f64;
            let prev = self.migrations as f64;
            self.migrations += m.migrations;
            self.avg_migration_time_ms =
                (self.avg_migration_time_ms * prev + interval.migration_time.as_millis_f64()) / self.migrations as f64;
        }
        self.tasks_released += released;
        self.sla_violations += m.sla_violations;
        self.energy_j += m.energy_j;
        self.intervals += 1;
        self.avg_schedule_time_ms += (m.schedule_time_ms - self.avg_schedule_time_ms) / self.intervals as f64;
        self.series.push(m);
    }

    /// Value of a [`SUMMARY_METRICS`] column.
    pub fn metric(&self, name: &str) -> Option<f64> {
        Some(match name {
            "tasks_released" => self.tasks_released as f64,
            "tasks_completed" => self.tasks_completed as f64,
            "sla_violations" => self.sla_violations as f64,
            "avg_response_ms" => self.avg_response_ms,
            "energy_j" => self.energy_j,
            "migrations" => self.migrations as f64,
            "avg_migration_time_ms" => self.avg_migration_time_ms,
            "avg_schedule_time_ms" => self.avg_schedule_time_ms,
            _ => return None,
        })
    }

    fn csv_record(&self) -> [String; 11] {
        [
            self.scheduler.name().to_string(),
            self.seed.to_string(),
            self.users.to_string(),
            self.tasks_released.to_string(),
            self.tasks_completed.to_string(),
            self.sla_violations.to_string(),
            sig6(self.avg_response_ms),
            sig6(self.energy_j),
            self.migrations.to_string(),
            sig6(self.avg_migration_time_ms),
            sig6(self.avg_schedule_time_ms),
        ]
    }
}

/// Rounds to six significant digits.
pub fn round_sig6(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.5e}").parse().unwrap_or(x)
}

/// Plain decimal rendering of `x` rounded to six significant digits.
pub fn sig6(x: f64) -> String {
    let r = round_sig6(x);
    if r == 0.0 {
        "0".to_string()
    } else {
        r.to_string()
    }
}

pub fn write_csv<W: Write>(reports: &[RunReport], out: W) -> Result<(), MetricsError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in reports {
        w.write_record(r.csv_record())?;
    }
    w.flush().map_err(|source| MetricsError::Io {
        path: "<writer>".into(),
        source,
    })?;
    Ok(())
}

pub fn csv_string(reports: &[RunReport]) -> String {
    let mut buf = Vec::new();
    write_csv(reports, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("csv is utf-8")
}

pub fn export_csv(reports: &[RunReport], path: &Path) -> Result<(), MetricsError> {
    let io = |source| MetricsError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut file = File::create(path).map_err(io)?;
    file.write_all(csv_string(reports).as_bytes()).map_err(io)?;
    Ok(())
}

/// Parses a results CSV. Columns not in the file contract default to zero.
pub fn read_csv<R: Read>(input: R) -> Result<Vec<RunReport>, MetricsError> {
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr.headers()?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(MetricsError::Header {
            expected: CSV_HEADER.join(","),
            found: header.iter().collect::<Vec<_>>().join(","),
        });
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i as u64 + 2;
        let field = |k: usize| rec.get(k).unwrap_or("");
        fn parse<T: std::str::FromStr>(line: u64, column: &'static str, value: &str) -> Result<T, MetricsError> {
            value.parse().map_err(|_| MetricsError::Field {
                line,
                column,
                value: value.to_string(),
            })
        }
        let mut r = RunReport::new(
            parse(line, CSV_HEADER[0], field(0))?,
            parse(line, CSV_HEADER[1], field(1))?,
            parse(line, CSV_HEADER[2], field(2))?,
        );
        r.tasks_released = parse(line, CSV_HEADER[3], field(3))?;
        r.tasks_completed = parse(line, CSV_HEADER[4], field(4))?;
        r.sla_violations = parse(line, CSV_HEADER[5], field(5))?;
        r.avg_response_ms = parse(line, CSV_HEADER[6], field(6))?;
        r.energy_j = parse(line, CSV_HEADER[7], field(7))?;
        r.migrations = parse(line, CSV_HEADER[8], field(8))?;
        r.avg_migration_time_ms = parse(line, CSV_HEADER[9], field(9))?;
        r.avg_schedule_time_ms = parse(line, CSV_HEADER[10], field(10))?;
        out.push(r);
    }
    Ok(out)
}

pub fn import_csv(path: &Path) -> Result<Vec<RunReport>, MetricsError> {
    let file = File::open(path).map_err(|source| MetricsError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_csv(file)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Stat {
        if values.is_empty() {
            return Stat::default();
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Stat { mean, std: var.sqrt() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scheduler: SchedulerKind,
    pub users: u32,
    pub runs: usize,
    /// One entry per [`SUMMARY_METRICS`] name, same order.
    pub stats: Vec<Stat>,
}

impl SummaryRow {
    pub fn stat(&self, metric: &str) -> Option<Stat> {
        SUMMARY_METRICS.iter().position(|m| *m == metric).map(|i| self.stats[i])
    }
}

/// Mean and population standard deviation per `(scheduler, users)` group,
/// ordered by scheduler name, then users.
pub fn summarize(reports: &[RunReport]) -> Vec<SummaryRow> {
    let mut keys: Vec<(SchedulerKind, u32)> = reports.iter().map(|r| (r.scheduler, r.users)).collect();
    keys.sort_by(|a, b| (a.0.name(), a.1).cmp(&(b.0.name(), b.1)));
    keys.dedup();
    keys.into_iter()
        .map(|(scheduler, users)| {
            let group: Vec<&RunReport> =
                reports.iter().filter(|r| r.scheduler == scheduler && r.users == users).collect();
            let stats = SUMMARY_METRICS
                .iter()
                .map(|m| Stat::of(&group.iter().map(|r| r.metric(m).unwrap_or(0.0)).collect::<Vec<_>>()))
                .collect();
            SummaryRow {
                scheduler,
                users,
                runs: group.len(),
                stats,
            }
        })
        .collect()
}

/// Plain-text table of `mean ± std` cells.
pub fn render_summary(rows: &[SummaryRow]) -> String {
    let mut header = vec!["scheduler".to_string(), "users".into(), "runs".into()];
    header.extend(SUMMARY_METRICS.iter().map(|m| m.to_string()));
    let mut table = vec![header];
    for r in rows {
        let mut line = vec![r.scheduler.name().to_string(), r.users.to_string(), r.runs.to_string()];
        line.extend(r.stats.iter().map(|s| format!("{} ± {}", sig6(s.mean), sig6(s.std))));
        table.push(line);
    }
    let widths: Vec<usize> = (0..table[0].len())
        .map(|c| table.iter().map(|l| l[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for line in &table {
        for (c, cell) in line.iter().enumerate() {
            if c > 0 {
                out.push_str("  ");
            }
            let pad = widths[c] - cell.chars().count();
            let _ = write!(out, "{cell}{}", " ".repeat(pad));
        }
        let trimmed = out.trim_end().len();
        out.truncate(trimmed);
        out.push('\n');
    }
    out
}
