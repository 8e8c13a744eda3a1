//! Per-vehicle completion records, aggregate statistics, and CSV export.

use std::fmt;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::ScenarioConfig;
use crate::types::{Direction, TimeMs, VehicleId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Complete,
    IncompleteDespawn,
    IncompleteSimend,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Complete => "complete",
            Outcome::IncompleteDespawn => "incomplete-despawn",
            Outcome::IncompleteSimend => "incomplete-simend",
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One vehicle that sent at least one SUM.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompletionRecord {
    pub vehicle: VehicleId,
    pub direction: Direction,
    pub sam_rx_time: Option<TimeMs>,
    pub first_sum_tx_time: TimeMs,
    pub ack_rx_time: Option<TimeMs>,
    pub attempts: u32,
    pub outcome: Outcome,
}

impl CompletionRecord {
    /// Service completion time; defined only for completed transactions.
    pub fn sct(&self) -> Option<TimeMs> {
        match (self.outcome, self.ack_rx_time) {
            (Outcome::Complete, Some(ack)) => Some(ack - self.first_sum_tx_time),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub config: ScenarioConfig,
    pub records: Vec<CompletionRecord>,
    pub bsm_tx_count: u64,
    pub bsm_rx_count: u64,
    pub bsm_expected_rx_count: u64,
    /// Total SUM transmissions; equals the sum of `attempts` over records.
    pub sum_tx_count: u64,
    pub ack_tx_count: u64,
    pub sam_tx_count: u64,
}

impl RunSummary {
    pub fn rng_seed(&self) -> u64 {
        self.config.rng_seed
    }

    /// Completed records whose first SUM falls after the warmup period.
    pub fn steady_state_completions(&self) -> impl Iterator<Item = &CompletionRecord> + '_ {
        let warmup = self.config.warmup;
        self.records
            .iter()
            .filter(move |r| r.outcome == Outcome::Complete && r.first_sum_tx_time >= warmup)
    }

    pub fn completed(&self) -> usize {
        self.records
            .iter()
            .filter(|r| r.outcome == Outcome::Complete)
            .count()
    }

    pub fn completion_fraction(&self) -> Option<f64> {
        if self.records.is_empty() {
            None
        } else {
            Some(self.completed() as f64 / self.records.len() as f64)
        }
    }

    /// BSM packet error rate over all candidate receptions.
    pub fn bsm_per(&self) -> Option<f64> {
        if self.bsm_expected_rx_count == 0 {
            None
        } else {
            Some(1.0 - self.bsm_rx_count as f64 / self.bsm_expected_rx_count as f64)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("no completed transactions after warmup")]
    Empty,
    #[error("percentile {0} outside (0, 100]")]
    BadPercentile(f64),
}

/// Nearest-rank percentile: the smallest value with at least `q`% of the
/// sample at or below it. `values` must be sorted ascending.
pub fn nearest_rank<T: Copy>(sorted: &[T], q: f64) -> Result<T, MetricError> {
    if !(q > 0.0 && q <= 100.0) {
        return Err(MetricError::BadPercentile(q));
    }
    if sorted.is_empty() {
        return Err(MetricError::Empty);
    }
    let rank = ((q / 100.0) * sorted.len() as f64 - 1e-9).ceil().max(1.0) as usize;
    Ok(sorted[rank.min(sorted.len()) - 1])
}

fn sorted_scts(summary: &RunSummary) -> Vec<TimeMs> {
    let mut scts: Vec<TimeMs> = summary
        .steady_state_completions()
        .filter_map(CompletionRecord::sct)
        .collect();
    scts.sort_unstable();
    scts
}

pub fn sct_percentile(summary: &RunSummary, q: f64) -> Result<TimeMs, MetricError> {
    nearest_rank(&sorted_scts(summary), q)
}

/// Mean SUM count over steady-state completed transactions.
pub fn mean_attempts_empirical(summary: &RunSummary) -> Result<f64, MetricError> {
    let (n, total) = summary
        .steady_state_completions()
        .fold((0u64, 0u64), |(n, t), r| (n + 1, t + r.attempts as u64));
    if n == 0 {
        Err(MetricError::Empty)
    } else {
        Ok(total as f64 / n as f64)
    }
}

/// Aggregates of one run, as exported in summary tables.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellRow {
    pub trigger_distance: f64,
    pub flow_rate: f64,
    pub seed: u64,
    pub vehicles: usize,
    pub completed: usize,
    pub steady_state_completed: usize,
    pub completion_fraction: Option<f64>,
    pub sct_min_ms: Option<u64>,
    pub sct_median_ms: Option<u64>,
    pub sct_p90_ms: Option<u64>,
    pub sct_max_ms: Option<u64>,
    pub mean_attempts: Option<f64>,
    pub sum_tx: u64,
    pub ack_tx: u64,
    pub bsm_tx: u64,
    pub bsm_rx: u64,
    pub bsm_expected_rx: u64,
    pub bsm_per: Option<f64>,
}

impl CellRow {
    pub fn from_summary(s: &RunSummary) -> Self {
        let scts = sorted_scts(s);
        let pct = |q| nearest_rank(&scts, q).ok().map(|t| t.0);
        CellRow {
            trigger_distance: s.config.trigger_distance.0,
            flow_rate: s.config.flow_rate,
            seed: s.config.rng_seed,
            vehicles: s.records.len(),
            completed: s.completed(),
            steady_state_completed: scts.len(),
            completion_fraction: s.completion_fraction(),
            sct_min_ms: scts.first().map(|t| t.0),
            sct_median_ms: pct(50.0),
            sct_p90_ms: pct(90.0),
            sct_max_ms: scts.last().map(|t| t.0),
            mean_attempts: mean_attempts_empirical(s).ok(),
            sum_tx: s.sum_tx_count,
            ack_tx: s.ack_tx_count,
            bsm_tx: s.bsm_tx_count,
            bsm_rx: s.bsm_rx_count,
            bsm_expected_rx: s.bsm_expected_rx_count,
            bsm_per: s.bsm_per(),
        }
    }
}

#[derive(Debug, Serialize)]
struct RecordRow {
    vehicle: u32,
    direction: &'static str,
    sam_rx_ms: Option<u64>,
    first_sum_tx_ms: u64,
    ack_rx_ms: Option<u64>,
    attempts: u32,
    outcome: &'static str,
    sct_ms: Option<u64>,
    steady_state: bool,
}

/// One row of an analytic mean-attempts sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalyticRow {
    pub flow_rate: f64,
    pub trigger_distance: f64,
    /// Empty when no attempt within the horizon can succeed.
    pub mean_attempts: Option<f64>,
    pub success_mass: f64,
}

#[derive(Debug, thiserror::Error)]
#[error("cannot write {path}: {source}")]
pub struct ExportError {
    pub path: PathBuf,
    #[source]
    pub source: csv::Error,
}

fn write_rows<S: Serialize, I: IntoIterator<Item = S>>(
    path: &Path,
    header: &[&str],
    rows: I,
) -> Result<(), ExportError> {
    let wrap = |source| ExportError {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(wrap)?;
    w.write_record(header).map_err(wrap)?;
    for row in rows {
        w.serialize(row).map_err(wrap)?;
    }
    w.flush().map_err(|e| wrap(e.into()))
}

pub const RECORD_COLUMNS: &[&str] = &[
    "vehicle",
    "direction",
    "sam_rx_ms",
    "first_sum_tx_ms",
    "ack_rx_ms",
    "attempts",
    "outcome",
    "sct_ms",
    "steady_state",
];

pub const CELL_COLUMNS: &[&str] = &[
    "trigger_distance",
    "flow_rate",
    "seed",
    "vehicles",
    "completed",
    "steady_state_completed",
    "completion_fraction",
    "sct_min_ms",
    "sct_median_ms",
    "sct_p90_ms",
    "sct_max_ms",
    "mean_attempts",
    "sum_tx",
    "ack_tx",
    "bsm_tx",
    "bsm_rx",
    "bsm_expected_rx",
    "bsm_per",
];

pub const ANALYTIC_COLUMNS: &[&str] = &[
    "flow_rate",
    "trigger_distance",
    "mean_attempts",
    "success_mass",
];

/// Raw mode: one row per completion record.
pub fn export_records(summary: &RunSummary, path: &Path) -> Result<(), ExportError> {
    let warmup = summary.config.warmup;
    write_rows(
        path,
        RECORD_COLUMNS,
        summary.records.iter().map(|r| RecordRow {
            vehicle: r.vehicle.0,
            direction: r.direction.as_str(),
            sam_rx_ms: r.sam_rx_time.map(|t| t.0),
            first_sum_tx_ms: r.first_sum_tx_time.0,
            ack_rx_ms: r.ack_rx_time.map(|t| t.0),
            attempts: r.attempts,
            outcome: r.outcome.as_str(),
            sct_ms: r.sct().map(|t| t.0),
            steady_state: r.first_sum_tx_time >= warmup,
        }),
    )
}

/// Summary mode: one row per run, keyed by (trigger distance, flow).
pub fn export_cells<'a>(
    summaries: impl IntoIterator<Item = &'a RunSummary>,
    path: &Path,
) -> Result<(), ExportError> {
    write_rows(
        path,
        CELL_COLUMNS,
        summaries.into_iter().map(CellRow::from_summary),
    )
}

pub fn export_analytic(rows: &[AnalyticRow], path: &Path) -> Result<(), ExportError> {
    write_rows(path, ANALYTIC_COLUMNS, rows)
}

/// Path of the metadata sidecar for a table: `<table>.meta.toml`.
pub fn sidecar_path(table: &Path) -> PathBuf {
    let mut name = table.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.toml");
    table.with_file_name(name)
}

/// Writes the sidecar echoing the configuration (and any extra keys, such as
/// a sweep grid) next to `table`.
pub fn write_metadata(
    table: &Path,
    cfg: &ScenarioConfig,
    extra: &[(&str, String)],
) -> Result<PathBuf, std::io::Error> {
    let path = sidecar_path(table);
    let mut f = File::create(&path)?;
    writeln!(
        f,
        "# metadata for {}",
        table.file_name().unwrap_or_default().to_string_lossy()
    )?;
    writeln!(f, "# seed = {}", cfg.rng_seed)?;
    for (k, v) in extra {
        writeln!(f, "# {k} = {v}")?;
    }
    f.write_all(cfg.to_toml().as_bytes())?;
    Ok(path)
}
