//! Scenario configuration: schema, defaults, validation, and file I/O.
//!
//! Configuration files are flat TOML (`key = value`, one per line). Every key
//! is optional and falls back to the freeway tolling defaults; unknown keys
//! are rejected. Durations are integer milliseconds, distances meters, rates
//! vehicles per second.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::channel::{ChannelSpec, TauModel, TAU_MAX_MS, TAU_MIN_MS};
use crate::types::{Position, SignedMeters, TimeMs};

/// One violated configuration invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: String,
    pub reason: String,
}

impl Violation {
    pub fn new(field: &str, reason: impl Into<String>) -> Self {
        Violation {
            field: field.to_string(),
            reason: reason.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.reason)
    }
}

pub(crate) fn join_violations(v: &[Violation]) -> String {
    v.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("invalid config: {}", join_violations(.0))]
    Invalid(Vec<Violation>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TauMode {
    Fixed,
    #[default]
    Uniform,
}

/// Every protocol, traffic, channel, and geometry parameter of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Signed trigger-line distance from the RSU (positive = before it).
    #[serde(alias = "d_t")]
    pub trigger_distance: SignedMeters,
    /// Maximum recipients per ACK; a full batch is flushed at once.
    #[serde(alias = "B_ACK")]
    pub ack_batch_size: u32,
    /// SUM retransmission interval.
    #[serde(alias = "T_SUM")]
    pub sum_repeat_interval: TimeMs,
    /// Longest a pending SUM waits at the RSU before an ACK is sent.
    #[serde(alias = "T_ACK")]
    pub ack_interval: TimeMs,
    pub sam_period: TimeMs,
    /// BSM period per vehicle; 0 disables BSM traffic.
    pub bsm_period: TimeMs,
    /// Aggregate flow over both directions, veh/s.
    pub flow_rate: f64,
    /// Constant vehicle speed, m/s.
    pub mean_speed: f64,
    pub road_length: f64,
    /// Total lanes, split evenly between the two directions.
    pub lane_count: u32,
    pub lane_width: f64,
    pub rsu_x: f64,
    pub rsu_y: f64,
    pub sim_duration: TimeMs,
    /// Completions whose first SUM precedes this instant are left out of
    /// aggregate statistics.
    pub warmup: TimeMs,
    pub rng_seed: u64,
    pub channel: ChannelSpec,
    pub tau_mode: TauMode,
    pub tau_fixed: TimeMs,
    pub tau_low: TimeMs,
    pub tau_high: TimeMs,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            trigger_distance: SignedMeters(0.0),
            ack_batch_size: 16,
            sum_repeat_interval: TimeMs(600),
            ack_interval: TimeMs(400),
            sam_period: TimeMs(1000),
            bsm_period: TimeMs(600),
            flow_rate: 10.0,
            mean_speed: 30.0,
            road_length: 3000.0,
            lane_count: 16,
            lane_width: 3.5,
            rsu_x: 0.0,
            rsu_y: 0.0,
            sim_duration: TimeMs::from_secs(600),
            warmup: TimeMs::from_secs(100),
            rng_seed: 1,
            channel: ChannelSpec::Default,
            tau_mode: TauMode::Uniform,
            tau_fixed: TimeMs(104),
            tau_low: TimeMs(TAU_MIN_MS),
            tau_high: TimeMs(TAU_MAX_MS),
        }
    }
}

impl ScenarioConfig {
    pub fn rsu_position(&self) -> Position {
        Position::new(self.rsu_x, self.rsu_y)
    }

    pub fn tau_model(&self) -> TauModel {
        match self.tau_mode {
            TauMode::Fixed => TauModel::Fixed(self.tau_fixed),
            TauMode::Uniform => TauModel::Uniform {
                low: self.tau_low,
                high: self.tau_high,
            },
        }
    }

    pub fn lanes_per_direction(&self) -> u32 {
        self.lane_count / 2
    }

    /// Time for one vehicle to traverse the whole stretch.
    pub fn transit_time_secs(&self) -> f64 {
        self.road_length / self.mean_speed
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario config serializes")
    }

    pub fn from_toml(text: &str, origin: &Path) -> Result<Self, ConfigError> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
                .unwrap_or(0);
            ConfigError::Parse {
                path: origin.to_path_buf(),
                line,
                message: e.message().to_string(),
            }
        })?;
        let violations = validate_config(&cfg);
        if violations.is_empty() {
            Ok(cfg)
        } else {
            Err(ConfigError::Invalid(violations))
        }
    }
}

/// Lists every violated invariant; an empty list means the config is usable.
pub fn validate_config(cfg: &ScenarioConfig) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut check = |ok: bool, field: &str, reason: &str| {
        if !ok {
            out.push(Violation::new(field, reason));
        }
    };
    let positive = |x: f64| x.is_finite() && x > 0.0;

    check(
        cfg.ack_batch_size >= 1,
        "ack_batch_size",
        "must be at least 1",
    );
    check(
        cfg.sum_repeat_interval.0 > 0,
        "sum_repeat_interval",
        "must be greater than 0 ms",
    );
    check(
        cfg.ack_interval.0 > 0,
        "ack_interval",
        "must be greater than 0 ms",
    );
    check(
        cfg.sam_period.0 > 0,
        "sam_period",
        "must be greater than 0 ms",
    );
    check(
        positive(cfg.flow_rate),
        "flow_rate",
        "must be a positive number",
    );
    check(
        positive(cfg.mean_speed),
        "mean_speed",
        "must be a positive number",
    );
    check(
        positive(cfg.road_length),
        "road_length",
        "must be a positive number",
    );
    check(
        positive(cfg.lane_width),
        "lane_width",
        "must be a positive number",
    );
    check(
        cfg.lane_count >= 2 && cfg.lane_count.is_multiple_of(2),
        "lane_count",
        "must be a positive even number (lanes split across two directions)",
    );
    check(
        cfg.sim_duration.0 > 0,
        "sim_duration",
        "must be greater than 0 ms",
    );
    check(
        cfg.warmup < cfg.sim_duration,
        "warmup",
        "must be shorter than sim_duration",
    );
    check(
        cfg.rng_seed <= i64::MAX as u64,
        "rng_seed",
        "must fit in 63 bits",
    );
    check(
        cfg.rsu_x.is_finite() && cfg.rsu_y.is_finite(),
        "rsu_x",
        "RSU coordinates must be finite",
    );

    let half = cfg.road_length / 2.0;
    let d = cfg.trigger_distance.0;
    // Mirrored per direction: the eastbound line sits at rsu_x - d, the
    // westbound one at rsu_x + d.
    check(
        d.is_finite() && (cfg.rsu_x - d).abs() < half && (cfg.rsu_x + d).abs() < half,
        "trigger_distance",
        "trigger line must lie strictly inside the road stretch",
    );
    check(
        cfg.rsu_x.abs() < half,
        "rsu_x",
        "RSU must lie inside the road stretch",
    );

    if let ChannelSpec::Constant(p) = cfg.channel {
        check(
            (0.0..=1.0).contains(&p),
            "channel",
            "constant PER must lie in [0, 1]",
        );
    }
    out.extend(cfg.tau_model().validate());
    out
}

/// Reads a configuration file, filling omitted keys with defaults.
pub fn load_config(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    ScenarioConfig::from_toml(&text, path)
}
