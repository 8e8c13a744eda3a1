//! Stochastic reception model.
//!
//! Packet error rate (PER) is a table lookup indexed by Tx-Rx distance and by
//! the scenario's nominal flow rate. Distances are interpolated linearly on
//! `|distance|` between knots and clamped past the last knot; densities are
//! interpolated linearly between adjacent levels and clamped outside them.
//!
//! The SUM/ACK exchange delay is drawn from a [`TauModel`].

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::Violation;
use crate::types::TimeMs;

/// Bounds on the end-to-end intra-layer delay, in ms.
pub const TAU_MIN_MS: u64 = 8;
pub const TAU_MAX_MS: u64 = 200;

const DEFAULT_CALIBRATION: &str = include_str!("../assets/default_per.toml");

#[derive(Debug, thiserror::Error)]
pub enum ChannelError {
    #[error("cannot read PER calibration {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed PER calibration {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: toml::de::Error,
    },
    #[error("invalid PER calibration: {}", crate::config::join_violations(.0))]
    Invalid(Vec<Violation>),
}

/// One density level of a [`PerCurve`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerLevel {
    pub density: f64,
    /// `(distance_m, per)` pairs, sorted by distance.
    pub knots: Vec<(f64, f64)>,
}

/// Packet error rate as a function of distance and vehicle density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerCurve {
    #[serde(rename = "level")]
    levels: Vec<PerLevel>,
}

impl PerCurve {
    /// Builds a curve, rejecting it with every violated invariant listed.
    pub fn new(levels: Vec<PerLevel>) -> Result<Self, ChannelError> {
        let curve = PerCurve { levels };
        let violations = curve.validate();
        if violations.is_empty() {
            Ok(curve)
        } else {
            Err(ChannelError::Invalid(violations))
        }
    }

    /// Same PER at every distance and density.
    pub fn constant(per: f64) -> Result<Self, ChannelError> {
        PerCurve::new(vec![PerLevel {
            density: 0.0,
            knots: vec![(0.0, per)],
        }])
    }

    /// The calibration table shipped with the crate.
    pub fn default_calibration() -> Self {
        PerCurve::parse(DEFAULT_CALIBRATION, Path::new("<builtin>"))
            .expect("builtin PER calibration is valid")
    }

    pub fn load(path: &Path) -> Result<Self, ChannelError> {
        let text = std::fs::read_to_string(path).map_err(|source| ChannelError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        PerCurve::parse(&text, path)
    }

    fn parse(text: &str, path: &Path) -> Result<Self, ChannelError> {
        let curve: PerCurve = toml::from_str(text).map_err(|source| ChannelError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        PerCurve::new(curve.levels)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("PER curve serializes")
    }

    pub fn levels(&self) -> &[PerLevel] {
        &self.levels
    }

    pub fn density_levels(&self) -> impl Iterator<Item = f64> + '_ {
        self.levels.iter().map(|l| l.density)
    }

    /// Largest knot distance over all levels; PER is flat beyond it.
    pub fn max_knot_distance(&self) -> f64 {
        self.levels
            .iter()
            .filter_map(|l| l.knots.last().map(|k| k.0))
            .fold(0.0, f64::max)
    }

    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.levels.is_empty() {
            out.push(Violation::new(
                "level",
                "at least one density level is required",
            ));
            return out;
        }
        for (i, level) in self.levels.iter().enumerate() {
            let field = format!("level[{i}]");
            if !(level.density.is_finite() && level.density >= 0.0) {
                out.push(Violation::new(
                    &field,
                    "density must be a finite number >= 0",
                ));
            }
            if level.knots.is_empty() {
                out.push(Violation::new(&field, "at least one knot is required"));
            }
            for (j, &(d, p)) in level.knots.iter().enumerate() {
                if !(d.is_finite() && d >= 0.0) {
                    out.push(Violation::new(
                        &format!("{field}.knots[{j}]"),
                        format!("distance {d} must be finite and >= 0"),
                    ));
                }
                if !(0.0..=1.0).contains(&p) {
                    out.push(Violation::new(
                        &format!("{field}.knots[{j}]"),
                        format!("per {p} must lie in [0, 1]"),
                    ));
                }
            }
            for (j, w) in level.knots.windows(2).enumerate() {
                if w[1].0 <= w[0].0 {
                    out.push(Violation::new(
                        &format!("{field}.knots[{}]", j + 1),
                        "distances must be strictly increasing",
                    ));
                }
                if w[1].1 < w[0].1 {
                    out.push(Violation::new(
                        &format!("{field}.knots[{}]", j + 1),
                        "per must be non-decreasing in distance",
                    ));
                }
            }
        }
        for (i, w) in self.levels.windows(2).enumerate() {
            if w[1].density <= w[0].density {
                out.push(Violation::new(
                    &format!("level[{}]", i + 1),
                    "density levels must be strictly increasing",
                ));
                continue;
            }
            if !out.is_empty() {
                continue;
            }
            // Both levels are piecewise linear, so comparing at the union of
            // their knots covers every distance.
            for d in w[0].knots.iter().chain(&w[1].knots).map(|k| k.0) {
                let lo = interpolate(&w[0].knots, d);
                let hi = interpolate(&w[1].knots, d);
                if hi < lo {
                    out.push(Violation::new(
                        &format!("level[{}]", i + 1),
                        format!("per at {d} m decreases with density ({lo} -> {hi})"),
                    ));
                    break;
                }
            }
        }
        out
    }

    /// Packet error rate at `distance` meters (sign ignored) for `density` veh/s.
    pub fn per(&self, distance: f64, density: f64) -> f64 {
        let d = distance.abs();
        let levels = &self.levels;
        let upper = levels.partition_point(|l| l.density < density);
        if upper == 0 {
            return interpolate(&levels[0].knots, d);
        }
        if upper == levels.len() {
            return interpolate(&levels[upper - 1].knots, d);
        }
        let (lo, hi) = (&levels[upper - 1], &levels[upper]);
        let w = (density - lo.density) / (hi.density - lo.density);
        let a = interpolate(&lo.knots, d);
        let b = interpolate(&hi.knots, d);
        a + w * (b - a)
    }

    /// Fixes the density, producing a distance-only profile with identical
    /// values. Used on hot paths where density is a per-run constant.
    pub fn at_density(&self, density: f64) -> PerProfile {
        let mut distances: Vec<f64> = self
            .levels
            .iter()
            .flat_map(|l| l.knots.iter().map(|k| k.0))
            .collect();
        distances.sort_by(f64::total_cmp);
        distances.dedup();
        PerProfile::from_knots(
            distances
                .into_iter()
                .map(|d| (d, self.per(d, density)))
                .collect(),
        )
    }
}

impl Default for PerCurve {
    fn default() -> Self {
        PerCurve::default_calibration()
    }
}

const MAX_BUCKETS: f64 = (1 << 20) as f64;

/// Linear piece covering one meter of distance, `per = base + slope * (d - b)`.
/// `None` when a knot falls strictly inside the bucket.
type Bucket = Option<(f64, f64)>;

/// PER as a function of distance only, for a fixed density.
///
/// Lookups go through a table of one-meter buckets, each holding the linear
/// piece that covers it. Values agree with direct knot interpolation up to
/// floating-point rounding.
#[derive(Debug, Clone, PartialEq)]
pub struct PerProfile {
    knots: Vec<(f64, f64)>,
    buckets: Vec<Bucket>,
    /// PER past the table when the table reaches the last knot.
    tail: Option<f64>,
}

impl PerProfile {
    fn from_knots(knots: Vec<(f64, f64)>) -> Self {
        let span = knots.last().map_or(0.0, |k| k.0).clamp(0.0, MAX_BUCKETS);
        let buckets = (0..=span as u32)
            .map(|b| {
                let lo = b as f64;
                let i = knots.partition_point(|k| k.0 <= lo);
                match (i.checked_sub(1).map(|j| knots[j]), knots.get(i)) {
                    (_, Some(k)) if k.0 < lo + 1.0 => None,
                    (Some((d0, p0)), Some(&(d1, p1))) => {
                        let slope = (p1 - p0) / (d1 - d0);
                        Some((p0 + slope * (lo - d0), slope))
                    }
                    (Some((_, p)), None) | (None, Some(&(_, p))) => Some((p, 0.0)),
                    (None, None) => None,
                }
            })
            .collect();
        let tail = match knots.last() {
            Some(&(d, p)) if d <= MAX_BUCKETS => Some(p),
            _ => None,
        };
        PerProfile {
            knots,
            buckets,
            tail,
        }
    }

    #[inline]
    pub fn per(&self, distance: f64) -> f64 {
        let d = distance.abs();
        let b = d as usize;
        match self.buckets.get(b) {
            Some(Some((base, slope))) => base + slope * (d - b as f64),
            Some(None) => interpolate(&self.knots, d),
            None => match self.tail {
                Some(p) if d.is_finite() => p,
                _ => interpolate(&self.knots, d),
            },
        }
    }

    pub fn success(&self, distance: f64) -> f64 {
        1.0 - self.per(distance)
    }

    /// `(distance, per)` such that PER equals `per` exactly at every
    /// distance at or beyond `distance`.
    pub fn plateau(&self) -> Option<(f64, f64)> {
        let &(_, last) = self.knots.last()?;
        let start = self
            .knots
            .iter()
            .rposition(|k| k.1 != last)
            .map_or(0, |i| i + 1);
        Some((self.knots[start].0, last))
    }

    pub fn max_knot_distance(&self) -> f64 {
        self.knots.last().map_or(0.0, |k| k.0)
    }
}

fn interpolate(knots: &[(f64, f64)], d: f64) -> f64 {
    let i = knots.partition_point(|k| k.0 < d);
    if i == 0 {
        return knots[0].1;
    }
    if i == knots.len() {
        return knots[i - 1].1;
    }
    let (d0, p0) = knots[i - 1];
    let (d1, p1) = knots[i];
    p0 + (p1 - p0) * (d - d0) / (d1 - d0)
}

/// Draws one Bernoulli trial: `true` (received) with probability `1 - per`,
/// resolved to 2^-32.
///
/// Always consumes exactly one `u32` from `rng`, even when the outcome is
/// certain, so that random streams stay aligned across channel settings.
/// `per = 0` always receives and `per = 1` never does.
#[inline]
pub fn sample_reception<R: Rng + ?Sized>(rng: &mut R, per: f64) -> bool {
    let threshold = ((1.0 - per) * 4_294_967_296.0) as u64;
    (rng.next_u32() as u64) < threshold
}

/// Reception draw for a curve lookup.
pub fn sample_curve_reception<R: Rng + ?Sized>(
    rng: &mut R,
    curve: &PerCurve,
    distance: f64,
    density: f64,
) -> bool {
    sample_reception(rng, curve.per(distance, density))
}

/// End-to-end SUM-to-ACK delay model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TauModel {
    Fixed(TimeMs),
    Uniform { low: TimeMs, high: TimeMs },
}

impl TauModel {
    pub fn validate(&self) -> Vec<Violation> {
        let in_range = |t: TimeMs| (TAU_MIN_MS..=TAU_MAX_MS).contains(&t.0);
        let mut out = Vec::new();
        match *self {
            TauModel::Fixed(t) => {
                if !in_range(t) {
                    out.push(Violation::new(
                        "tau_fixed",
                        format!("{} ms outside [{TAU_MIN_MS}, {TAU_MAX_MS}]", t.0),
                    ));
                }
            }
            TauModel::Uniform { low, high } => {
                if !in_range(low) {
                    out.push(Violation::new(
                        "tau_low",
                        format!("{} ms outside [{TAU_MIN_MS}, {TAU_MAX_MS}]", low.0),
                    ));
                }
                if !in_range(high) {
                    out.push(Violation::new(
                        "tau_high",
                        format!("{} ms outside [{TAU_MIN_MS}, {TAU_MAX_MS}]", high.0),
                    ));
                }
                if low > high {
                    out.push(Violation::new("tau_low", "must not exceed tau_high"));
                }
            }
        }
        out
    }

    /// Representative constant for closed-form analysis: the fixed value or
    /// the midpoint of the range.
    pub fn effective(&self) -> f64 {
        match *self {
            TauModel::Fixed(t) => t.as_secs_f64(),
            TauModel::Uniform { low, high } => (low.as_secs_f64() + high.as_secs_f64()) / 2.0,
        }
    }

    pub fn max(&self) -> TimeMs {
        match *self {
            TauModel::Fixed(t) => t,
            TauModel::Uniform { high, .. } => high,
        }
    }
}

pub fn sample_tau<R: Rng + ?Sized>(rng: &mut R, model: &TauModel) -> TimeMs {
    match *model {
        TauModel::Fixed(t) => t,
        TauModel::Uniform { low, high } => TimeMs(rng.random_range(low.0..=high.0)),
    }
}

/// Where a scenario's PER curve comes from.
///
/// Written in configuration files as `"default"`, `"constant:<per>"`, or a
/// path to a calibration file.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum ChannelSpec {
    #[default]
    Default,
    Constant(f64),
    File(PathBuf),
}

impl ChannelSpec {
    pub fn resolve(&self) -> Result<PerCurve, ChannelError> {
        match self {
            ChannelSpec::Default => Ok(PerCurve::default_calibration()),
            ChannelSpec::Constant(p) => PerCurve::constant(*p),
            ChannelSpec::File(path) => PerCurve::load(path),
        }
    }
}

impl fmt::Display for ChannelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChannelSpec::Default => f.write_str("default"),
            ChannelSpec::Constant(p) => write!(f, "constant:{p}"),
            ChannelSpec::File(path) => write!(f, "{}", path.display()),
        }
    }
}

impl FromStr for ChannelSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.is_empty() {
            return Err("channel must not be empty".into());
        }
        if s == "default" {
            return Ok(ChannelSpec::Default);
        }
        if let Some(p) = s.strip_prefix("constant:") {
            let per: f64 = p
                .trim()
                .parse()
                .map_err(|_| format!("invalid constant PER {p:?}"))?;
            if !(0.0..=1.0).contains(&per) {
                return Err(format!("constant PER {per} outside [0, 1]"));
            }
            return Ok(ChannelSpec::Constant(per));
        }
        Ok(ChannelSpec::File(PathBuf::from(s)))
    }
}

impl Serialize for ChannelSpec {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ChannelSpec {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
