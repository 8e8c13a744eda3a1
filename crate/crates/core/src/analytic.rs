//! Closed-form model of the number of SUM attempts until first success.
//!
//! Attempt `n` (counting from 0 at the trigger crossing) sends a SUM at
//! signed distance `d_t - T_SUM * n * v` and receives the ACK `τ` later, at
//! `d_t - (T_SUM * n + τ) * v`. The attempt succeeds when both packets get
//! through, so with `P(x) = 1 - per(x)`:
//!
//! ```text
//! s(n)   = P(d_t - T_SUM n v) * P(d_t - (T_SUM n + τ) v)
//! pmf(n) = s(n) * prod_{m < n} (1 - s(m))
//! ```
//!
//! Batching delay at the RSU is not part of this model.

use crate::channel::{PerCurve, PerProfile};
use crate::config::ScenarioConfig;
use crate::metrics::AnalyticRow;

/// Survival mass below which the automatic horizon stops.
pub const TAIL_EPSILON: f64 = 1e-6;
const HORIZON_CAP: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Horizon {
    /// Extend until the survival mass drops below [`TAIL_EPSILON`] or the
    /// vehicle has left the curve's support with no chance of success.
    Auto,
    /// Attempts `0..=n_max`.
    Fixed(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticParams {
    pub trigger_distance: f64,
    /// m/s
    pub mean_speed: f64,
    /// seconds
    pub sum_repeat: f64,
    /// seconds
    pub tau: f64,
    pub density: f64,
    pub horizon: Horizon,
    profile: PerProfile,
}

impl AnalyticParams {
    pub fn new(
        curve: &PerCurve,
        density: f64,
        trigger_distance: f64,
        mean_speed: f64,
        sum_repeat: f64,
        tau: f64,
    ) -> Self {
        AnalyticParams {
            trigger_distance,
            mean_speed,
            sum_repeat,
            tau,
            density,
            horizon: Horizon::Auto,
            profile: curve.at_density(density),
        }
    }

    /// Parameters matching a simulation scenario; τ is the tau model's
    /// representative constant.
    pub fn from_config(cfg: &ScenarioConfig, curve: &PerCurve) -> Self {
        AnalyticParams::new(
            curve,
            cfg.flow_rate,
            cfg.trigger_distance.0,
            cfg.mean_speed,
            cfg.sum_repeat_interval.as_secs_f64(),
            cfg.tau_model().effective(),
        )
    }

    pub fn with_horizon(mut self, horizon: Horizon) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn at_trigger(&self, trigger_distance: f64) -> Self {
        AnalyticParams {
            trigger_distance,
            ..self.clone()
        }
    }

    pub fn profile(&self) -> &PerProfile {
        &self.profile
    }

    /// Signed distances of the SUM and the ACK of attempt `n`.
    pub fn attempt_distances(&self, n: usize) -> (f64, f64) {
        let t = self.sum_repeat * n as f64;
        (
            self.trigger_distance - t * self.mean_speed,
            self.trigger_distance - (t + self.tau) * self.mean_speed,
        )
    }

    fn beyond_support(&self, n: usize) -> bool {
        let (sum_at, ack_at) = self.attempt_distances(n);
        let edge = self.profile.max_knot_distance();
        sum_at < -edge && ack_at < -edge
    }
}

/// Probability that attempt `n` completes the handshake.
pub fn attempt_success(params: &AnalyticParams, n: usize) -> f64 {
    let (sum_at, ack_at) = params.attempt_distances(n);
    params.profile.success(sum_at) * params.profile.success(ack_at)
}

/// Probability that the first success happens on attempt `n`, for
/// `n = 0..=n_max`. Entries sum to at most 1; the remainder is the chance of
/// never succeeding within the horizon.
pub fn first_success_pmf(params: &AnalyticParams) -> Vec<f64> {
    let mut pmf = Vec::new();
    let mut survival = 1.0;
    for n in 0..HORIZON_CAP {
        if let Horizon::Fixed(n_max) = params.horizon {
            if n > n_max {
                break;
            }
        }
        let s = attempt_success(params, n);
        pmf.push(s * survival);
        survival *= 1.0 - s;
        if params.horizon == Horizon::Auto
            && (survival < TAIL_EPSILON || (s == 0.0 && params.beyond_support(n)))
        {
            break;
        }
    }
    pmf
}

/// Conditional mean attempt count, counting the crossing SUM as attempt 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanAttempts {
    /// `None` when no attempt within the horizon can succeed.
    pub mean: Option<f64>,
    /// Probability of success within the horizon.
    pub success_mass: f64,
}

pub fn mean_attempts_from_pmf(pmf: &[f64]) -> MeanAttempts {
    let mass: f64 = pmf.iter().sum();
    let weighted: f64 = pmf
        .iter()
        .enumerate()
        .map(|(n, p)| (n as f64 + 1.0) * p)
        .sum();
    MeanAttempts {
        mean: (mass > 0.0).then(|| weighted / mass),
        success_mass: mass,
    }
}

pub fn mean_attempts(params: &AnalyticParams) -> MeanAttempts {
    mean_attempts_from_pmf(&first_success_pmf(params))
}

/// Mean attempts at each trigger distance, in input order.
pub fn sweep_trigger(params: &AnalyticParams, distances: &[f64]) -> Vec<(f64, MeanAttempts)> {
    distances
        .iter()
        .map(|&d| (d, mean_attempts(&params.at_trigger(d))))
        .collect()
}

/// Inclusive arithmetic grid `start, start + step, ..., <= stop`.
pub fn grid(start: f64, stop: f64, step: f64) -> Vec<f64> {
    assert!(step > 0.0, "grid step must be positive");
    let count = ((stop - start) / step + 1e-9).floor() as i64;
    (0..=count.max(-1))
        .map(|i| start + step * i as f64)
        .collect()
}

/// Sweep rows for several densities, densities outermost.
pub fn sweep_table(
    base: &AnalyticParams,
    curve: &PerCurve,
    densities: &[f64],
    distances: &[f64],
) -> Vec<AnalyticRow> {
    densities
        .iter()
        .flat_map(|&rho| {
            let params = AnalyticParams::new(
                curve,
                rho,
                base.trigger_distance,
                base.mean_speed,
                base.sum_repeat,
                base.tau,
            )
            .with_horizon(base.horizon);
            sweep_trigger(&params, distances)
                .into_iter()
                .map(move |(d, m)| AnalyticRow {
                    flow_rate: rho,
                    trigger_distance: d,
                    mean_attempts: m.mean,
                    success_mass: m.success_mass,
                })
        })
        .collect()
}
