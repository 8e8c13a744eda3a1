//! Monte Carlo check of the closed-form attempt model.
//!
//! Each trial drives one OBU and the RSU through the real protocol state
//! machines under the model's assumptions: a single vehicle on the RSU's
//! line, a fixed SUM-to-ACK delay, and an RSU that acknowledges every SUM
//! immediately. The first-success histogram is compared bin by bin against
//! [`first_success_pmf`] with a three-sigma binomial band.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::analytic::{first_success_pmf, AnalyticParams};
use crate::channel::sample_reception;
use crate::protocol::{ObuPhase, ObuState, ProtocolParams, RsuState};
use crate::types::{TimeMs, VehicleId};

pub const SIGMA_BAND: f64 = 3.0;

#[derive(Debug, Clone, PartialEq)]
pub struct BinCheck {
    /// Zero-based attempt index.
    pub n: usize,
    pub analytic: f64,
    pub count: u64,
    pub expected: f64,
    pub sigma: f64,
    pub within: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub trials: u64,
    pub bins: Vec<BinCheck>,
    /// Trials with no success within the analytic horizon.
    pub unresolved: u64,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.bins.iter().all(|b| b.within)
    }
}

/// Runs one trial; returns the zero-based index of the successful attempt,
/// or `None` if `max_attempts` SUMs all failed.
fn run_trial(
    params: &AnalyticParams,
    protocol: &ProtocolParams,
    tau: TimeMs,
    max_attempts: usize,
    rng: &mut ChaCha8Rng,
) -> Option<usize> {
    let id = VehicleId(0);
    let distance_at = |t: TimeMs| params.trigger_distance - params.mean_speed * t.as_secs_f64();
    let per_at = |t: TimeMs| params.profile().per(distance_at(t));

    let (obu, _) = ObuState::new(id).on_sam(TimeMs::ZERO, protocol);
    let (mut obu, _) = obu
        .on_trigger(TimeMs::ZERO, protocol)
        .expect("fresh OBU accepts the trigger");
    let mut rsu = RsuState::new(TimeMs::ZERO);
    let mut sum_tx = TimeMs::ZERO;

    for n in 0..max_attempts {
        if n > 0 {
            let deadline = obu.retry_deadline.expect("awaiting ACK keeps a deadline");
            sum_tx = deadline;
            obu = obu.on_retry_timer(deadline, protocol).0;
        }
        debug_assert_eq!(obu.attempts as usize, n + 1);
        if sample_reception(rng, per_at(sum_tx)) {
            let (next, out) = rsu.on_sum(sum_tx, id, protocol);
            rsu = next;
            let ack = out
                .transmissions
                .into_iter()
                .next()
                .expect("unit batch flushes on every SUM");
            let ack_rx = sum_tx + tau;
            if sample_reception(rng, per_at(ack_rx)) {
                obu = obu.on_ack(ack_rx, &ack.recipients).0;
            }
        }
        if obu.phase == ObuPhase::Complete {
            return Some(n);
        }
    }
    None
}

/// Compares `trials` protocol runs with the analytic pmf for `n <= n_check`.
pub fn validate(
    params: &AnalyticParams,
    trials: u64,
    n_check: usize,
    seed: u64,
) -> ValidationReport {
    let pmf = first_success_pmf(params);
    let tau = TimeMs((params.tau * 1000.0).round() as u64);
    let protocol = ProtocolParams {
        sum_repeat_interval: TimeMs((params.sum_repeat * 1000.0).round() as u64),
        ack_interval: TimeMs(1),
        ack_batch_size: 1,
        sam_period: TimeMs::from_secs(1),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = vec![0u64; n_check + 1];
    let mut unresolved = 0;
    for _ in 0..trials {
        match run_trial(params, &protocol, tau, pmf.len(), &mut rng) {
            Some(n) if n <= n_check => counts[n] += 1,
            Some(_) => {}
            None => unresolved += 1,
        }
    }

    let total = trials as f64;
    let bins = counts
        .iter()
        .enumerate()
        .map(|(n, &count)| {
            let p = pmf.get(n).copied().unwrap_or(0.0);
            let expected = total * p;
            let sigma = (total * p * (1.0 - p)).sqrt();
            let within = (count as f64 - expected).abs() <= SIGMA_BAND * sigma + 1e-9;
            BinCheck {
                n,
                analytic: p,
                count,
                expected,
                sigma,
                within,
            }
        })
        .collect();
    ValidationReport {
        trials,
        bins,
        unresolved,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::PerCurve;

    #[test]
    fn lossless_matches_exactly() {
        let p = AnalyticParams::new(
            &PerCurve::constant(0.0).unwrap(),
            10.0,
            0.0,
            30.0,
            0.6,
            0.104,
        );
        let r = validate(&p, 1000, 5, 1);
        assert!(r.passed());
        assert_eq!(r.bins[0].count, 1000);
        assert!(r.bins[1..].iter().all(|b| b.count == 0));
        assert_eq!(r.unresolved, 0);
    }

    #[test]
    fn blocked_never_resolves() {
        let p = AnalyticParams::new(
            &PerCurve::constant(1.0).unwrap(),
            10.0,
            0.0,
            30.0,
            0.6,
            0.104,
        );
        let r = validate(&p, 200, 5, 1);
        assert!(r.passed());
        assert_eq!(r.unresolved, 200);
    }

    #[test]
    fn default_curve_within_band() {
        let curve = PerCurve::default_calibration();
        for (d, rho) in [(300.0, 30.0), (-100.0, 20.0)] {
            let p = AnalyticParams::new(&curve, rho, d, 30.0, 0.6, 0.104);
            let r = validate(&p, 20_000, 5, 7);
            assert!(r.passed(), "{d} {rho}: {:?}", r.bins);
        }
    }

    #[test]
    fn same_seed_same_report() {
        let curve = PerCurve::default_calibration();
        let p = AnalyticParams::new(&curve, 10.0, 150.0, 30.0, 0.6, 0.104);
        assert_eq!(validate(&p, 2000, 5, 3), validate(&p, 2000, 5, 3));
    }
}
