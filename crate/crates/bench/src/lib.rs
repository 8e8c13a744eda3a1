//! Fixtures shared by the criterion benches.

use triggerline::{Position, ScenarioConfig, TimeMs};

/// `n` receivers spread along both carriageways of the default freeway.
pub fn receivers(n: usize) -> Vec<Position> {
    let cfg = ScenarioConfig::default();
    let half = cfg.road_length / 2.0;
    (0..n)
        .map(|i| {
            let x = -half + cfg.road_length * (i as f64 + 0.5) / n as f64;
            let lane = (i % cfg.lane_count as usize) as f64;
            Position::new(
                x,
                (lane - cfg.lane_count as f64 / 2.0 + 0.5) * cfg.lane_width,
            )
        })
        .collect()
}

/// Default scenario shortened to `secs` of simulated time.
pub fn short_scenario(secs: u64, flow_rate: f64, bsm: bool) -> ScenarioConfig {
    ScenarioConfig {
        sim_duration: TimeMs::from_secs(secs),
        warmup: TimeMs::from_secs(secs / 10),
        flow_rate,
        bsm_period: if bsm {
            ScenarioConfig::default().bsm_period
        } else {
            TimeMs::ZERO
        },
        ..Default::default()
    }
}
