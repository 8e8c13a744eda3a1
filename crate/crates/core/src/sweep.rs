//! Trigger-distance by flow-rate grids of independent simulation runs.

use std::path::Path;

use crate::config::ScenarioConfig;
use crate::engine::{run_batch, EngineError};
use crate::metrics::{export_cells, ExportError, RunSummary};
use crate::types::SignedMeters;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub base: ScenarioConfig,
    pub trigger_distances: Vec<f64>,
    pub flow_rates: Vec<f64>,
}

/// splitmix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the cell `(trigger_distance, flow_rate)` under `base_seed`.
/// Depends only on the three values, never on grid position, and fits the
/// 63-bit range accepted by config files.
pub fn cell_seed(base_seed: u64, trigger_distance: f64, flow_rate: f64) -> u64 {
    let h = mix(base_seed ^ mix(trigger_distance.to_bits() ^ mix(flow_rate.to_bits())));
    h & (i64::MAX as u64)
}

impl SweepGrid {
    /// One config per cell, trigger distance outermost.
    pub fn cells(&self) -> Vec<ScenarioConfig> {
        self.trigger_distances
            .iter()
            .flat_map(|&d| {
                self.flow_rates.iter().map(move |&rho| ScenarioConfig {
                    trigger_distance: SignedMeters(d),
                    flow_rate: rho,
                    rng_seed: cell_seed(self.base.rng_seed, d, rho),
                    ..self.base.clone()
                })
            })
            .collect()
    }

    pub fn run(&self, threads: usize) -> Result<Vec<RunSummary>, EngineError> {
        run_batch(&self.cells(), threads).into_iter().collect()
    }
}

pub fn write_sweep(summaries: &[RunSummary], path: &Path) -> Result<(), ExportError> {
    export_cells(summaries, path)
}
