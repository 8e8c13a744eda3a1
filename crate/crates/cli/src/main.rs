use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use triggerline::analytic::{grid, sweep_table, AnalyticParams};
use triggerline::config::TauMode;
use triggerline::metrics::{
    export_analytic, export_cells, export_records, write_metadata, CellRow,
};
use triggerline::sweep::SweepGrid;
use triggerline::validation::validate;
use triggerline::{
    load_config, run, run_batch, ChannelSpec, ScenarioConfig, SignedMeters, Simulation, TimeMs,
};

#[derive(Parser)]
#[command(
    name = "triggerline",
    version,
    about = "Zone-activated RSU service: simulation, analysis, validation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario; writes records.csv and summary.csv into --out.
    Simulate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Output directory (created if missing).
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the trigger-distance by flow-rate cross product.
    #[command(allow_negative_numbers = true)]
    Sweep {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Trigger distances, comma separated.
        #[arg(long, value_delimiter = ',', default_values_t = [300.0, 0.0, -100.0])]
        triggers: Vec<f64>,
        /// Flow rates in veh/s, comma separated.
        #[arg(long, value_delimiter = ',', default_values_t = [10.0, 20.0, 30.0])]
        flows: Vec<f64>,
        /// Concurrent runs.
        #[arg(long, default_value_t = 1)]
        parallelism: usize,
        /// Summary table, one row per cell.
        #[arg(long)]
        out: PathBuf,
    },
    /// Mean attempts from the closed-form model over a trigger-distance range.
    #[command(allow_negative_numbers = true)]
    Analytic {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, default_value_t = -300.0)]
        from: f64,
        #[arg(long, default_value_t = 500.0)]
        to: f64,
        #[arg(long, default_value_t = 20.0)]
        step: f64,
        /// Densities in veh/s, comma separated.
        #[arg(long, value_delimiter = ',', default_values_t = [10.0, 20.0, 30.0])]
        densities: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Monte Carlo check of the closed-form attempt distribution at the
    /// configured trigger distance and flow rate.
    Validate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, default_value_t = 100_000)]
        trials: u64,
        /// Highest zero-based attempt index checked.
        #[arg(long, default_value_t = 5)]
        n_check: usize,
    },
    /// Run one scenario and write every state transition as CSV.
    Trace {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum TauModeArg {
    Fixed,
    Uniform,
}

/// Scenario file plus per-field overrides. Flags win over the file.
#[derive(Args)]
struct ScenarioArgs {
    /// TOML scenario file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Signed trigger distance, m (positive before the RSU).
    #[arg(long, visible_alias = "d-t", allow_negative_numbers = true)]
    trigger_distance: Option<f64>,
    #[arg(long, visible_alias = "b-ack")]
    ack_batch_size: Option<u32>,
    #[arg(long, visible_alias = "t-sum-ms")]
    sum_repeat_ms: Option<u64>,
    #[arg(long, visible_alias = "t-ack-ms")]
    ack_interval_ms: Option<u64>,
    #[arg(long)]
    sam_period_ms: Option<u64>,
    /// 0 disables BSM traffic.
    #[arg(long)]
    bsm_period_ms: Option<u64>,
    /// Aggregate veh/s over both directions.
    #[arg(long)]
    flow_rate: Option<f64>,
    /// m/s
    #[arg(long)]
    mean_speed: Option<f64>,
    #[arg(long)]
    road_length: Option<f64>,
    #[arg(long)]
    lane_count: Option<u32>,
    #[arg(long)]
    lane_width: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    rsu_x: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    rsu_y: Option<f64>,
    #[arg(long)]
    duration_s: Option<u64>,
    #[arg(long)]
    warmup_s: Option<u64>,
    /// "default", "constant:<per>", or a PER table path.
    #[arg(long)]
    channel: Option<ChannelSpec>,
    #[arg(long, value_enum)]
    tau_mode: Option<TauModeArg>,
    #[arg(long)]
    tau_fixed_ms: Option<u64>,
    #[arg(long)]
    tau_low_ms: Option<u64>,
    #[arg(long)]
    tau_high_ms: Option<u64>,
}

impl ScenarioArgs {
    fn resolve(&self) -> Result<ScenarioConfig, String> {
        let mut cfg = match &self.config {
            Some(path) => load_config(path).map_err(|e| e.to_string())?,
            None => ScenarioConfig::default(),
        };
        macro_rules! set {
            ($flag:ident => $field:ident $(, $wrap:expr)?) => {
                if let Some(v) = self.$flag.clone() {
                    cfg.$field = $( $wrap )? (v);
                }
            };
        }
        set!(seed => rng_seed);
        set!(trigger_distance => trigger_distance, SignedMeters);
        set!(ack_batch_size => ack_batch_size);
        set!(sum_repeat_ms => sum_repeat_interval, TimeMs);
        set!(ack_interval_ms => ack_interval, TimeMs);
        set!(sam_period_ms => sam_period, TimeMs);
        set!(bsm_period_ms => bsm_period, TimeMs);
        set!(flow_rate => flow_rate);
        set!(mean_speed => mean_speed);
        set!(road_length => road_length);
        set!(lane_count => lane_count);
        set!(lane_width => lane_width);
        set!(rsu_x => rsu_x);
        set!(rsu_y => rsu_y);
        set!(duration_s => sim_duration, TimeMs::from_secs);
        set!(warmup_s => warmup, TimeMs::from_secs);
        set!(channel => channel);
        set!(tau_fixed_ms => tau_fixed, TimeMs);
        set!(tau_low_ms => tau_low, TimeMs);
        set!(tau_high_ms => tau_high, TimeMs);
        if let Some(mode) = self.tau_mode {
            cfg.tau_mode = match mode {
                TauModeArg::Fixed => TauMode::Fixed,
                TauModeArg::Uniform => TauMode::Uniform,
            };
        }
        let violations = triggerline::validate_config(&cfg);
        if !violations.is_empty() {
            let list: Vec<String> = violations.iter().map(ToString::to_string).collect();
            return Err(format!("invalid scenario: {}", list.join("; ")));
        }
        Ok(cfg)
    }
}

fn wrote(path: &Path) {
    eprintln!("wrote {}", path.display());
}

fn simulate(scenario: &ScenarioArgs, out: &Path) -> Result<(), String> {
    let cfg = scenario.resolve()?;
    let summary = run(&cfg).map_err(|e| e.to_string())?;
    fs::create_dir_all(out).map_err(|e| format!("cannot create {}: {e}", out.display()))?;
    let records = out.join("records.csv");
    export_records(&summary, &records).map_err(|e| e.to_string())?;
    write_metadata(&records, &cfg, &[]).map_err(|e| e.to_string())?;
    wrote(&records);
    let cells = out.join("summary.csv");
    export_cells([&summary], &cells).map_err(|e| e.to_string())?;
    write_metadata(&cells, &cfg, &[]).map_err(|e| e.to_string())?;
    wrote(&cells);
    let row = CellRow::from_summary(&summary);
    eprintln!(
        "{} vehicles, {} completed after warmup, p90 SCT {}",
        row.vehicles,
        row.steady_state_completed,
        row.sct_p90_ms.map_or("n/a".into(), |t| format!("{t} ms")),
    );
    Ok(())
}

fn sweep(
    scenario: &ScenarioArgs,
    triggers: &[f64],
    flows: &[f64],
    parallelism: usize,
    out: &Path,
) -> Result<(), String> {
    if triggers.is_empty() || flows.is_empty() {
        return Err("sweep grid is empty".into());
    }
    let grid = SweepGrid {
        base: scenario.resolve()?,
        trigger_distances: triggers.to_vec(),
        flow_rates: flows.to_vec(),
    };
    let cells = grid.cells();
    let results = run_batch(&cells, parallelism.max(1));
    let mut summaries = Vec::with_capacity(results.len());
    let mut failed = 0;
    for (cell, result) in cells.iter().zip(results) {
        match result {
            Ok(s) => summaries.push(s),
            Err(e) => {
                failed += 1;
                eprintln!(
                    "cell d_t={} flow={}: {e}",
                    cell.trigger_distance.0, cell.flow_rate
                );
            }
        }
    }
    if failed > 0 {
        return Err(format!("{failed} of {} cells failed", cells.len()));
    }
    export_cells(&summaries, out).map_err(|e| e.to_string())?;
    let join = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(", ");
    write_metadata(
        out,
        &grid.base,
        &[
            ("trigger_distances", format!("[{}]", join(triggers))),
            ("flow_rates", format!("[{}]", join(flows))),
        ],
    )
    .map_err(|e| e.to_string())?;
    wrote(out);
    Ok(())
}

fn analytic(
    scenario: &ScenarioArgs,
    (from, to, step): (f64, f64, f64),
    densities: &[f64],
    out: &Path,
) -> Result<(), String> {
    if step.is_nan() || step <= 0.0 || to < from {
        return Err(format!("empty range {from}..={to} step {step}"));
    }
    let cfg = scenario.resolve()?;
    let curve = cfg.channel.resolve().map_err(|e| e.to_string())?;
    let base = AnalyticParams::from_config(&cfg, &curve);
    let rows = sweep_table(&base, &curve, densities, &grid(from, to, step));
    export_analytic(&rows, out).map_err(|e| e.to_string())?;
    write_metadata(out, &cfg, &[("tau_s", base.tau.to_string())]).map_err(|e| e.to_string())?;
    wrote(out);
    Ok(())
}

fn validate_cmd(scenario: &ScenarioArgs, trials: u64, n_check: usize) -> Result<bool, String> {
    if trials < 10_000 {
        return Err(format!("--trials must be at least 10000, got {trials}"));
    }
    let cfg = scenario.resolve()?;
    let curve = cfg.channel.resolve().map_err(|e| e.to_string())?;
    let params = AnalyticParams::from_config(&cfg, &curve);
    let report = validate(&params, trials, n_check, cfg.rng_seed);
    let mut stdout = std::io::stdout().lock();
    let mut line = |s: String| writeln!(stdout, "{s}").map_err(|e| e.to_string());
    line(format!(
        "d_t = {} m, flow = {} veh/s, tau = {} s, {} trials",
        params.trigger_distance, params.density, params.tau, trials
    ))?;
    line(format!(
        "{:>3} {:>12} {:>10} {:>12} {:>10} {}",
        "n", "pmf", "count", "expected", "3sigma", "ok"
    ))?;
    for b in &report.bins {
        line(format!(
            "{:>3} {:>12.6} {:>10} {:>12.1} {:>10.1} {}",
            b.n,
            b.analytic,
            b.count,
            b.expected,
            3.0 * b.sigma,
            if b.within { "yes" } else { "NO" }
        ))?;
    }
    line(format!("no success within horizon: {}", report.unresolved))?;
    Ok(report.passed())
}

fn trace(scenario: &ScenarioArgs, out: &Path) -> Result<(), String> {
    let cfg = scenario.resolve()?;
    let curve = cfg.channel.resolve().map_err(|e| e.to_string())?;
    let file =
        fs::File::create(out).map_err(|e| format!("cannot create {}: {e}", out.display()))?;
    let mut sink = BufWriter::new(file);
    {
        let sim = Simulation::new(&cfg, &curve).map_err(|e| e.to_string())?;
        let sim = sim.with_trace(&mut sink).map_err(|e| e.to_string())?;
        sim.run().map_err(|e| e.to_string())?;
    }
    sink.flush().map_err(|e| e.to_string())?;
    wrote(out);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate { scenario, out } => simulate(scenario, out),
        Command::Sweep {
            scenario,
            triggers,
            flows,
            parallelism,
            out,
        } => sweep(scenario, triggers, flows, *parallelism, out),
        Command::Analytic {
            scenario,
            from,
            to,
            step,
            densities,
            out,
        } => analytic(scenario, (*from, *to, *step), densities, out),
        Command::Validate {
            scenario,
            trials,
            n_check,
        } => match validate_cmd(scenario, *trials, *n_check) {
            Ok(true) => Ok(()),
            Ok(false) => Err("empirical distribution outside the 3-sigma band".into()),
            Err(e) => Err(e),
        },
        Command::Trace { scenario, out } => trace(scenario, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
