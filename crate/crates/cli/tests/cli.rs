use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn triggerline(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_triggerline"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Short, light scenario flags shared by the simulation tests.
const SMALL: &[&str] = &[
    "--duration-s",
    "60",
    "--warmup-s",
    "10",
    "--bsm-period-ms",
    "0",
];

fn with_small<'a>(args: &[&'a str]) -> Vec<&'a str> {
    let mut v = args.to_vec();
    v.extend_from_slice(SMALL);
    v
}

fn data_rows(path: &Path) -> Vec<String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(str::to_owned)
        .collect()
}

#[test]
fn simulate_writes_tables_and_sidecars() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = triggerline(&with_small(&["simulate", "--out", out.to_str().unwrap()]));
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(o.stdout.is_empty());
    for name in ["records.csv", "summary.csv"] {
        assert!(out.join(name).exists());
        assert!(out.join(format!("{name}.meta.toml")).exists());
    }
    assert_eq!(data_rows(&out.join("summary.csv")).len(), 1);
    let meta = fs::read_to_string(out.join("summary.csv.meta.toml")).unwrap();
    assert!(meta.contains("rng_seed = 1"));
}

#[test]
fn seed_override_changes_output_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        let o = triggerline(&with_small(&[
            "simulate",
            "--seed",
            seed,
            "--out",
            out.to_str().unwrap(),
        ]));
        assert!(o.status.success(), "{}", stderr(&o));
        fs::read_to_string(out.join("records.csv")).unwrap()
    };
    let a = run("a", "1");
    let b = run("b", "2");
    let c = run("c", "2");
    assert_ne!(a, b);
    assert_eq!(b, c);
}

#[test]
fn missing_config_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let o = triggerline(&[
        "simulate",
        "--config",
        "/nonexistent/scenario.toml",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(!o.status.success());
    assert!(
        stderr(&o).contains("/nonexistent/scenario.toml"),
        "{}",
        stderr(&o)
    );
}

#[test]
fn config_file_and_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("s.toml");
    fs::write(&cfg, "d_t = 300.0\nB_ACK = 4\nflow_rate = 20.0\nsim_duration = 30000\nwarmup = 5000\nbsm_period = 0\n").unwrap();
    let out = dir.path().join("run");
    let o = triggerline(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--d-t",
        "-100",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let meta = fs::read_to_string(out.join("summary.csv.meta.toml")).unwrap();
    assert!(meta.contains("trigger_distance = -100.0"), "{meta}");
    assert!(meta.contains("ack_batch_size = 4"), "{meta}");
    assert!(meta.contains("flow_rate = 20.0"), "{meta}");
}

#[test]
fn invalid_override_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = triggerline(&[
        "simulate",
        "--lane-count",
        "3",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("lane_count"), "{}", stderr(&o));
}

#[test]
fn analytic_default_range_has_123_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("a.csv");
    let o = triggerline(&["analytic", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = data_rows(&out);
    assert_eq!(rows.len(), 123);
    assert!(rows[0].starts_with("10.0,-300.0,"), "{}", rows[0]);
}

#[test]
fn analytic_single_point_is_the_sweep_minimum() {
    let dir = tempfile::tempdir().unwrap();
    let full = dir.path().join("full.csv");
    let point = dir.path().join("point.csv");
    assert!(triggerline(&[
        "analytic",
        "--densities",
        "20",
        "--out",
        full.to_str().unwrap()
    ])
    .status
    .success());
    let o = triggerline(&[
        "analytic",
        "--from",
        "0",
        "--to",
        "0",
        "--densities",
        "20",
        "--out",
        point.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let mean = |row: &str| row.split(',').nth(2).unwrap().parse::<f64>().unwrap();
    let at_zero = mean(&data_rows(&point)[0]);
    let min = data_rows(&full)
        .iter()
        .map(|r| mean(r))
        .fold(f64::INFINITY, f64::min);
    assert_eq!(at_zero, min);
}

#[test]
fn analytic_blocked_channel_reports_zero_mass() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("a.csv");
    let o = triggerline(&[
        "analytic",
        "--channel",
        "constant:1",
        "--from",
        "0",
        "--to",
        "0",
        "--densities",
        "10",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(data_rows(&out), vec!["10.0,0.0,,0.0".to_string()]);
}

#[test]
fn sweep_rows_and_parallel_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, par: &str| {
        let out = dir.path().join(name);
        let o = triggerline(&with_small(&[
            "sweep",
            "--triggers",
            "300,0,-100",
            "--flows",
            "10,20",
            "--parallelism",
            par,
            "--out",
            out.to_str().unwrap(),
        ]));
        assert!(o.status.success(), "{}", stderr(&o));
        fs::read(out).unwrap()
    };
    let serial = run("serial.csv", "1");
    let parallel = run("parallel.csv", "8");
    assert_eq!(serial, parallel);
    assert_eq!(String::from_utf8(serial).unwrap().lines().count(), 7);
    assert!(dir.path().join("serial.csv.meta.toml").exists());
}

#[test]
fn single_cell_sweep_matches_simulate() {
    let dir = tempfile::tempdir().unwrap();
    let sweep_out = dir.path().join("cell.csv");
    let o = triggerline(&with_small(&[
        "sweep",
        "--triggers",
        "-100",
        "--flows",
        "20",
        "--out",
        sweep_out.to_str().unwrap(),
    ]));
    assert!(o.status.success(), "{}", stderr(&o));
    let row = data_rows(&sweep_out).remove(0);
    let seed = row.split(',').nth(2).unwrap().to_string();

    let sim_out = dir.path().join("sim");
    let o = triggerline(&with_small(&[
        "simulate",
        "--d-t",
        "-100",
        "--flow-rate",
        "20",
        "--seed",
        &seed,
        "--out",
        sim_out.to_str().unwrap(),
    ]));
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(data_rows(&sim_out.join("summary.csv")), vec![row]);
}

#[test]
fn empty_grid_fails() {
    let dir = tempfile::tempdir().unwrap();
    let o = triggerline(&[
        "sweep",
        "--triggers",
        "",
        "--out",
        dir.path().join("x.csv").to_str().unwrap(),
    ]);
    assert!(!o.status.success());
}

#[test]
fn validate_reports_and_exits_zero() {
    let o = triggerline(&[
        "validate",
        "--trials",
        "20000",
        "--d-t",
        "300",
        "--flow-rate",
        "30",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(
        text.lines()
            .filter(|l| l.trim_end().ends_with("yes"))
            .count(),
        6,
        "{text}"
    );
}

#[test]
fn validate_lossless_is_exact() {
    let o = triggerline(&["validate", "--trials", "10000", "--channel", "constant:0"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("10000"), "{text}");
}

#[test]
fn validate_rejects_too_few_trials() {
    let o = triggerline(&["validate", "--trials", "100"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("10000"));
}

#[test]
fn trace_writes_transitions() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("trace.csv");
    let o = triggerline(&[
        "trace",
        "--duration-s",
        "70",
        "--warmup-s",
        "1",
        "--bsm-period-ms",
        "0",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(out).unwrap();
    assert!(text.starts_with("time_ms,entity,event,before,after\n"));
    assert!(text.contains("awaiting_ack"));
}
