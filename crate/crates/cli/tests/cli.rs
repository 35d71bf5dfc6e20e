use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use fractional_ar::output::read_snapshot_csv;
use fractional_ar::scenario::initial_grid;
use fractional_ar::{ModelSetup, Snapshot};

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fractional-ar"))
        .args(args)
        .env_remove("FRACTIONAL_AR_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn path_arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn csv_files(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(".csv"))
        .collect();
    names.sort();
    names
}

#[test]
fn run_writes_the_snapshot_schedule_and_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = cli(&[
        "run", "--scenario", "freeway", "--alpha", "0.9", "--delta", "0.9", "--out-dir", path_arg(&out), "--gnuplot",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        csv_files(&out),
        ["snapshot_t0.csv", "snapshot_t1.csv", "snapshot_t20.csv", "snapshot_t40.csv", "snapshot_t60.csv"]
    );
    let (snap, alpha, delta) = read_snapshot_csv(&out.join("snapshot_t20.csv")).unwrap();
    assert_eq!((snap.time, alpha, delta, snap.len()), (20.0, 0.9, 0.9, 100));

    let meta = fs::read_to_string(out.join("run.meta")).unwrap();
    for key in ["simulation.alpha = 0.9", "road.delta = 0.9", "car.tau = 5.0", "# stability.ok = true", "# wall_time_s"] {
        assert!(meta.contains(key), "missing `{key}`");
    }
    assert!(meta.contains("equilibrium speed"));
    assert!(fs::read_to_string(out.join("plot.gp")).unwrap().contains("snapshot_t60.csv"));
}

#[test]
fn metadata_alone_reproduces_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let second = dir.path().join("second");
    let o = cli(&[
        "run", "--scenario", "congestion", "--alpha", "1", "--delta", "0.2", "--t-end", "20", "--out-dir", path_arg(&first),
    ]);
    assert!(o.status.success());
    let meta = first.join("run.meta");
    assert!(fs::read_to_string(&meta).unwrap().contains("130 < x <= 150"));
    let o = cli(&["run", "--config", path_arg(&meta), "--out-dir", path_arg(&second)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let names = csv_files(&first);
    assert_eq!(names, ["snapshot_t0.csv", "snapshot_t1.csv", "snapshot_t20.csv"]);
    assert_eq!(names, csv_files(&second));
    for name in names {
        assert_eq!(fs::read(first.join(&name)).unwrap(), fs::read(second.join(&name)).unwrap());
    }
}

#[test]
fn zero_horizon_writes_the_initial_condition() {
    let dir = tempfile::tempdir().unwrap();
    let o = cli(&["run", "--t-end", "0", "--out-dir", path_arg(dir.path())]);
    assert!(o.status.success());
    assert_eq!(csv_files(dir.path()), ["snapshot_t0.csv"]);
    let (snap, _, _) = read_snapshot_csv(&dir.path().join("snapshot_t0.csv")).unwrap();

    let setup = ModelSetup::default();
    let cl = setup.closures().unwrap();
    let (grid, _) = initial_grid(&setup.scenario, &setup.road, &cl, &setup.config).unwrap();
    let want = Snapshot::from_grid(&grid, &cl, 0.0);
    for (a, b) in snap.rho_m.iter().chain(&snap.v_c).zip(want.rho_m.iter().chain(&want.v_c)) {
        assert!((a - b).abs() <= 5e-9 * b.abs());
    }
}

#[test]
fn out_dir_falls_back_to_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_fractional-ar"))
        .args(["run", "--t-end", "1"])
        .env("FRACTIONAL_AR_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert!(o.status.success());
    assert_eq!(csv_files(dir.path()), ["snapshot_t0.csv", "snapshot_t1.csv"]);
}

#[test]
fn usage_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("a.toml");
    fs::write(&cfg, "[simulation]\nalpha = 0.8\n").unwrap();
    let out = dir.path().join("o");
    let cases: Vec<Vec<&str>> = vec![
        vec!["run", "--config", path_arg(&cfg), "--alpha", "0.9", "--out-dir", path_arg(&out)],
        vec!["run", "--dx", "7", "--out-dir", path_arg(&out)],
        vec!["run", "--alpha", "1.5", "--out-dir", path_arg(&out)],
        vec!["run", "--scenario", "gridlock"],
        vec!["run", "--bogus"],
        vec!["sweep", "--alpha", "0.9", "--out-dir", path_arg(&out)],
        vec!["validate", "--suite", "everything"],
    ];
    for args in cases {
        assert_eq!(cli(&args).status.code(), Some(2), "{args:?}");
    }
    let same = cli(&["run", "--config", path_arg(&cfg), "--alpha", "0.8", "--t-end", "0", "--out-dir", path_arg(&out)]);
    assert!(same.status.success());
}

#[test]
fn blow_up_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(
        &cfg,
        "[simulation]\nt_end = 1.0\n[scenario]\nkind = \"freeway\"\nvelocity = \"explicit\"\nv_m = 1e200\nv_c = 1e200\n",
    )
    .unwrap();
    let o = cli(&["run", "--config", path_arg(&cfg), "--out-dir", path_arg(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("step 1"));
}

#[test]
fn sweep_compares_all_orders() {
    let dir = tempfile::tempdir().unwrap();
    let o = cli(&["sweep", "--scenario", "congestion", "--out-dir", path_arg(dir.path())]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for a in ["1", "0.9", "0.8", "0.7"] {
        assert_eq!(csv_files(&dir.path().join(format!("alpha_{a}"))).len(), 5);
    }
    let table = fs::read_to_string(dir.path().join("comparison.csv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(lines.next(), Some("alpha,time,spread,mass_m,mass_c"));
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 20);
    let spread = |alpha: f64, t: f64| rows.iter().find(|r| r[0] == alpha && r[1] == t).unwrap()[2];
    assert!(spread(0.7, 60.0) < spread(1.0, 60.0));
    let mass0 = rows[0][3];
    assert!(rows.iter().all(|r| (r[3] - mass0).abs() < 1e-6));
}

#[test]
fn single_order_sweep_matches_run() {
    let dir = tempfile::tempdir().unwrap();
    let sweep = dir.path().join("sweep");
    let single = dir.path().join("single");
    let common = ["--scenario", "congestion", "--t-end", "20"];
    let mut args = vec!["sweep", "--alphas", "0.8", "--out-dir", path_arg(&sweep)];
    args.extend(common);
    assert!(cli(&args).status.success());
    let mut args = vec!["run", "--alpha", "0.8", "--out-dir", path_arg(&single)];
    args.extend(common);
    assert!(cli(&args).status.success());
    let swept = sweep.join("alpha_0.8");
    for name in csv_files(&single) {
        assert_eq!(fs::read(single.join(&name)).unwrap(), fs::read(swept.join(&name)).unwrap());
    }
}

#[test]
fn validate_caputo_suite_passes_and_writes_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = cli(&["validate", "--suite", "caputo", "--out-dir", path_arg(dir.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let report = fs::read_to_string(dir.path().join("validation.csv")).unwrap();
    let mut lines = report.lines();
    assert_eq!(lines.next(), Some("name,observed,reference,criterion,tolerance,pass"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 12);
    assert!(rows.iter().all(|r| r.ends_with(",true")));
    assert!(rows.iter().any(|r| r.starts_with("coefficient-limit/alpha=0.7")));
}
