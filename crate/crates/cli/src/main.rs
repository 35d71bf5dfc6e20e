//! Command-line driver: single runs, alpha sweeps and validation suites.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::thread;

use clap::{Args, Parser, Subcommand};
use fractional_ar::oracle::OracleReport;
use fractional_ar::output::{format_sig9, write_snapshot_csv};
use fractional_ar::scenario::VelocityRule;
use fractional_ar::validation::{run_suite, Suite};
use fractional_ar::{load_config, run, Error, ModelSetup, RunOutput, ScenarioKind, SimConfig};

const EXIT_FAILURE: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_ABORT: u8 = 3;
const EXIT_VALIDATION: u8 = 4;

#[derive(Parser)]
#[command(name = "fractional-ar", version, about = "Time-fractional two-class Aw-Rascle traffic solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write its snapshots.
    Run(RunArgs),
    /// Run one scenario for several fractional orders and compare them.
    Sweep(SweepArgs),
    /// Check the solver against the reference oracles.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct ModelArgs {
    /// Built-in scenario: freeway or congestion
    #[arg(long)]
    scenario: Option<ScenarioKind>,
    /// Fractional order, in (0, 1]
    #[arg(long)]
    alpha: Option<f64>,
    /// Motorcycle proportion, in (0, 1)
    #[arg(long)]
    delta: Option<f64>,
    /// Time step (s)
    #[arg(long)]
    dt: Option<f64>,
    /// Road step (m)
    #[arg(long)]
    dx: Option<f64>,
    /// Simulation time (s)
    #[arg(long)]
    t_end: Option<f64>,
    /// TOML configuration; flags may only repeat values it sets
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long, env = "FRACTIONAL_AR_OUT_DIR", default_value = "out")]
    out_dir: PathBuf,
    /// Also write a gnuplot script for the density profiles
    #[arg(long)]
    gnuplot: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Comma-separated fractional orders
    #[arg(long, value_delimiter = ',', default_values_t = [1.0, 0.9, 0.8, 0.7])]
    alphas: Vec<f64>,
}

#[derive(Args)]
struct ValidateArgs {
    /// model, roe, caputo, stepper, trends or all
    #[arg(long, default_value = "all")]
    suite: Suite,
    /// Directory for validation.csv
    #[arg(long, env = "FRACTIONAL_AR_OUT_DIR", default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Abort(String),
    Validation(usize),
    Other(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config { .. } | Error::Parse(_) | Error::Domain { .. } => Failure::Usage(e.to_string()),
            Error::NonFinite { .. } | Error::Invariant(_) | Error::Resource(_) => Failure::Abort(e.to_string()),
            Error::Io(_) => Failure::Other(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Other(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(&args.model),
        Command::Sweep(args) => cmd_sweep(&args),
        Command::Validate(args) => cmd_validate(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Abort(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_ABORT)
        }
        Err(Failure::Validation(n)) => {
            eprintln!("{n} validation check(s) failed");
            ExitCode::from(EXIT_VALIDATION)
        }
        Err(Failure::Other(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_FAILURE)
        }
    }
}

/// Defaults, then the config file, then flags. A flag that contradicts a
/// value the config file sets explicitly is a usage error.
fn build_setup(args: &ModelArgs) -> Result<ModelSetup, Failure> {
    let (mut setup, table) = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
            let table: toml::Table = text
                .parse()
                .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
            (load_config(&text)?, Some(table))
        }
        None => (ModelSetup::default(), None),
    };
    let in_config = |section: &str, key: &str| {
        table
            .as_ref()
            .and_then(|t| t.get(section))
            .and_then(|s| s.get(key))
            .is_some()
    };
    let conflict = |flag: &str, section: &str, key: &str, same: bool| {
        if in_config(section, key) && !same {
            Err(Failure::Usage(format!(
                "--{flag} conflicts with {section}.{key} in the config file"
            )))
        } else {
            Ok(())
        }
    };

    if let Some(kind) = &args.scenario {
        conflict("scenario", "scenario", "kind", *kind == setup.scenario.kind)?;
        setup.scenario.kind = kind.clone();
    }
    if let Some(alpha) = args.alpha {
        conflict("alpha", "simulation", "alpha", alpha == setup.config.alpha)?;
        setup.config.alpha = alpha;
    }
    if let Some(delta) = args.delta {
        conflict("delta", "road", "delta", delta == setup.road.delta)?;
        setup.set_delta(delta);
    }
    if let Some(dt) = args.dt {
        conflict("dt", "simulation", "dt", dt == setup.config.dt)?;
        setup.config.dt = dt;
    }
    if let Some(dx) = args.dx {
        conflict("dx", "simulation", "dx", dx == setup.config.dx)?;
        setup.config.dx = dx;
    }
    if let Some(t_end) = args.t_end {
        conflict("t-end", "simulation", "t_end", t_end == setup.config.t_end)?;
        setup.config.t_end = t_end;
        if !in_config("simulation", "output_times") {
            let mut times: Vec<f64> = SimConfig::default()
                .output_times
                .into_iter()
                .filter(|&t| t < t_end)
                .collect();
            times.push(t_end);
            setup.config.output_times = times;
        }
    }
    setup.validate()?;
    Ok(setup)
}

fn snapshot_file_name(time: f64) -> String {
    format!("snapshot_t{}.csv", format_sig9(time))
}

fn metadata_text(setup: &ModelSetup, out: &RunOutput) -> String {
    let mut text = String::from("# fractional-ar run metadata; pass this file to --config to reproduce the run\n");
    text.push_str(&setup.to_config_text());
    let s = out.stability;
    let _ = writeln!(text, "# steps = {}", out.steps);
    let _ = writeln!(text, "# wall_time_s = {:.6}", out.wall_time.as_secs_f64());
    let _ = writeln!(text, "# stability.max_wave_speed = {}", format_sig9(s.max_wave_speed));
    let _ = writeln!(text, "# stability.courant_like_number = {}", format_sig9(s.courant_like_number));
    let _ = writeln!(text, "# stability.ok = {}", s.ok);
    let _ = writeln!(text, "# clamp_events = {}", out.clamp_events);
    if setup.scenario.kind == ScenarioKind::Congestion {
        let _ = writeln!(
            text,
            "# note: the congestion profile leaves 130 < x <= 150 undefined; filled with density 0.1"
        );
    }
    if setup.scenario.velocity_rule == VelocityRule::Equilibrium {
        let _ = writeln!(
            text,
            "# note: initial speeds are each class's equilibrium speed at the local area occupancy"
        );
    }
    text
}

fn gnuplot_script(out: &RunOutput) -> String {
    let mut text = String::from(
        "set datafile separator ','\nset xlabel 'x (m)'\nset ylabel 'total density'\nplot \\\n",
    );
    let lines: Vec<String> = out
        .snapshots
        .iter()
        .map(|s| {
            format!(
                "  '{}' skip 2 using 1:($2+$4) with lines title 't={} s'",
                snapshot_file_name(s.time),
                format_sig9(s.time)
            )
        })
        .collect();
    text.push_str(&lines.join(", \\\n"));
    text.push('\n');
    text
}

fn write_run(setup: &ModelSetup, out: &RunOutput, dir: &Path, gnuplot: bool) -> Result<(), Failure> {
    fs::create_dir_all(dir)?;
    for snap in &out.snapshots {
        write_snapshot_csv(snap, setup.config.alpha, setup.road.delta, &dir.join(snapshot_file_name(snap.time)))?;
    }
    fs::write(dir.join("run.meta"), metadata_text(setup, out))?;
    if gnuplot {
        fs::write(dir.join("plot.gp"), gnuplot_script(out))?;
    }
    Ok(())
}

fn execute(setup: &ModelSetup) -> Result<RunOutput, Failure> {
    let closures = setup.closures()?;
    Ok(run(&setup.config, &setup.scenario, &setup.road, &closures)?)
}

fn cmd_run(args: &ModelArgs) -> Result<(), Failure> {
    let setup = build_setup(args)?;
    let out = execute(&setup)?;
    write_run(&setup, &out, &args.out_dir, args.gnuplot)?;
    println!(
        "{} alpha={} delta={}: {} steps in {:.2?}, {} snapshots written to {}",
        setup.scenario.kind.name(),
        setup.config.alpha,
        setup.road.delta,
        out.steps,
        out.wall_time,
        out.snapshots.len(),
        args.out_dir.display()
    );
    if !out.stability.ok {
        eprintln!(
            "warning: Courant-like number {} exceeds 1 (max wave speed {} m/s)",
            format_sig9(out.stability.courant_like_number),
            format_sig9(out.stability.max_wave_speed)
        );
    }
    Ok(())
}

fn cmd_sweep(args: &SweepArgs) -> Result<(), Failure> {
    if args.model.alpha.is_some() {
        return Err(Failure::Usage("sweep takes --alphas, not --alpha".into()));
    }
    if args.alphas.is_empty() {
        return Err(Failure::Usage("--alphas needs at least one value".into()));
    }
    let base = build_setup(&args.model)?;
    let setups = args
        .alphas
        .iter()
        .map(|&alpha| {
            let mut s = base.clone();
            s.config.alpha = alpha;
            s.validate()?;
            Ok(s)
        })
        .collect::<Result<Vec<_>, Failure>>()?;

    let results: Vec<Result<RunOutput, Failure>> = thread::scope(|scope| {
        let handles: Vec<_> = setups
            .iter()
            .map(|setup| {
                let dir = args.model.out_dir.join(format!("alpha_{}", format_sig9(setup.config.alpha)));
                scope.spawn(move || {
                    let out = execute(setup)?;
                    write_run(setup, &out, &dir, args.model.gnuplot)?;
                    Ok(out)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Failure::Other("sweep worker panicked".into()))))
            .collect()
    });

    let mut table = String::from("alpha,time,spread,mass_m,mass_c\n");
    for (setup, result) in setups.iter().zip(results) {
        let out = result?;
        for snap in &out.snapshots {
            let (mass_m, mass_c) = snap.class_masses();
            let _ = writeln!(
                table,
                "{},{},{},{},{}",
                format_sig9(setup.config.alpha),
                format_sig9(snap.time),
                format_sig9(snap.density_spread()),
                format_sig9(mass_m),
                format_sig9(mass_c)
            );
        }
    }
    fs::write(args.model.out_dir.join("comparison.csv"), &table)?;
    print!("{table}");
    Ok(())
}

fn cmd_validate(args: &ValidateArgs) -> Result<(), Failure> {
    let reports = run_suite(args.suite)?;
    fs::create_dir_all(&args.out_dir)?;
    let mut csv = format!("{}\n", OracleReport::CSV_HEADER);
    for r in &reports {
        let _ = writeln!(csv, "{}", r.csv_row());
        println!("{} {}", if r.passed { "PASS" } else { "FAIL" }, r.name);
    }
    fs::write(args.out_dir.join("validation.csv"), csv)?;
    let failed = reports.iter().filter(|r| !r.passed).count();
    println!("{} of {} checks passed", reports.len() - failed, reports.len());
    if failed > 0 {
        return Err(Failure::Validation(failed));
    }
    Ok(())
}
