//! Property suites that compare the solver against the oracles.
//!
//! Each `check_*` function returns one [`OracleReport`] per judged quantity;
//! [`run_suite`] groups them the way `fractional-ar validate --suite` does.

use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::caputo::{caputo_l1_scalar, coefficient_limit_check};
use crate::error::{Error, Result};
use crate::model::{
    class_flux, Cell, ClassState, Closures, GridState, RoadParams, VehicleClassParams,
    DEFAULT_DENSITY_FLOOR,
};
use crate::oracle::{
    caputo_quadrature, classical_step_reference, finite_difference_jacobian,
    fine_grid_reference, max_relative_difference, Criterion, OracleReport,
};
use crate::output::Snapshot;
use crate::roe::{class_jacobian, numerical_flux};
use crate::scenario::{initial_grid, Profile, Scenario, ScenarioKind};
use crate::stepper::{run, SimConfig, Solver};

/// Orders compared in the scenario matrix.
pub const ALPHAS: [f64; 4] = [1.0, 0.9, 0.8, 0.7];
/// Motorcycle shares compared in the scenario matrix.
pub const DELTAS: [f64; 2] = [0.9, 0.2];
/// Seed for every randomized check.
pub const SEED: u64 = 0x5eed_a1fa;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Model,
    Roe,
    Caputo,
    Stepper,
    Trends,
    All,
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "model" => Ok(Suite::Model),
            "roe" => Ok(Suite::Roe),
            "caputo" => Ok(Suite::Caputo),
            "stepper" => Ok(Suite::Stepper),
            "trends" => Ok(Suite::Trends),
            "all" => Ok(Suite::All),
            other => Err(Error::config(
                "suite",
                format!("unknown suite `{other}` (expected model, roe, caputo, stepper, trends or all)"),
            )),
        }
    }
}

pub fn run_suite(suite: Suite) -> Result<Vec<OracleReport>> {
    let mut out = Vec::new();
    let wants = |s: Suite| suite == Suite::All || suite == s;
    if wants(Suite::Model) {
        out.extend(check_jacobian(SEED, 1000)?);
    }
    if wants(Suite::Roe) {
        out.extend(check_flux_consistency(SEED, 1000));
    }
    if wants(Suite::Caputo) {
        out.extend(check_coefficient_limit()?);
        out.extend(check_l1_accuracy()?);
    }
    let matrix = if wants(Suite::Stepper) || wants(Suite::Trends) {
        run_matrix()?
    } else {
        Vec::new()
    };
    if wants(Suite::Stepper) {
        out.extend(check_integer_order_reduction()?);
        out.extend(check_mass_conservation(&matrix));
        out.extend(check_scheme_convergence()?);
        out.extend(check_perturbation_growth(SEED)?);
    }
    if wants(Suite::Trends) {
        out.extend(check_bounds(&matrix));
        out.extend(check_smoothing_trend(&matrix));
    }
    Ok(out)
}

pub fn default_closures(delta: f64) -> Result<Closures> {
    Closures::new(
        &RoadParams {
            delta,
            ..RoadParams::default()
        },
        &VehicleClassParams::MOTORCYCLE,
        &VehicleClassParams::CAR,
        DEFAULT_DENSITY_FLOOR,
    )
}

fn scenario_label(kind: &ScenarioKind, delta: f64) -> String {
    format!("{}/delta={delta}", kind.name())
}

/// Main stepper vs the classical reference at `alpha = 1`, compared after
/// every step of full freeway and congestion runs.
pub fn check_integer_order_reduction() -> Result<Vec<OracleReport>> {
    let config = SimConfig::default();
    let road = RoadParams::default();
    let mut out = Vec::new();
    for kind in [ScenarioKind::Freeway, ScenarioKind::Congestion] {
        for delta in DELTAS {
            let closures = default_closures(delta)?;
            let scenario = Scenario::new(kind.clone(), delta);
            let (grid, boundary) = initial_grid(&scenario, &road, &closures, &config)?;
            let mut solver = Solver::new(grid.clone(), config.clone(), closures, boundary)?;
            let mut reference = grid;
            let mut worst = 0.0f64;
            for _ in 0..config.total_steps() {
                solver.step()?;
                reference = classical_step_reference(&reference, &config, &closures)?;
                worst = worst.max(max_relative_difference(solver.state(), &reference));
            }
            out.push(OracleReport::new(
                format!("reduction/{}", scenario_label(&kind, delta)),
                worst,
                0.0,
                Criterion::Absolute(1e-13),
            ));
        }
    }
    Ok(out)
}

/// `coefficient_limit_check(10^6, alpha)` against `1 / (1 - alpha)`.
pub fn check_coefficient_limit() -> Result<Vec<OracleReport>> {
    [0.5, 0.7, 0.9]
        .into_iter()
        .map(|alpha| {
            Ok(OracleReport::new(
                format!("coefficient-limit/alpha={alpha}"),
                coefficient_limit_check(1_000_000, alpha)?,
                1.0 / (1.0 - alpha),
                Criterion::Relative(1e-3),
            ))
        })
        .collect()
}

/// L1 error on `t^2` at `t = 1` for step `dt`, against quadrature.
fn l1_error_on_square(dt_inverse: usize, alpha: f64) -> Result<f64> {
    let dt = 1.0 / dt_inverse as f64;
    let samples: Vec<f64> = (0..=dt_inverse).map(|j| (j as f64 * dt).powi(2)).collect();
    let approx = caputo_l1_scalar(&samples, dt, alpha)?;
    let reference = caputo_quadrature(|s| 2.0 * s, 1.0, alpha, 4096)?;
    Ok((approx - reference).abs())
}

/// Observed L1 order on `t^2` over `dt = 1/40, 1/80, 1/160`, and exactness on
/// affine data.
pub fn check_l1_accuracy() -> Result<Vec<OracleReport>> {
    let mut out = Vec::new();
    for alpha in [0.5, 0.7, 0.9] {
        let errors = [40, 80, 160]
            .into_iter()
            .map(|n| l1_error_on_square(n, alpha))
            .collect::<Result<Vec<_>>>()?;
        for (pair, w) in errors.windows(2).enumerate() {
            out.push(OracleReport::new(
                format!("l1-order/alpha={alpha}/level={}", pair + 1),
                (w[0] / w[1]).log2(),
                1.0,
                Criterion::AtLeast,
            ));
        }
        let dt = 1.0 / 40.0;
        let samples: Vec<f64> = (0..=40).map(|j| 3.0 + 2.0 * j as f64 * dt).collect();
        out.push(OracleReport::new(
            format!("l1-affine/alpha={alpha}"),
            caputo_l1_scalar(&samples, dt, alpha)?,
            caputo_quadrature(|_| 2.0, 1.0, alpha, 1024)?,
            Criterion::Absolute(1e-12),
        ));
    }
    Ok(out)
}

/// Random state with density in `[0, 0.9]` (one in ten at vacuum) and
/// speed in `[0, v_max]`.
fn random_class_state(rng: &mut ChaCha8Rng, closure: &crate::model::ClassClosure) -> ClassState {
    let rho = if rng.gen_bool(0.1) { 0.0 } else { rng.gen_range(1e-3..0.9) };
    let v = rng.gen_range(0.0..=closure.params.v_max);
    ClassState::from_primitive(rho, v, closure)
}

/// `numerical_flux(U, U) = f(U)` on `samples` random cells.
pub fn check_flux_consistency(seed: u64, samples: usize) -> Vec<OracleReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let delta = rng.gen_range(0.05..0.95);
        let closures = default_closures(delta).expect("delta inside (0, 1)");
        let cell = Cell::new(
            random_class_state(&mut rng, &closures.moto),
            random_class_state(&mut rng, &closures.car),
        );
        let f = numerical_flux(&cell, &cell, &closures, 0.1);
        let exact = [
            class_flux(&cell.moto, &closures.moto),
            class_flux(&cell.car, &closures.car),
        ]
        .concat();
        for (a, b) in f.iter().zip(&exact) {
            worst = worst.max((a - b).abs() / b.abs().max(1.0));
        }
    }
    vec![OracleReport::new(
        "flux-consistency/random",
        worst,
        0.0,
        Criterion::Absolute(1e-14),
    )]
}

/// Analytic class Jacobian vs central differences on `samples` random
/// non-vacuum states, relative to the largest Jacobian entry.
pub fn check_jacobian(seed: u64, samples: usize) -> Result<Vec<OracleReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x1ac0b1a);
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let delta = rng.gen_range(0.05..0.95);
        let closures = default_closures(delta)?;
        for closure in closures.classes() {
            let rho = rng.gen_range(1e-3..0.9);
            let v = rng.gen_range(0.0..=closure.params.v_max);
            let state = ClassState::from_primitive(rho, v, closure);
            let exact = class_jacobian(&state, closure)?;
            let approx = finite_difference_jacobian(&state, closure, 1e-6);
            let scale = exact.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
            for (row_e, row_a) in exact.iter().zip(&approx) {
                for (e, a) in row_e.iter().zip(row_a) {
                    worst = worst.max((e - a).abs() / scale);
                }
            }
        }
    }
    Ok(vec![OracleReport::new(
        "jacobian-fd/random",
        worst,
        0.0,
        Criterion::Absolute(1e-6),
    )])
}

/// One run of the scenario matrix with the quantities the suites judge.
#[derive(Debug, Clone)]
pub struct MatrixRun {
    pub kind: ScenarioKind,
    pub delta: f64,
    pub alpha: f64,
    pub snapshots: Vec<Snapshot>,
    /// Largest per-class relative mass drift seen at any step.
    pub mass_drift: f64,
    pub clamp_events: usize,
    pub max_v_max: [f64; 2],
}

impl MatrixRun {
    pub fn spread_at(&self, time: f64) -> Option<f64> {
        self.snapshots
            .iter()
            .find(|s| (s.time - time).abs() < 1e-9)
            .map(Snapshot::density_spread)
    }
}

/// Both scenarios, both `delta`, all four orders at the default settings,
/// with mass tracked after every step.
pub fn run_matrix() -> Result<Vec<MatrixRun>> {
    let config = SimConfig::default();
    let road = RoadParams::default();
    let mut out = Vec::new();
    for kind in [ScenarioKind::Freeway, ScenarioKind::Congestion] {
        for delta in DELTAS {
            let closures = default_closures(delta)?;
            let scenario = Scenario::new(kind.clone(), delta);
            for alpha in ALPHAS {
                let config = SimConfig {
                    alpha,
                    ..config.clone()
                };
                out.push(matrix_run(&scenario, &road, &closures, &config)?);
            }
        }
    }
    Ok(out)
}

fn matrix_run(scenario: &Scenario, road: &RoadParams, closures: &Closures, config: &SimConfig) -> Result<MatrixRun> {
    let (grid, boundary) = initial_grid(scenario, road, closures, config)?;
    let (m0, c0) = grid.class_totals();
    let wanted = config.output_steps();
    let mut solver = Solver::new(grid, config.clone(), *closures, boundary)?;
    let mut snapshots = Vec::new();
    let mut drift = 0.0f64;
    for k in 0..=config.total_steps() {
        if k > 0 {
            solver.step()?;
            let (m, c) = solver.state().class_totals();
            drift = drift.max(((m - m0) / m0).abs()).max(((c - c0) / c0).abs());
        }
        if wanted.contains(&k) {
            snapshots.push(Snapshot::from_grid(solver.state(), closures, solver.time()));
        }
    }
    Ok(MatrixRun {
        kind: scenario.kind.clone(),
        delta: scenario.delta,
        alpha: config.alpha,
        snapshots,
        mass_drift: drift,
        clamp_events: solver.clamp_events(),
        max_v_max: [closures.moto.params.v_max, closures.car.params.v_max],
    })
}

fn run_label(r: &MatrixRun) -> String {
    format!("{}/alpha={}", scenario_label(&r.kind, r.delta), r.alpha)
}

/// Per-class mass drift over every step of every matrix run.
pub fn check_mass_conservation(matrix: &[MatrixRun]) -> Vec<OracleReport> {
    matrix
        .iter()
        .map(|r| {
            OracleReport::new(
                format!("mass-drift/{}", run_label(r)),
                r.mass_drift,
                0.0,
                Criterion::Absolute(1e-10),
            )
        })
        .collect()
}

/// Densities in `[0, 1]` and speeds in `[0, v_max + 1e-9]` in every snapshot.
pub fn check_bounds(matrix: &[MatrixRun]) -> Vec<OracleReport> {
    let mut out = Vec::new();
    for r in matrix {
        let (mut rho_lo, mut rho_hi) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut v_lo, mut v_excess) = (f64::INFINITY, f64::NEG_INFINITY);
        for s in &r.snapshots {
            for rho in s.rho_m.iter().chain(&s.rho_c) {
                rho_lo = rho_lo.min(*rho);
                rho_hi = rho_hi.max(*rho);
            }
            for (speeds, v_max) in [(&s.v_m, r.max_v_max[0]), (&s.v_c, r.max_v_max[1])] {
                for v in speeds {
                    v_lo = v_lo.min(*v);
                    v_excess = v_excess.max(v - v_max);
                }
            }
        }
        let label = run_label(r);
        out.push(OracleReport::new(format!("density-min/{label}"), rho_lo, 0.0, Criterion::AtLeast));
        out.push(OracleReport::new(format!("density-max/{label}"), rho_hi, 1.0, Criterion::AtMost));
        out.push(OracleReport::new(format!("speed-min/{label}"), v_lo, 0.0, Criterion::AtLeast));
        out.push(OracleReport::new(
            format!("speed-over-vmax/{label}"),
            v_excess,
            1e-9,
            Criterion::AtMost,
        ));
    }
    out
}

/// Congestion spread at 60 s falls strictly with the order; fractional runs
/// keep under 25% of their 1 s spread while the integer run keeps over 50%.
pub fn check_smoothing_trend(matrix: &[MatrixRun]) -> Vec<OracleReport> {
    let mut out = Vec::new();
    for delta in DELTAS {
        let runs: Vec<&MatrixRun> = ALPHAS
            .iter()
            .filter_map(|&a| {
                matrix
                    .iter()
                    .find(|r| r.kind == ScenarioKind::Congestion && r.delta == delta && r.alpha == a)
            })
            .collect();
        let label = scenario_label(&ScenarioKind::Congestion, delta);
        if runs.len() != ALPHAS.len() {
            out.push(OracleReport::new(format!("trend/{label}/missing-runs"), 0.0, 1.0, Criterion::AtLeast));
            continue;
        }
        let spread = |r: &MatrixRun, t: f64| r.spread_at(t).unwrap_or(f64::NAN);
        for w in runs.windows(2) {
            out.push(OracleReport::new(
                format!("trend/{label}/spread60(alpha={})<spread60(alpha={})", w[1].alpha, w[0].alpha),
                spread(w[1], 60.0),
                spread(w[0], 60.0),
                Criterion::Below,
            ));
        }
        for r in &runs {
            let retained = spread(r, 60.0) / spread(r, 1.0);
            let name = format!("trend/{label}/alpha={}/spread60-over-spread1", r.alpha);
            out.push(if r.alpha == 1.0 {
                OracleReport::new(name, retained, 0.5, Criterion::Above)
            } else {
                OracleReport::new(name, retained, 0.25, Criterion::Below)
            });
        }
    }
    out
}

/// Smooth ring profile used by the convergence study.
pub fn sine_scenario(delta: f64) -> Scenario {
    Scenario::new(
        ScenarioKind::Custom(Profile::Sine {
            mean: 0.2,
            amplitude: 0.05,
            periods: 1.0,
        }),
        delta,
    )
}

/// Final time of the convergence study (s).
pub const CONVERGENCE_T_END: f64 = 10.0;
/// Coarse levels `(dx, dt)` of the convergence study.
pub const CONVERGENCE_LEVELS: [(f64, f64); 3] = [(20.0, 0.2), (10.0, 0.1), (5.0, 0.05)];
/// Refinement of the reference relative to the finest level.
pub const CONVERGENCE_REFERENCE_FACTOR: usize = 8;

fn to_conserved(s: &Snapshot, closures: &Closures) -> Vec<[f64; 4]> {
    (0..s.len())
        .map(|i| {
            Cell::new(
                ClassState::from_primitive(s.rho_m[i], s.v_m[i], &closures.moto),
                ClassState::from_primitive(s.rho_c[i], s.v_c[i], &closures.car),
            )
            .to_array()
        })
        .collect()
}

fn coarsen(cells: &[[f64; 4]], factor: usize) -> Vec<[f64; 4]> {
    cells
        .chunks(factor)
        .map(|block| {
            let mut acc = [0.0; 4];
            for u in block {
                for (a, v) in acc.iter_mut().zip(u) {
                    *a += v / factor as f64;
                }
            }
            acc
        })
        .collect()
}

/// Max-norm density errors of each level against the fine reference.
pub fn convergence_errors(alpha: f64) -> Result<Vec<f64>> {
    let delta = 0.9;
    let closures = default_closures(delta)?;
    let road = RoadParams::default();
    let scenario = sine_scenario(delta);
    let config_for = |(dx, dt): (f64, f64)| SimConfig {
        alpha,
        dx,
        dt,
        t_end: CONVERGENCE_T_END,
        output_times: vec![CONVERGENCE_T_END],
        ..SimConfig::default()
    };
    let finest = config_for(CONVERGENCE_LEVELS[CONVERGENCE_LEVELS.len() - 1]);
    let reference = fine_grid_reference(&scenario, &road, &closures, &finest, CONVERGENCE_REFERENCE_FACTOR)?;
    let reference = to_conserved(
        reference
            .last()
            .ok_or_else(|| Error::Invariant("reference produced no snapshot".into()))?,
        &closures,
    );
    CONVERGENCE_LEVELS
        .iter()
        .map(|&level| {
            let config = config_for(level);
            let coarse = run(&config, &scenario, &road, &closures)?.final_state;
            let factor = (config.dx / finest.dx).round() as usize;
            let truth = coarsen(&reference, factor);
            Ok(density_error(&coarse, &truth))
        })
        .collect()
}

fn density_error(grid: &GridState, truth: &[[f64; 4]]) -> f64 {
    grid.cells
        .iter()
        .zip(truth)
        .map(|(c, t)| (c.moto.rho - t[0]).abs().max((c.car.rho - t[2]).abs()))
        .fold(0.0, f64::max)
}

/// Observed orders under simultaneous `(dx, dt)` halving at `alpha = 0.9`.
pub fn check_scheme_convergence() -> Result<Vec<OracleReport>> {
    let alpha = 0.9;
    let errors = convergence_errors(alpha)?;
    Ok(errors
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            OracleReport::new(
                format!("convergence-order/alpha={alpha}/level={}", i + 1),
                (w[0] / w[1]).log2(),
                0.8,
                Criterion::AtLeast,
            )
        })
        .collect())
}

fn max_difference(a: &GridState, b: &GridState) -> f64 {
    a.cells
        .iter()
        .zip(&b.cells)
        .flat_map(|(x, y)| x.to_array().into_iter().zip(y.to_array()))
        .map(|(p, q)| (p - q).abs())
        .fold(0.0, f64::max)
}

/// Growth of a `1e-6` random density perturbation on freeway runs, as the
/// largest max-norm difference seen over the run divided by the initial one.
pub fn check_perturbation_growth(seed: u64) -> Result<Vec<OracleReport>> {
    let config = SimConfig::default();
    let road = RoadParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e27);
    let mut out = Vec::new();
    for delta in DELTAS {
        let closures = default_closures(delta)?;
        let scenario = Scenario::new(ScenarioKind::Freeway, delta);
        for alpha in ALPHAS {
            let config = SimConfig {
                alpha,
                ..config.clone()
            };
            let (grid, boundary) = initial_grid(&scenario, &road, &closures, &config)?;
            let mut perturbed = grid.clone();
            for (cell, base) in perturbed.cells.iter_mut().zip(&grid.cells) {
                let v_m = base.moto.velocity(&closures.moto);
                let v_c = base.car.velocity(&closures.car);
                let rho_m = base.moto.rho + 1e-6 * rng.gen_range(-1.0..=1.0);
                let rho_c = base.car.rho + 1e-6 * rng.gen_range(-1.0..=1.0);
                *cell = Cell::new(
                    ClassState::from_primitive(rho_m, v_m, &closures.moto),
                    ClassState::from_primitive(rho_c, v_c, &closures.car),
                );
            }
            let initial = max_difference(&grid, &perturbed);
            let mut a = Solver::new(grid, config.clone(), closures, boundary.clone())?;
            let mut b = Solver::new(perturbed, config.clone(), closures, boundary)?;
            let mut worst = 0.0f64;
            for _ in 0..config.total_steps() {
                a.step()?;
                b.step()?;
                worst = worst.max(max_difference(a.state(), b.state()));
            }
            out.push(OracleReport::new(
                format!("perturbation-growth/{}/alpha={alpha}", scenario_label(&ScenarioKind::Freeway, delta)),
                worst / initial,
                10.0,
                Criterion::AtMost,
            ));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_parse() {
        assert_eq!("Caputo".parse::<Suite>().unwrap(), Suite::Caputo);
        assert_eq!(" all ".parse::<Suite>().unwrap(), Suite::All);
        assert!("everything".parse::<Suite>().is_err());
    }

    #[test]
    fn cheap_suites_pass() {
        for r in run_suite(Suite::Caputo).unwrap() {
            assert!(r.passed, "{}", r.csv_row());
        }
        for r in check_flux_consistency(7, 50) {
            assert!(r.passed, "{}", r.csv_row());
        }
        for r in check_jacobian(7, 50).unwrap() {
            assert!(r.passed, "{}", r.csv_row());
        }
    }

    #[test]
    fn coarsening_averages_blocks() {
        let cells = vec![[1.0, 2.0, 3.0, 4.0], [3.0, 4.0, 5.0, 6.0]];
        assert_eq!(coarsen(&cells, 2), vec![[2.0, 3.0, 4.0, 5.0]]);
    }
}
