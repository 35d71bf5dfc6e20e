//! Independent reference computations used to check the solver.
//!
//! Nothing here calls into the Roe flux, the L1 memory code or the explicit
//! stepper; only the model closures are shared. Agreement with the main path
//! is therefore evidence, not a tautology. The one exception is
//! [`fine_grid_reference`], which is the same scheme on a refined grid by
//! definition.

use std::fmt;

use crate::error::{Error, Result};
use crate::model::{
    class_flux, source_term, Cell, ClassClosure, ClassState, Closures, GridState,
    RoadParams,
};
use crate::output::Snapshot;
use crate::scenario::Scenario;
use crate::special::gamma;
use crate::stepper::{run, BoundaryMode, SimConfig};

/// How an observed value is judged against its reference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Criterion {
    /// `|observed - reference| <= tol`
    Absolute(f64),
    /// `|observed - reference| <= tol * |reference|`
    Relative(f64),
    /// `observed >= reference`
    AtLeast,
    /// `observed <= reference`
    AtMost,
    /// `observed < reference`
    Below,
    /// `observed > reference`
    Above,
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Criterion::Absolute(_) => f.write_str("abs"),
            Criterion::Relative(_) => f.write_str("rel"),
            Criterion::AtLeast => f.write_str(">="),
            Criterion::AtMost => f.write_str("<="),
            Criterion::Below => f.write_str("<"),
            Criterion::Above => f.write_str(">"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub name: String,
    pub observed: f64,
    pub reference: f64,
    pub criterion: Criterion,
    pub passed: bool,
}

impl OracleReport {
    pub fn new(name: impl Into<String>, observed: f64, reference: f64, criterion: Criterion) -> Self {
        let passed = match criterion {
            Criterion::Absolute(tol) => (observed - reference).abs() <= tol,
            Criterion::Relative(tol) => (observed - reference).abs() <= tol * reference.abs(),
            Criterion::AtLeast => observed >= reference,
            Criterion::AtMost => observed <= reference,
            Criterion::Below => observed < reference,
            Criterion::Above => observed > reference,
        };
        Self {
            name: name.into(),
            observed,
            reference,
            criterion,
            passed,
        }
    }

    /// Tolerance value, or 0 for pure inequality checks.
    pub fn tolerance(&self) -> f64 {
        match self.criterion {
            Criterion::Absolute(t) | Criterion::Relative(t) => t,
            _ => 0.0,
        }
    }

    pub const CSV_HEADER: &'static str = "name,observed,reference,criterion,tolerance,pass";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:e},{:e},{},{:e},{}",
            self.name,
            self.observed,
            self.reference,
            self.criterion,
            self.tolerance(),
            self.passed
        )
    }
}

/// Caputo derivative at `t` by direct quadrature of its defining integral.
///
/// Takes the derivative `f'` of the function. The substitution
/// `eta = t (1 - s^(1/(1-alpha)))` turns the weakly singular integral into
/// `t^(1-alpha) / ((1-alpha) Gamma(1-alpha)) * int_0^1 f'(eta(s)) ds`, which is
/// then integrated with composite Simpson on `n_nodes` intervals.
pub fn caputo_quadrature(derivative: impl Fn(f64) -> f64, t: f64, alpha: f64, n_nodes: usize) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain(
            "caputo_quadrature",
            format!("alpha must lie in (0, 1), got {alpha}"),
        ));
    }
    if n_nodes < 64 {
        return Err(Error::domain("caputo_quadrature", "need at least 64 nodes"));
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    let n = n_nodes + n_nodes % 2;
    let exponent = 1.0 / (1.0 - alpha);
    let eta = |s: f64| t * (1.0 - s.powf(exponent));
    let h = 1.0 / n as f64;
    let mut sum = derivative(eta(0.0)) + derivative(eta(1.0));
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * derivative(eta(i as f64 * h));
    }
    let integral = sum * h / 3.0;
    Ok(t.powf(1.0 - alpha) / ((1.0 - alpha) * gamma(1.0 - alpha)) * integral)
}

/// Central-difference Jacobian of the class flux with relative step `h`.
pub fn finite_difference_jacobian(state: &ClassState, closure: &ClassClosure, h: f64) -> [[f64; 2]; 2] {
    let mut out = [[0.0; 2]; 2];
    let steps = [h * state.rho.abs().max(1e-3), h * state.x_momentum.abs().max(1e-3)];
    for (col, &step) in steps.iter().enumerate() {
        let (mut plus, mut minus) = (*state, *state);
        if col == 0 {
            plus.rho += step;
            minus.rho -= step;
        } else {
            plus.x_momentum += step;
            minus.x_momentum -= step;
        }
        let fp = class_flux(&plus, closure);
        let fm = class_flux(&minus, closure);
        for row in 0..2 {
            out[row][col] = (fp[row] - fm[row]) / (2.0 * step);
        }
    }
    out
}

fn smoothed_abs(lambda: f64, eps: f64) -> f64 {
    if lambda.abs() < eps {
        0.5 * (lambda * lambda / eps + eps)
    } else {
        lambda.abs()
    }
}

/// Upwind flux for one class block, built from the numerically computed
/// spectrum of the flux Jacobian at the mean state.
fn reference_interface_flux(l: &ClassState, r: &ClassState, c: &ClassClosure, eps: f64) -> [f64; 2] {
    let floor = c.density_floor;
    if l.rho < floor && r.rho < floor {
        return [0.0, 0.0];
    }
    let fl = class_flux(l, c);
    let fr = class_flux(r, c);
    let jump = [r.rho - l.rho, r.x_momentum - l.x_momentum];
    let rho = (l.rho + r.rho) / 2.0;
    let q = (l.x_momentum + r.x_momentum) / 2.0;

    let dissipation = if rho < floor {
        [smoothed_abs(0.0, eps) * jump[0], smoothed_abs(0.0, eps) * jump[1]]
    } else {
        let p = c.pressure(rho);
        let dp = c.pressure_derivative(rho);
        let a = [[-p - rho * dp, 1.0], [-(q / rho) * (q / rho) - dp * q, 2.0 * q / rho - p]];
        let half_trace = 0.5 * (a[0][0] + a[1][1]);
        let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        let root = (half_trace * half_trace - det).max(0.0).sqrt();
        let (lo, hi) = (half_trace - root, half_trace + root);
        let apply = |m: [[f64; 2]; 2], s: f64| {
            [
                s * (m[0][0] * jump[0] + m[0][1] * jump[1]),
                s * (m[1][0] * jump[0] + m[1][1] * jump[1]),
            ]
        };
        if lo >= eps {
            apply(a, 1.0)
        } else if hi <= -eps {
            apply(a, -1.0)
        } else if hi - lo < 1e-10 {
            let s = smoothed_abs(hi, eps);
            [s * jump[0], s * jump[1]]
        } else {
            // eigenvectors (1, lambda - a00) from the first row
            let (e_lo, e_hi) = (lo - a[0][0], hi - a[0][0]);
            let det_r = e_hi - e_lo;
            let w_lo = (e_hi * jump[0] - jump[1]) / det_r;
            let w_hi = (jump[1] - e_lo * jump[0]) / det_r;
            let (s_lo, s_hi) = (smoothed_abs(lo, eps) * w_lo, smoothed_abs(hi, eps) * w_hi);
            [s_lo + s_hi, s_lo * e_lo + s_hi * e_hi]
        }
    };
    [
        (fl[0] + fr[0]) / 2.0 - dissipation[0] / 2.0,
        (fl[1] + fr[1]) / 2.0 - dissipation[1] / 2.0,
    ]
}

/// Classical explicit Roe update (`alpha = 1`) on a periodic ring, written
/// independently of the fractional stepper.
pub fn classical_step_reference(state: &GridState, config: &SimConfig, closures: &Closures) -> Result<GridState> {
    if config.alpha != 1.0 {
        return Err(Error::domain(
            "classical_step_reference",
            format!("only defined for alpha = 1, got {}", config.alpha),
        ));
    }
    if config.boundary != BoundaryMode::Periodic {
        return Err(Error::domain("classical_step_reference", "only periodic rings are supported"));
    }
    let n = state.cells.len();
    let flux_between = |a: &Cell, b: &Cell| {
        let m = reference_interface_flux(&a.moto, &b.moto, &closures.moto, config.eps_fix);
        let c = reference_interface_flux(&a.car, &b.car, &closures.car, config.eps_fix);
        [m[0], m[1], c[0], c[1]]
    };
    let lambda = config.dt / config.dx;
    let mut next = state.clone();
    next.time_level += 1;
    for i in 0..n {
        let prev = &state.cells[(i + n - 1) % n];
        let here = &state.cells[i];
        let succ = &state.cells[(i + 1) % n];
        let right = flux_between(here, succ);
        let left = flux_between(prev, here);
        let s = source_term(here, closures);
        let u = here.to_array();
        let mut out = [0.0; 4];
        for c in 0..4 {
            out[c] = u[c] - lambda * (right[c] - left[c]) + config.dt * s[c];
        }
        for c in [0, 2] {
            if out[c] < 0.0 {
                out[c] = 0.0;
                out[c + 1] = 0.0;
            }
        }
        next.cells[i] = Cell::from_array(out);
    }
    Ok(next)
}

/// Refinement limit for [`fine_grid_reference`].
pub const MAX_REFINEMENT: usize = 64;

/// The same scheme at `(dx / factor, dt / factor)`, restricted back to the
/// coarse cells by averaging the conserved variables of each block of
/// `factor` fine cells.
pub fn fine_grid_reference(
    scenario: &Scenario,
    road: &RoadParams,
    closures: &Closures,
    config: &SimConfig,
    factor: usize,
) -> Result<Vec<Snapshot>> {
    if factor == 0 || factor > MAX_REFINEMENT {
        return Err(Error::Resource(format!(
            "refinement factor {factor} outside 1..={MAX_REFINEMENT}"
        )));
    }
    let fine_config = SimConfig {
        dt: config.dt / factor as f64,
        dx: config.dx / factor as f64,
        ..config.clone()
    };
    let fine = run(&fine_config, scenario, road, closures)?;
    Ok(fine
        .snapshots
        .iter()
        .map(|s| restrict(s, factor, config.dx, closures))
        .collect())
}

fn restrict(fine: &Snapshot, factor: usize, dx: f64, closures: &Closures) -> Snapshot {
    let n = fine.len() / factor;
    let mut cells = Vec::with_capacity(n);
    for i in 0..n {
        let mut acc = [0.0; 4];
        for j in i * factor..(i + 1) * factor {
            let m = ClassState::from_primitive(fine.rho_m[j], fine.v_m[j], &closures.moto);
            let c = ClassState::from_primitive(fine.rho_c[j], fine.v_c[j], &closures.car);
            for (a, v) in acc.iter_mut().zip(Cell::new(m, c).to_array()) {
                *a += v;
            }
        }
        cells.push(Cell::from_array(acc.map(|v| v / factor as f64)));
    }
    let grid = GridState {
        cells,
        dx,
        time_level: 0,
    };
    Snapshot::from_grid(&grid, closures, fine.time)
}

/// Largest componentwise relative difference between two grids.
pub fn max_relative_difference(a: &GridState, b: &GridState) -> f64 {
    a.cells
        .iter()
        .zip(&b.cells)
        .flat_map(|(x, y)| x.to_array().into_iter().zip(y.to_array()))
        .map(|(p, q)| {
            let scale = p.abs().max(q.abs());
            if scale == 0.0 {
                0.0
            } else {
                (p - q).abs() / scale
            }
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{VehicleClassParams, DEFAULT_DENSITY_FLOOR};
    use crate::scenario::{initial_grid, ScenarioKind};

    #[test]
    fn quadrature_examples() {
        assert_eq!(caputo_quadrature(|_| 0.0, 1.0, 0.5, 64).unwrap(), 0.0);
        let v = caputo_quadrature(|_| 1.0, 1.0, 0.5, 1024).unwrap();
        assert!((v - std::f64::consts::FRAC_2_SQRT_PI).abs() < 1e-8);
        // mpmath: 2 / Gamma(2.3)
        let v = caputo_quadrature(|s| 2.0 * s, 1.0, 0.7, 1024).unwrap();
        assert!((v - 1.714_219_243_918_925_9).abs() < 1e-8);
        assert!(caputo_quadrature(|s| s, 1.0, 1.0, 128).is_err());
        assert!(caputo_quadrature(|s| s, 1.0, 0.5, 10).is_err());
    }

    #[test]
    fn quadrature_matches_power_law_at_other_times() {
        for alpha in [0.2, 0.45, 0.9] {
            let t: f64 = 2.3;
            let exact = 2.0 * t.powf(2.0 - alpha) / gamma(3.0 - alpha);
            let v = caputo_quadrature(|s| 2.0 * s, t, alpha, 1024).unwrap();
            assert!((v - exact).abs() < 1e-8 * exact, "alpha {alpha}: {v} vs {exact}");
        }
    }

    fn closures() -> Closures {
        Closures::new(
            &RoadParams::default(),
            &VehicleClassParams::MOTORCYCLE,
            &VehicleClassParams::CAR,
            DEFAULT_DENSITY_FLOOR,
        )
        .unwrap()
    }

    #[test]
    fn classical_reference_keeps_uniform_equilibrium() {
        let cl = closures();
        let cell = Cell::new(
            ClassState::from_primitive(0.2, cl.moto.equilibrium_speed(0.2), &cl.moto),
            ClassState::from_primitive(0.1, cl.car.equilibrium_speed(0.1), &cl.car),
        );
        let g = GridState::new(vec![cell; 7], 5.0).unwrap();
        let next = classical_step_reference(&g, &SimConfig::default(), &cl).unwrap();
        assert!(max_relative_difference(&g, &next) < 1e-15);
        let frac = SimConfig {
            alpha: 0.9,
            ..SimConfig::default()
        };
        assert!(classical_step_reference(&g, &frac, &cl).is_err());
    }

    #[test]
    fn factor_one_reference_is_a_plain_run() {
        let cl = closures();
        let sc = Scenario::new(ScenarioKind::Freeway, 0.9);
        let road = RoadParams::default();
        let cfg = SimConfig {
            alpha: 0.9,
            t_end: 2.0,
            output_times: vec![0.0, 2.0],
            ..SimConfig::default()
        };
        let plain = run(&cfg, &sc, &road, &cl).unwrap().snapshots;
        let reference = fine_grid_reference(&sc, &road, &cl, &cfg, 1).unwrap();
        assert_eq!(plain.len(), reference.len());
        for (a, b) in plain.iter().zip(&reference) {
            for (x, y) in a.rho_m.iter().zip(&b.rho_m) {
                assert!((x - y).abs() < 1e-15);
            }
            for (x, y) in a.v_c.iter().zip(&b.v_c) {
                assert!((x - y).abs() < 1e-12);
            }
        }
        assert!(fine_grid_reference(&sc, &road, &cl, &cfg, 0).is_err());
        let (grid, _) = initial_grid(&sc, &road, &cl, &cfg).unwrap();
        assert_eq!(grid.len(), plain[0].len());
    }
}
