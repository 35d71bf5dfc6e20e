//! Roe-type interface flux with Harten entropy fix.
//!
//! The two classes are uncoupled in the flux, so each 2x2 block is handled
//! on its own. For `p = (psi rho)^gamma` we have `rho p'(rho) = gamma p`, and
//! the block Jacobian has the closed-form spectrum
//!
//! ```text
//! lambda1 = v - gamma p,   r1 = (1, v + p)
//! lambda2 = v,             r2 = (1, v + p + gamma p)
//! ```
//!
//! The dissipation `R |Lambda|_fix R^-1 dU` is evaluated as the matrix
//! function `c0 I + c1 J` with divided-difference coefficients. It is the same
//! operator, but stays well conditioned as `gamma p` shrinks, and reduces to
//! exactly `+-J dU` when both wave speeds lie on one side of the fix region.

use crate::error::{Error, Result};
use crate::model::{class_flux, Cell, ClassClosure, ClassState, Closures, Conserved};

pub type Mat2 = [[f64; 2]; 2];

/// Below this eigenvalue gap the block is treated as a scalar wave.
pub const DEGENERATE_GAP: f64 = 1e-10;

/// Default entropy-fix width (m/s).
pub const DEFAULT_EPS_FIX: f64 = 0.1;

/// Sorted wave speeds of one class block with unit-max eigenvectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenPair {
    pub lambda1: f64,
    pub lambda2: f64,
    pub r1: [f64; 2],
    pub r2: [f64; 2],
}

fn require_density(op: &'static str, rho: f64, closure: &ClassClosure) -> Result<()> {
    if closure.is_vacuum(rho) || !rho.is_finite() {
        Err(Error::domain(
            op,
            format!(
                "density {rho} below floor {}",
                closure.density_floor
            ),
        ))
    } else {
        Ok(())
    }
}

/// Analytic Jacobian of `(X - rho p, X^2/rho - p X)` w.r.t. `(rho, X)`.
pub fn class_jacobian(state: &ClassState, closure: &ClassClosure) -> Result<Mat2> {
    require_density("class_jacobian", state.rho, closure)?;
    Ok(jacobian_unchecked(state, closure))
}

#[inline]
fn jacobian_unchecked(state: &ClassState, closure: &ClassClosure) -> Mat2 {
    let rho = state.rho;
    let x = state.x_momentum;
    let p = closure.pressure(rho);
    let dp = closure.pressure_derivative(rho);
    let w = x / rho;
    [[-(p + rho * dp), 1.0], [-w * w - dp * x, 2.0 * w - p]]
}

#[inline]
fn wave_speeds(state: &ClassState, closure: &ClassClosure) -> (f64, f64) {
    let p = closure.pressure(state.rho);
    let v = state.x_momentum / state.rho - p;
    (v - closure.gamma() * p, v)
}

fn unit_max(r: [f64; 2]) -> [f64; 2] {
    let scale = r[0].abs().max(r[1].abs());
    [r[0] / scale, r[1] / scale]
}

/// Closed-form eigenstructure of the class Jacobian.
pub fn eigenstructure(state: &ClassState, closure: &ClassClosure) -> Result<EigenPair> {
    require_density("eigenstructure", state.rho, closure)?;
    let p = closure.pressure(state.rho);
    let (lambda1, lambda2) = wave_speeds(state, closure);
    let v = lambda2;
    Ok(EigenPair {
        lambda1,
        lambda2,
        r1: unit_max([1.0, v + p]),
        r2: unit_max([1.0, v + p + closure.gamma() * p]),
    })
}

/// Arithmetic mean of the conserved variables.
pub fn roe_average(left: &ClassState, right: &ClassState) -> ClassState {
    ClassState {
        rho: 0.5 * (left.rho + right.rho),
        x_momentum: 0.5 * (left.x_momentum + right.x_momentum),
    }
}

/// Harten's smoothed `|lambda|`.
#[inline]
pub fn entropy_fixed_abs(lambda: f64, eps_fix: f64) -> f64 {
    let a = lambda.abs();
    if a >= eps_fix {
        a
    } else {
        (lambda * lambda + eps_fix * eps_fix) / (2.0 * eps_fix)
    }
}

/// `(c0, c1)` with `phi(J) = c0 I + c1 J` for the fixed absolute value `phi`.
#[inline]
fn abs_coefficients(lambda1: f64, lambda2: f64, eps_fix: f64) -> (f64, f64) {
    let phi1 = entropy_fixed_abs(lambda1, eps_fix);
    let phi2 = entropy_fixed_abs(lambda2, eps_fix);
    let gap = lambda2 - lambda1;
    let c1 = (phi2 - phi1) / gap;
    let c0 = (lambda2 * phi1 - lambda1 * phi2) / gap;
    (c0, c1)
}

/// `R diag(phi(lambda)) R^-1` at the given state.
pub fn dissipation_matrix(state: &ClassState, closure: &ClassClosure, eps_fix: f64) -> Result<Mat2> {
    require_density("dissipation_matrix", state.rho, closure)?;
    let (l1, l2) = wave_speeds(state, closure);
    if (l2 - l1).abs() < DEGENERATE_GAP {
        let a = entropy_fixed_abs(l2, eps_fix);
        return Ok([[a, 0.0], [0.0, a]]);
    }
    let j = jacobian_unchecked(state, closure);
    let (c0, c1) = abs_coefficients(l1, l2, eps_fix);
    Ok([
        [c0 + c1 * j[0][0], c1 * j[0][1]],
        [c1 * j[1][0], c0 + c1 * j[1][1]],
    ])
}

/// Interface flux for one class block.
pub fn class_numerical_flux(
    left: &ClassState,
    right: &ClassState,
    closure: &ClassClosure,
    eps_fix: f64,
) -> [f64; 2] {
    let left_vac = closure.is_vacuum(left.rho);
    let right_vac = closure.is_vacuum(right.rho);
    if left_vac && right_vac {
        return [0.0, 0.0];
    }
    let fl = class_flux(left, closure);
    let fr = class_flux(right, closure);
    let d_rho = right.rho - left.rho;
    let d_x = right.x_momentum - left.x_momentum;
    let mean = roe_average(left, right);

    let diss = if closure.is_vacuum(mean.rho) {
        let a = entropy_fixed_abs(0.0, eps_fix);
        [a * d_rho, a * d_x]
    } else {
        let (l1, l2) = wave_speeds(&mean, closure);
        if (l2 - l1).abs() < DEGENERATE_GAP {
            let a = entropy_fixed_abs(l2, eps_fix);
            [a * d_rho, a * d_x]
        } else {
            let j = jacobian_unchecked(&mean, closure);
            let (c0, c1) = abs_coefficients(l1, l2, eps_fix);
            let jd0 = j[0][0] * d_rho + j[0][1] * d_x;
            let jd1 = j[1][0] * d_rho + j[1][1] * d_x;
            [c0 * d_rho + c1 * jd0, c0 * d_x + c1 * jd1]
        }
    };
    [
        0.5 * (fl[0] + fr[0]) - 0.5 * diss[0],
        0.5 * (fl[1] + fr[1]) - 0.5 * diss[1],
    ]
}

/// Roe flux `F(U_L, U_R)` across one interface.
pub fn numerical_flux(left: &Cell, right: &Cell, closures: &Closures, eps_fix: f64) -> Conserved {
    let m = class_numerical_flux(&left.moto, &right.moto, &closures.moto, eps_fix);
    let c = class_numerical_flux(&left.car, &right.car, &closures.car, eps_fix);
    [m[0], m[1], c[0], c[1]]
}
