//! Closures and state algebra of the two-class Aw-Rascle model.
//!
//! Each class `i` (motorcycles `m`, cars `c`) carries a normalized density
//! `rho_i` and the conserved quantity `X_i = rho_i (v_i + p_i)`, with
//! pseudo-pressure `p_i = (psi_i rho_i)^gamma_i`. The conserved cell vector is
//! ordered `(rho_m, X_m, rho_c, X_c)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Conserved 4-vector `(rho_m, X_m, rho_c, X_c)`.
pub type Conserved = [f64; 4];

/// Densities below this are treated as vacuum: zero speed, zero flux.
pub const DEFAULT_DENSITY_FLOOR: f64 = 1e-8;

/// Per-class physical constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleClassParams {
    /// Maximum speed (m/s).
    pub v_max: f64,
    /// Maximum area occupancy, a fraction in (0, 1].
    pub ao_max: f64,
    /// Pressure exponent.
    pub gamma: f64,
    /// Relaxation time (s).
    pub tau: f64,
    /// Vehicle length (m).
    pub length: f64,
    /// Vehicle width (m).
    pub width: f64,
}

impl VehicleClassParams {
    /// Motorcycle defaults. The width (0.6 m) is not among the tabulated
    /// simulation parameters and is configurable.
    pub const MOTORCYCLE: Self = Self {
        v_max: 11.0,
        ao_max: 0.85,
        gamma: 2.23,
        tau: 3.0,
        length: 1.8,
        width: 0.6,
    };

    pub const CAR: Self = Self {
        v_max: 13.8,
        ao_max: 0.74,
        gamma: 2.12,
        tau: 5.0,
        length: 4.0,
        width: 1.6,
    };

    /// Checks the invariants; `prefix` names the config section for errors.
    pub fn validate(&self, prefix: &str) -> Result<()> {
        let fields = [
            ("v_max", self.v_max),
            ("ao_max", self.ao_max),
            ("gamma", self.gamma),
            ("tau", self.tau),
            ("length", self.length),
            ("width", self.width),
        ];
        for (name, value) in fields {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::config(
                    format!("{prefix}.{name}"),
                    format!("must be finite and strictly positive, got {value}"),
                ));
            }
        }
        if self.ao_max > 1.0 {
            return Err(Error::config(
                format!("{prefix}.ao_max"),
                format!("must lie in (0, 1], got {}", self.ao_max),
            ));
        }
        Ok(())
    }
}

/// Road geometry and class mix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RoadParams {
    /// Road width `W` (m).
    pub width: f64,
    /// Ring length (m).
    pub length: f64,
    /// Motorcycle proportion, strictly inside (0, 1).
    pub delta: f64,
}

impl Default for RoadParams {
    fn default() -> Self {
        Self {
            width: 12.0,
            length: 500.0,
            delta: 0.9,
        }
    }
}

impl RoadParams {
    /// Number of cells of width `dx` covering the ring exactly.
    pub fn cell_count(&self, dx: f64) -> Result<usize> {
        let n = (self.length / dx).round();
        if !(n >= 3.0) || (n * dx - self.length).abs() > 1e-9 * self.length {
            return Err(Error::config(
                "simulation.dx",
                format!(
                    "cell width {dx} must divide the road length {} into at least 3 cells",
                    self.length
                ),
            ));
        }
        Ok(n as usize)
    }

    pub fn validate(&self, prefix: &str) -> Result<()> {
        if !(self.width.is_finite() && self.width > 0.0) {
            return Err(Error::config(
                format!("{prefix}.width"),
                format!("must be strictly positive, got {}", self.width),
            ));
        }
        if !(self.length.is_finite() && self.length > 0.0) {
            return Err(Error::config(
                format!("{prefix}.length"),
                format!("must be strictly positive, got {}", self.length),
            ));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::config(
                format!("{prefix}.delta"),
                format!(
                    "motorcycle proportion must lie strictly inside (0, 1), got {}",
                    self.delta
                ),
            ));
        }
        Ok(())
    }
}

/// Occupancy coefficients `(psi_m, psi_c)`.
///
/// `psi_m = w_m (l_c (1-delta) + delta l_m / 3) / (W delta)` and
/// `psi_c = w_c ((1-delta) l_c + delta l_m / 3) / (W (1-delta))`.
pub fn psi_coefficients(
    road: &RoadParams,
    moto: &VehicleClassParams,
    car: &VehicleClassParams,
) -> Result<(f64, f64)> {
    let delta = road.delta;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::domain(
            "psi_coefficients",
            format!("delta must lie strictly inside (0, 1), got {delta}"),
        ));
    }
    if !(road.width > 0.0) {
        return Err(Error::domain(
            "psi_coefficients",
            format!("road width must be positive, got {}", road.width),
        ));
    }
    let mixed_length = car.length * (1.0 - delta) + delta * moto.length / 3.0;
    let psi_m = moto.width * mixed_length / (road.width * delta);
    let psi_c = car.width / (road.width * (1.0 - delta)) * mixed_length;
    Ok((psi_m, psi_c))
}

/// Pseudo-pressure `(psi rho)^gamma`.
pub fn pressure(rho: f64, psi: f64, gamma: f64) -> Result<f64> {
    if rho < 0.0 || rho.is_nan() {
        return Err(Error::domain(
            "pressure",
            format!("density must be nonnegative, got {rho}"),
        ));
    }
    if !(psi > 0.0 && gamma > 0.0) {
        return Err(Error::domain(
            "pressure",
            format!("psi and gamma must be positive, got psi={psi}, gamma={gamma}"),
        ));
    }
    Ok((psi * rho).powf(gamma))
}

/// Area occupancy of a class, taken as `psi * rho`.
pub fn area_occupancy(rho: f64, psi: f64) -> f64 {
    psi * rho.max(0.0)
}

/// Greenshields-type equilibrium speed over area occupancy, zero past the cap.
pub fn equilibrium_velocity(ao: f64, params: &VehicleClassParams) -> f64 {
    if ao <= params.ao_max {
        (params.v_max * (1.0 - ao.max(0.0) / params.ao_max)).clamp(0.0, params.v_max)
    } else {
        0.0
    }
}

/// Everything the per-class formulas need, with `psi` resolved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassClosure {
    pub params: VehicleClassParams,
    pub psi: f64,
    pub density_floor: f64,
}

impl ClassClosure {
    #[inline]
    pub fn gamma(&self) -> f64 {
        self.params.gamma
    }

    /// Pressure for a state already known to be nonnegative.
    #[inline]
    pub fn pressure(&self, rho: f64) -> f64 {
        (self.psi * rho.max(0.0)).powf(self.params.gamma)
    }

    /// `dp/drho = gamma psi (psi rho)^(gamma-1)`.
    #[inline]
    pub fn pressure_derivative(&self, rho: f64) -> f64 {
        let g = self.params.gamma;
        g * self.psi * (self.psi * rho.max(0.0)).powf(g - 1.0)
    }

    #[inline]
    pub fn is_vacuum(&self, rho: f64) -> bool {
        rho < self.density_floor
    }

    pub fn equilibrium_speed(&self, rho: f64) -> f64 {
        equilibrium_velocity(area_occupancy(rho, self.psi), &self.params)
    }
}

/// Closures for both classes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Closures {
    pub moto: ClassClosure,
    pub car: ClassClosure,
}

impl Closures {
    pub fn new(
        road: &RoadParams,
        moto: &VehicleClassParams,
        car: &VehicleClassParams,
        density_floor: f64,
    ) -> Result<Self> {
        road.validate("road")?;
        moto.validate("motorcycle")?;
        car.validate("car")?;
        if !(density_floor > 0.0) {
            return Err(Error::config(
                "simulation.density_floor",
                format!("must be positive, got {density_floor}"),
            ));
        }
        let (psi_m, psi_c) = psi_coefficients(road, moto, car)?;
        Ok(Self {
            moto: ClassClosure {
                params: *moto,
                psi: psi_m,
                density_floor,
            },
            car: ClassClosure {
                params: *car,
                psi: psi_c,
                density_floor,
            },
        })
    }

    pub fn classes(&self) -> [&ClassClosure; 2] {
        [&self.moto, &self.car]
    }
}

/// Density and conserved momentum-like variable of one class.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ClassState {
    pub rho: f64,
    pub x_momentum: f64,
}

impl ClassState {
    pub const VACUUM: Self = Self {
        rho: 0.0,
        x_momentum: 0.0,
    };

    pub fn new(rho: f64, x_momentum: f64) -> Self {
        Self { rho, x_momentum }
    }

    /// `X = rho (v + p(rho))`.
    pub fn from_primitive(rho: f64, v: f64, closure: &ClassClosure) -> Self {
        Self {
            rho,
            x_momentum: rho * (v + closure.pressure(rho)),
        }
    }

    /// Recovered speed `X / rho - p(rho)`; zero below the density floor.
    pub fn velocity(&self, closure: &ClassClosure) -> f64 {
        if closure.is_vacuum(self.rho) {
            0.0
        } else {
            self.x_momentum / self.rho - closure.pressure(self.rho)
        }
    }
}

/// Inverse of [`ClassState::from_primitive`], returning `(rho, v)`.
pub fn conserved_to_primitive(state: &ClassState, closure: &ClassClosure) -> (f64, f64) {
    (state.rho, state.velocity(closure))
}

pub fn primitive_to_conserved(rho: f64, v: f64, closure: &ClassClosure) -> ClassState {
    ClassState::from_primitive(rho, v, closure)
}

/// One grid cell: both classes.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Cell {
    pub moto: ClassState,
    pub car: ClassState,
}

impl Cell {
    pub fn new(moto: ClassState, car: ClassState) -> Self {
        Self { moto, car }
    }

    #[inline]
    pub fn to_array(&self) -> Conserved {
        [
            self.moto.rho,
            self.moto.x_momentum,
            self.car.rho,
            self.car.x_momentum,
        ]
    }

    #[inline]
    pub fn from_array(u: Conserved) -> Self {
        Self {
            moto: ClassState::new(u[0], u[1]),
            car: ClassState::new(u[2], u[3]),
        }
    }

    pub fn total_density(&self) -> f64 {
        self.moto.rho + self.car.rho
    }
}

/// Conserved field over the ring at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct GridState {
    pub cells: Vec<Cell>,
    /// Cell width (m).
    pub dx: f64,
    /// Step index `k`.
    pub time_level: usize,
}

impl GridState {
    pub fn new(cells: Vec<Cell>, dx: f64) -> Result<Self> {
        if cells.len() < 3 {
            return Err(Error::domain(
                "GridState::new",
                format!("need at least 3 cells, got {}", cells.len()),
            ));
        }
        if !(dx > 0.0) {
            return Err(Error::domain(
                "GridState::new",
                format!("cell width must be positive, got {dx}"),
            ));
        }
        Ok(Self {
            cells,
            dx,
            time_level: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Cell-centre coordinate of cell `i`.
    pub fn x(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.dx
    }

    /// Sum of `rho_m` and of `rho_c` over all cells.
    pub fn class_totals(&self) -> (f64, f64) {
        self.cells.iter().fold((0.0, 0.0), |(m, c), cell| {
            (m + cell.moto.rho, c + cell.car.rho)
        })
    }
}

/// `(X - rho p, X^2/rho - p X)` for one class; zero below the floor.
#[inline]
pub fn class_flux(state: &ClassState, closure: &ClassClosure) -> [f64; 2] {
    if closure.is_vacuum(state.rho) {
        return [0.0, 0.0];
    }
    let p = closure.pressure(state.rho);
    let x = state.x_momentum;
    [x - state.rho * p, x * x / state.rho - p * x]
}

/// Physical flux `f(U)` of a cell.
pub fn physical_flux(cell: &Cell, closures: &Closures) -> Conserved {
    let m = class_flux(&cell.moto, &closures.moto);
    let c = class_flux(&cell.car, &closures.car);
    [m[0], m[1], c[0], c[1]]
}

/// Relaxation term `rho / tau (v_e - v)` for one class.
#[inline]
pub fn class_relaxation(state: &ClassState, closure: &ClassClosure) -> f64 {
    if closure.is_vacuum(state.rho) {
        return 0.0;
    }
    let v = state.velocity(closure);
    let v_e = closure.equilibrium_speed(state.rho);
    state.rho / closure.params.tau * (v_e - v)
}

/// Source `S(U) = (0, rho_m/tau_m (v_em - v_m), 0, rho_c/tau_c (v_ec - v_c))`.
pub fn source_term(cell: &Cell, closures: &Closures) -> Conserved {
    [
        0.0,
        class_relaxation(&cell.moto, &closures.moto),
        0.0,
        class_relaxation(&cell.car, &closures.car),
    ]
}
