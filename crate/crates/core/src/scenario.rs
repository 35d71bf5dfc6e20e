//! Built-in ring-road scenarios, class splitting and configuration files.
//!
//! Configuration documents are TOML. Every key is optional and falls back to
//! the tabulated simulation parameters:
//!
//! ```toml
//! [simulation]
//! alpha = 1.0            # fractional order, (0, 1]
//! dt = 0.05              # time step (s)
//! dx = 5.0               # road step (m)
//! t_end = 60.0           # simulation time (s)
//! boundary = "periodic"  # or "dirichlet"
//! eps_fix = 0.1          # entropy-fix width (m/s)
//! density_floor = 1e-8
//! output_times = [0.0, 1.0, 20.0, 40.0, 60.0]
//!
//! [road]
//! width = 12.0           # W (m)
//! length = 500.0         # ring length (m)
//! delta = 0.9            # motorcycle proportion, strictly inside (0, 1)
//!
//! [motorcycle]           # same keys under [car]
//! v_max = 11.0
//! ao_max = 0.85
//! gamma = 2.23
//! tau = 3.0
//! length = 1.8
//! width = 0.6
//!
//! [scenario]
//! kind = "freeway"       # "congestion" or "custom"
//! velocity = "equilibrium"  # or "explicit" with v_m / v_c
//! ```
//!
//! A custom scenario takes a `[scenario.profile]` table with `type` one of
//! `uniform` (`density`), `sine` (`mean`, `amplitude`, `periods`) or `steps`
//! (`levels = [[x_start, density], ...]`).

use std::fmt::Write as _;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Cell, ClassState, Closures, GridState, RoadParams, VehicleClassParams};
use crate::stepper::{BoundaryData, BoundaryMode, ProfileFn, SimConfig};

/// Freeway initial total density: 0.1 upstream of x = 100 m, 0.2 from there on.
pub fn freeway_profile(x: f64) -> f64 {
    if x < 100.0 {
        0.1
    } else {
        0.2
    }
}

/// Congestion initial total density: a 0.8 jam on `150 < x < 180`, 0.1 elsewhere.
///
/// The band `130 < x <= 150` is filled with the 0.1 background.
pub fn congestion_profile(x: f64) -> f64 {
    if x > 150.0 && x < 180.0 {
        0.8
    } else {
        0.1
    }
}

/// `(delta rho, (1 - delta) rho)`.
pub fn split_by_class(rho_total: f64, delta: f64) -> (f64, f64) {
    (delta * rho_total, (1.0 - delta) * rho_total)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum Profile {
    Uniform {
        density: f64,
    },
    /// `mean + amplitude sin(2 pi periods x / L)`.
    Sine {
        mean: f64,
        amplitude: f64,
        #[serde(default = "one")]
        periods: f64,
    },
    /// Piecewise constant; each `[x_start, density]` holds until the next start.
    Steps {
        levels: Vec<[f64; 2]>,
    },
}

fn one() -> f64 {
    1.0
}

impl Profile {
    pub fn density(&self, x: f64, road_length: f64) -> f64 {
        match self {
            Profile::Uniform { density } => *density,
            Profile::Sine {
                mean,
                amplitude,
                periods,
            } => mean + amplitude * (2.0 * std::f64::consts::PI * periods * x / road_length).sin(),
            Profile::Steps { levels } => levels
                .iter()
                .take_while(|l| l[0] <= x)
                .last()
                .map(|l| l[1])
                .unwrap_or_else(|| levels.first().map(|l| l[1]).unwrap_or(0.0)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioKind {
    Freeway,
    Congestion,
    Custom(Profile),
}

impl ScenarioKind {
    pub fn name(&self) -> &'static str {
        match self {
            ScenarioKind::Freeway => "freeway",
            ScenarioKind::Congestion => "congestion",
            ScenarioKind::Custom(_) => "custom",
        }
    }
}

impl FromStr for ScenarioKind {
    type Err = Error;

    /// Accepts `freeway` and `congestion`, case-insensitively.
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "freeway" => Ok(ScenarioKind::Freeway),
            "congestion" => Ok(ScenarioKind::Congestion),
            other => Err(Error::config(
                "scenario.kind",
                format!("unknown scenario `{other}` (expected freeway or congestion)"),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VelocityRule {
    /// Each class starts at its equilibrium speed for the local occupancy.
    Equilibrium,
    /// Constant class speeds (m/s).
    Explicit { v_m: f64, v_c: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub delta: f64,
    pub velocity_rule: VelocityRule,
}

impl Scenario {
    pub fn new(kind: ScenarioKind, delta: f64) -> Self {
        Self {
            kind,
            delta,
            velocity_rule: VelocityRule::Equilibrium,
        }
    }

    pub fn total_density(&self, x: f64, road_length: f64) -> f64 {
        match &self.kind {
            ScenarioKind::Freeway => freeway_profile(x),
            ScenarioKind::Congestion => congestion_profile(x),
            ScenarioKind::Custom(p) => p.density(x, road_length),
        }
    }

    fn cell_at(&self, x: f64, road_length: f64, closures: &Closures) -> Result<Cell> {
        let rho = self.total_density(x, road_length);
        if !(0.0..=1.0).contains(&rho) {
            return Err(Error::config(
                "scenario.profile",
                format!("initial total density {rho} at x = {x} lies outside [0, 1]"),
            ));
        }
        let (rho_m, rho_c) = split_by_class(rho, self.delta);
        let (v_m, v_c) = match self.velocity_rule {
            VelocityRule::Equilibrium => (
                closures.moto.equilibrium_speed(rho_m),
                closures.car.equilibrium_speed(rho_c),
            ),
            VelocityRule::Explicit { v_m, v_c } => (v_m, v_c),
        };
        Ok(Cell::new(
            ClassState::from_primitive(rho_m, v_m, &closures.moto),
            ClassState::from_primitive(rho_c, v_c, &closures.car),
        ))
    }
}

/// Samples the scenario at cell centres `(i + 1/2) dx`.
///
/// The returned boundary data holds the initial profile and pins the
/// endpoint values for Dirichlet runs.
pub fn initial_grid(
    scenario: &Scenario,
    road: &RoadParams,
    closures: &Closures,
    config: &SimConfig,
) -> Result<(GridState, BoundaryData)> {
    if !(scenario.delta > 0.0 && scenario.delta < 1.0) {
        return Err(Error::config(
            "road.delta",
            format!("must lie strictly inside (0, 1), got {}", scenario.delta),
        ));
    }
    let n = road.cell_count(config.dx)?;
    let dx = config.dx;
    let cells = (0..n)
        .map(|i| scenario.cell_at((i as f64 + 0.5) * dx, road.length, closures))
        .collect::<Result<Vec<_>>>()?;
    let (first, last) = (cells[0], cells[n - 1]);
    let length = road.length;
    let sc = scenario.clone();
    let cl = *closures;
    let g1: ProfileFn = Arc::new(move |x| sc.cell_at(x, length, &cl).unwrap_or_default());
    let boundary = BoundaryData {
        g1,
        g2: Arc::new(move |_| first),
        g3: Arc::new(move |_| last),
    };
    Ok((GridState::new(cells, dx)?, boundary))
}

/// Everything a run needs, as loaded from a configuration document.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSetup {
    pub config: SimConfig,
    pub scenario: Scenario,
    pub road: RoadParams,
    pub moto: VehicleClassParams,
    pub car: VehicleClassParams,
}

impl Default for ModelSetup {
    fn default() -> Self {
        let road = RoadParams::default();
        Self {
            config: SimConfig::default(),
            scenario: Scenario::new(ScenarioKind::Freeway, road.delta),
            road,
            moto: VehicleClassParams::MOTORCYCLE,
            car: VehicleClassParams::CAR,
        }
    }
}

impl ModelSetup {
    pub fn closures(&self) -> Result<Closures> {
        Closures::new(&self.road, &self.moto, &self.car, self.config.density_floor)
    }

    pub fn set_delta(&mut self, delta: f64) {
        self.road.delta = delta;
        self.scenario.delta = delta;
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        self.road.validate("road")?;
        self.moto.validate("motorcycle")?;
        self.car.validate("car")?;
        self.road.cell_count(self.config.dx)?;
        if let ScenarioKind::Custom(Profile::Steps { levels }) = &self.scenario.kind {
            if levels.is_empty() {
                return Err(Error::config("scenario.profile.levels", "must not be empty"));
            }
        }
        Ok(())
    }

    /// Flat `section.key = value` document that [`load_config`] reads back
    /// to the same setup.
    pub fn to_config_text(&self) -> String {
        let mut out = String::new();
        let c = &self.config;
        let times: Vec<String> = c.output_times.iter().map(|t| format!("{t:?}")).collect();
        let _ = writeln!(out, "simulation.alpha = {:?}", c.alpha);
        let _ = writeln!(out, "simulation.dt = {:?}", c.dt);
        let _ = writeln!(out, "simulation.dx = {:?}", c.dx);
        let _ = writeln!(out, "simulation.t_end = {:?}", c.t_end);
        let _ = writeln!(out, "simulation.boundary = \"{}\"", c.boundary);
        let _ = writeln!(out, "simulation.eps_fix = {:?}", c.eps_fix);
        let _ = writeln!(out, "simulation.density_floor = {:?}", c.density_floor);
        let _ = writeln!(out, "simulation.output_times = [{}]", times.join(", "));
        let _ = writeln!(out, "road.width = {:?}", self.road.width);
        let _ = writeln!(out, "road.length = {:?}", self.road.length);
        let _ = writeln!(out, "road.delta = {:?}", self.road.delta);
        for (name, p) in [("motorcycle", &self.moto), ("car", &self.car)] {
            let _ = writeln!(out, "{name}.v_max = {:?}", p.v_max);
            let _ = writeln!(out, "{name}.ao_max = {:?}", p.ao_max);
            let _ = writeln!(out, "{name}.gamma = {:?}", p.gamma);
            let _ = writeln!(out, "{name}.tau = {:?}", p.tau);
            let _ = writeln!(out, "{name}.length = {:?}", p.length);
            let _ = writeln!(out, "{name}.width = {:?}", p.width);
        }
        let _ = writeln!(out, "scenario.kind = \"{}\"", self.scenario.kind.name());
        match self.scenario.velocity_rule {
            VelocityRule::Equilibrium => {
                let _ = writeln!(out, "scenario.velocity = \"equilibrium\"");
            }
            VelocityRule::Explicit { v_m, v_c } => {
                let _ = writeln!(out, "scenario.velocity = \"explicit\"");
                let _ = writeln!(out, "scenario.v_m = {v_m:?}");
                let _ = writeln!(out, "scenario.v_c = {v_c:?}");
            }
        }
        if let ScenarioKind::Custom(profile) = &self.scenario.kind {
            match profile {
                Profile::Uniform { density } => {
                    let _ = writeln!(out, "scenario.profile.type = \"uniform\"");
                    let _ = writeln!(out, "scenario.profile.density = {density:?}");
                }
                Profile::Sine {
                    mean,
                    amplitude,
                    periods,
                } => {
                    let _ = writeln!(out, "scenario.profile.type = \"sine\"");
                    let _ = writeln!(out, "scenario.profile.mean = {mean:?}");
                    let _ = writeln!(out, "scenario.profile.amplitude = {amplitude:?}");
                    let _ = writeln!(out, "scenario.profile.periods = {periods:?}");
                }
                Profile::Steps { levels } => {
                    let levels: Vec<String> =
                        levels.iter().map(|l| format!("[{:?}, {:?}]", l[0], l[1])).collect();
                    let _ = writeln!(out, "scenario.profile.type = \"steps\"");
                    let _ = writeln!(out, "scenario.profile.levels = [{}]", levels.join(", "));
                }
            }
        }
        out
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct SimulationSection {
    alpha: f64,
    dt: f64,
    dx: f64,
    t_end: f64,
    boundary: BoundaryMode,
    eps_fix: f64,
    density_floor: f64,
    output_times: Option<Vec<f64>>,
}

impl Default for SimulationSection {
    fn default() -> Self {
        let c = SimConfig::default();
        Self {
            alpha: c.alpha,
            dt: c.dt,
            dx: c.dx,
            t_end: c.t_end,
            boundary: c.boundary,
            eps_fix: c.eps_fix,
            density_floor: c.density_floor,
            output_times: None,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClassSection {
    v_max: Option<f64>,
    ao_max: Option<f64>,
    gamma: Option<f64>,
    tau: Option<f64>,
    length: Option<f64>,
    width: Option<f64>,
}

impl ClassSection {
    fn over(self, base: VehicleClassParams) -> VehicleClassParams {
        VehicleClassParams {
            v_max: self.v_max.unwrap_or(base.v_max),
            ao_max: self.ao_max.unwrap_or(base.ao_max),
            gamma: self.gamma.unwrap_or(base.gamma),
            tau: self.tau.unwrap_or(base.tau),
            length: self.length.unwrap_or(base.length),
            width: self.width.unwrap_or(base.width),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct ScenarioSection {
    kind: String,
    velocity: String,
    v_m: Option<f64>,
    v_c: Option<f64>,
    profile: Option<Profile>,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        Self {
            kind: "freeway".into(),
            velocity: "equilibrium".into(),
            v_m: None,
            v_c: None,
            profile: None,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigDocument {
    #[serde(default)]
    simulation: SimulationSection,
    #[serde(default)]
    road: RoadParams,
    #[serde(default)]
    motorcycle: ClassSection,
    #[serde(default)]
    car: ClassSection,
    #[serde(default)]
    scenario: ScenarioSection,
}

/// Parses a configuration document; missing keys take the tabulated defaults.
pub fn load_config(text: &str) -> Result<ModelSetup> {
    let doc: ConfigDocument = toml::from_str(text)?;
    let sim = doc.simulation;
    let mut config = SimConfig {
        alpha: sim.alpha,
        dt: sim.dt,
        dx: sim.dx,
        t_end: sim.t_end,
        boundary: sim.boundary,
        eps_fix: sim.eps_fix,
        density_floor: sim.density_floor,
        output_times: sim.output_times.unwrap_or_default(),
    };
    if config.output_times.is_empty() {
        config.output_times = SimConfig::default()
            .output_times
            .into_iter()
            .filter(|&t| t <= config.t_end)
            .collect();
    }

    let sc = doc.scenario;
    let kind = match sc.kind.trim().to_ascii_lowercase().as_str() {
        "custom" => match sc.profile {
            Some(p) => ScenarioKind::Custom(p),
            None => {
                return Err(Error::config(
                    "scenario.profile",
                    "a custom scenario needs a profile table",
                ))
            }
        },
        other => {
            if sc.profile.is_some() {
                return Err(Error::config(
                    "scenario.profile",
                    format!("only custom scenarios take a profile, not `{other}`"),
                ));
            }
            other.parse()?
        }
    };
    let velocity_rule = match sc.velocity.trim().to_ascii_lowercase().as_str() {
        "equilibrium" => {
            if sc.v_m.is_some() || sc.v_c.is_some() {
                return Err(Error::config(
                    "scenario.v_m",
                    "explicit speeds need velocity = \"explicit\"",
                ));
            }
            VelocityRule::Equilibrium
        }
        "explicit" => VelocityRule::Explicit {
            v_m: sc
                .v_m
                .ok_or_else(|| Error::config("scenario.v_m", "required for explicit velocities"))?,
            v_c: sc
                .v_c
                .ok_or_else(|| Error::config("scenario.v_c", "required for explicit velocities"))?,
        },
        other => {
            return Err(Error::config(
                "scenario.velocity",
                format!("unknown rule `{other}` (expected equilibrium or explicit)"),
            ))
        }
    };
    if let VelocityRule::Explicit { v_m, v_c } = velocity_rule {
        for (key, v) in [("scenario.v_m", v_m), ("scenario.v_c", v_c)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(key, format!("must be a nonnegative speed, got {v}")));
            }
        }
    }

    let setup = ModelSetup {
        config,
        scenario: Scenario {
            kind,
            delta: doc.road.delta,
            velocity_rule,
        },
        road: doc.road,
        moto: doc.motorcycle.over(VehicleClassParams::MOTORCYCLE),
        car: doc.car.over(VehicleClassParams::CAR),
    };
    setup.validate()?;
    Ok(setup)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DEFAULT_DENSITY_FLOOR;
    use proptest::prelude::*;

    #[test]
    fn freeway_profile_values() {
        assert_eq!(freeway_profile(50.0), 0.1);
        assert_eq!(freeway_profile(100.0), 0.2);
        assert_eq!(freeway_profile(499.0), 0.2);
        assert_eq!(freeway_profile(99.999_999), 0.1);
    }

    #[test]
    fn congestion_profile_values() {
        assert_eq!(congestion_profile(160.0), 0.8);
        assert_eq!(congestion_profile(100.0), 0.1);
        assert_eq!(congestion_profile(140.0), 0.1);
        assert_eq!(congestion_profile(130.0), 0.1);
        assert_eq!(congestion_profile(150.0), 0.1);
        assert_eq!(congestion_profile(150.000_001), 0.8);
        assert_eq!(congestion_profile(180.0), 0.1);
    }

    #[test]
    fn split_examples() {
        let (m, c) = split_by_class(0.2, 0.9);
        assert!((m - 0.18).abs() < 1e-16 && (c - 0.02).abs() < 1e-16);
        let (m, c) = split_by_class(0.2, 0.2);
        assert!((m - 0.04).abs() < 1e-16 && (c - 0.16).abs() < 1e-16);
    }

    #[test]
    fn steps_profile_is_piecewise_constant() {
        let p = Profile::Steps {
            levels: vec![[0.0, 0.1], [200.0, 0.5], [300.0, 0.2]],
        };
        assert_eq!(p.density(10.0, 500.0), 0.1);
        assert_eq!(p.density(200.0, 500.0), 0.5);
        assert_eq!(p.density(450.0, 500.0), 0.2);
    }

    fn setup(delta: f64, kind: ScenarioKind) -> (ModelSetup, Closures) {
        let mut s = ModelSetup {
            scenario: Scenario::new(kind, delta),
            ..ModelSetup::default()
        };
        s.set_delta(delta);
        let cl = s.closures().unwrap();
        (s, cl)
    }

    #[test]
    fn initial_grid_examples() {
        let (s, cl) = setup(0.9, ScenarioKind::Freeway);
        let (grid, _) = initial_grid(&s.scenario, &s.road, &cl, &s.config).unwrap();
        assert_eq!(grid.len(), 100);
        let i = 10; // centre at 52.5 m
        assert!((grid.cells[i].moto.rho - 0.09).abs() < 1e-16);
        // mpmath: 11 (1 - psi_m 0.09 / 0.85)
        let v = grid.cells[i].moto.velocity(&cl.moto);
        assert!((v - 10.939_176_470_588_235).abs() < 1e-12);
        assert_eq!(grid.cells[19].total_density(), 0.1);
        assert!((grid.cells[20].total_density() - 0.2).abs() < 1e-16);

        let (s, cl) = setup(0.2, ScenarioKind::Congestion);
        let (grid, _) = initial_grid(&s.scenario, &s.road, &cl, &s.config).unwrap();
        assert!((grid.cells[32].car.rho - 0.64).abs() < 1e-15); // centre 162.5 m
    }

    #[test]
    fn initial_grid_rejects_out_of_range_profile() {
        let (s, cl) = setup(0.5, ScenarioKind::Custom(Profile::Uniform { density: 1.2 }));
        assert!(matches!(
            initial_grid(&s.scenario, &s.road, &cl, &s.config),
            Err(Error::Config { .. })
        ));
    }

    #[test]
    fn empty_document_gives_table_defaults() {
        let s = load_config("").unwrap();
        assert_eq!(s, ModelSetup::default());
        let c = &s.config;
        assert_eq!((c.dt, c.dx, c.t_end, c.alpha), (0.05, 5.0, 60.0, 1.0));
        assert_eq!((s.moto.v_max, s.car.v_max), (11.0, 13.8));
        assert_eq!((s.moto.ao_max, s.car.ao_max), (0.85, 0.74));
        assert_eq!((s.moto.gamma, s.car.gamma), (2.23, 2.12));
        assert_eq!((s.moto.tau, s.car.tau), (3.0, 5.0));
        assert_eq!((s.road.width, s.road.length), (12.0, 500.0));
        assert_eq!((s.moto.length, s.car.length, s.car.width), (1.8, 4.0, 1.6));
        assert_eq!(c.output_times, vec![0.0, 1.0, 20.0, 40.0, 60.0]);
        assert_eq!(c.density_floor, DEFAULT_DENSITY_FLOOR);
    }

    #[test]
    fn overrides_and_rejections() {
        let s = load_config("[simulation]\nalpha = 0.7\n").unwrap();
        assert_eq!(s.config.alpha, 0.7);
        let s = load_config("[motorcycle]\nwidth = 0.7\n[scenario]\nkind = \"Congestion\"\n").unwrap();
        assert_eq!(s.moto.width, 0.7);
        assert_eq!(s.moto.v_max, 11.0);
        assert_eq!(s.scenario.kind, ScenarioKind::Congestion);

        let err = load_config("[road]\ndelta = 1.0\n").unwrap_err();
        assert!(matches!(&err, Error::Config { key, .. } if key == "road.delta"), "{err}");
        let err = load_config("[simulation]\nalhpa = 0.7\n").unwrap_err();
        assert!(matches!(err, Error::Parse(_)));
        assert!(err.to_string().contains("alhpa"));
        let err = load_config("[simulation]\nalpha = 1.5\n").unwrap_err();
        assert!(matches!(&err, Error::Config { key, .. } if key == "simulation.alpha"));
        assert!(load_config("[simulation\n").is_err());
        assert!(load_config("[scenario]\nkind = \"custom\"\n").is_err());
        assert!(load_config("[simulation]\nt_end = 10.0\noutput_times = [20.0]\n").is_err());
        assert!(load_config("[simulation]\ndx = 7.0\n").is_err());
    }

    #[test]
    fn short_horizon_keeps_reachable_default_times() {
        let s = load_config("[simulation]\nt_end = 5.0\n").unwrap();
        assert_eq!(s.config.output_times, vec![0.0, 1.0]);
    }

    #[test]
    fn config_text_round_trips() {
        let text = "[simulation]\nalpha = 0.8\nboundary = \"dirichlet\"\n\
                    [road]\ndelta = 0.2\n\
                    [scenario]\nkind = \"custom\"\nvelocity = \"explicit\"\nv_m = 3.0\nv_c = 4.5\n\
                    [scenario.profile]\ntype = \"steps\"\nlevels = [[0.0, 0.1], [250.0, 0.3]]\n";
        let s = load_config(text).unwrap();
        assert_eq!(load_config(&s.to_config_text()).unwrap(), s);
        let s = load_config("[scenario]\nkind=\"custom\"\nprofile = { type = \"sine\", mean = 0.3, amplitude = 0.1 }\n").unwrap();
        assert_eq!(load_config(&s.to_config_text()).unwrap(), s);
    }

    proptest! {
        #[test]
        fn split_partitions_exactly(rho in 0.0..1.0f64, delta in 0.001..0.999f64) {
            let (m, c) = split_by_class(rho, delta);
            prop_assert!((m + c - rho).abs() <= 1e-15);
        }
    }
}
