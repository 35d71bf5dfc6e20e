//! Time-fractional two-class Aw-Rascle traffic model on a ring road.
//!
//! The Caputo time derivative is discretized with the L1 scheme, interface
//! fluxes use a Roe-type linearization with Harten's entropy fix, and the
//! relaxation source is applied explicitly. See [`stepper`] for the update.

pub mod caputo;
pub mod error;
pub mod model;
pub mod oracle;
pub mod output;
pub mod roe;
pub mod scenario;
pub mod special;
pub mod stepper;
pub mod validation;

pub use error::{Error, Result};
pub use model::{Cell, ClassState, Closures, GridState, RoadParams, VehicleClassParams};
pub use output::Snapshot;
pub use scenario::{load_config, ModelSetup, Scenario, ScenarioKind};
pub use stepper::{run, RunOutput, SimConfig};
