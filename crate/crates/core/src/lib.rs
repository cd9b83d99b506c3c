//! Deterministic fixed-step simulator for a three-phase grid-tied two-stage
//! solar PV system.
//!
//! The library models the full conversion chain — PV array, boost stage with
//! neuro-fuzzy maximum-power-point tracking, DC link, and a three-leg voltage
//! source converter under hysteresis current control — together with the
//! optimizer used for gain tuning and the signal-analysis helpers (harmonic
//! content, power flow, unbalance) needed to evaluate a run.
//!
//! Everything is deterministic: a scenario plus a seed reproduces byte-equal
//! traces. There is no hidden global state; each module exposes plain types
//! and pure functions so pieces can be exercised in isolation.

pub mod analysis;
pub mod anfis;
pub mod mppt;
pub mod optim;
pub mod plant;
pub mod pv;
pub mod scenario;
pub mod sim;
pub mod trace;
pub mod vsc;

pub use pv::{OperatingPoint, PvArrayConfig, PvArrayModel, PvModule, PvModuleParams};
pub use scenario::{ControllerVariant, Scenario, ScenarioError};
pub use sim::{run_scenario, Prepared, SimError, SimFault, SimOutcome};
pub use trace::{SimTrace, TraceRow};
