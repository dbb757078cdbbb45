//! Robust multi-period DC dispatch with linear battery control.
//!
//! The solver alternates between a master LP over generator schedules and
//! battery gains and a family of separation oracles that search the
//! uncertainty set for deviations breaking a line limit or a battery
//! constraint. A Monte Carlo validator replays sampled deviations through the
//! exact battery dynamics to check the final plan.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod battery;
pub mod case_io;
pub mod control;
pub mod driver;
pub mod error;
pub mod lp;
pub mod master;
pub mod network;
pub mod results;
pub mod separation;
pub mod synthetic;
pub mod uncertainty;
pub mod units;
pub mod validator;

pub use battery::{BatterySpec, ChargeCurve, DischargeCurve, Direction, Trajectory};
pub use case_io::{load_case, ControlScheme, GridCase};
pub use control::{ControlLayout, ControlPolicy};
pub use driver::{run_cutting_plane, DriverOptions, RunReport, RunStatus};
pub use error::{Error, Result};
pub use lp::{Backend, LinearProgram, LpResult, LpStatus};
pub use master::{CandidateSolution, Cut, CutFamily, FlowForm, MasterOutcome, MasterProblem};
pub use separation::{separate_all, SeparationCertificate, SeparationContext, SeparationOptions};
pub use network::{DCNetwork, ShiftFactorMatrix};
pub use results::ResultsFile;
pub use uncertainty::{ConcentrationModel, DeviationVector, Sign};
pub use units::PerUnit;
pub use synthetic::{synthetic_case, SyntheticOptions};
pub use validator::{monte_carlo_validate, ValidationReport};
