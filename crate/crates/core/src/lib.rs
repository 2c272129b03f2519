//! Hybrid adaptive robot/FES path control for gait assistance.
//!
//! The crate is organised bottom-up:
//!
//! - [`path`]: reference path in (hip, knee) joint space, projection and banded errors
//! - [`fatigue`]: excitation, activation dynamics and the fitness/recovery ODE
//! - [`fes`]: pulse-width controller with per-phase learning gains and the adaptive FES band
//! - [`exo`]: adaptive PD joint-torque controller with per-phase stiffness learning
//! - [`gait`]: stance/swing state machine and per-phase RMS accumulation
//! - [`plant`]: planar two-joint leg surrogate with FES torque mapping
//! - [`identification`]: threshold detection and fatigue-model fitting from isometric traces
//! - [`harness`]: the 100 Hz scenario loop, controller variants, comparison and file I/O

// `!(x > 0.0)` is used on purpose so NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]
pub mod error;
pub mod exo;
pub mod fatigue;
pub mod fes;
pub mod gait;
pub mod harness;
pub mod identification;
pub mod path;
pub mod plant;
pub mod types;

pub use error::{Error, Result};
pub use exo::ExoGains;
pub use fatigue::{FatigueParams, MuscleState};
pub use fes::{FesGains, MuscleChannel};
pub use gait::{GaitEvent, PhaseAccumulator};
pub use harness::{
    compare_variants, run_scenario, ComparisonTable, CycleMetrics, ScenarioConfig,
    ScenarioOutput, Variant,
};
pub use identification::{detect_thresholds, fit_fatigue, FitResult, IsometricTrace};
pub use path::{banded_error, nearest_reference, BandedError, ReferencePath};
pub use plant::{LegState, MuscleTorqueMap, PlantParams, VoluntaryProfile};
pub use types::{Action, GaitPhase, Joint, JointPair, Side};
