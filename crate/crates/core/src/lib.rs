//! Simulation and analysis toolkit for a qubit-coupler-qubit superconducting
//! circuit operated as a coupler-state-controlled iSWAP gate.
//!
//! Frequencies are linear GHz and times are ns throughout. Operators built
//! by [`circuit`] already contain the 2π factor.

pub mod circuit;
pub mod dynamics;
pub mod effective;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod tomography;

pub use circuit::{Basis, CircuitParams, OperatorMatrix, Site};
pub use effective::{CouplerModel, Detunings, EffectiveCoupling};
pub use dynamics::{CollapseChannel, LindbladSolver, Propagator, QuantumState};
pub use error::{Error, Result};
pub use experiment::{
    ChevronData, ComputationalFrame, FitResult, PulseSchedule, QptConfig, QptResult, ScheduleConfig, TransistorConfig,
};
