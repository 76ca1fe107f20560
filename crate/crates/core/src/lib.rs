//! Robust low-thrust trajectory design against missed thrust events.
//!
//! This crate transcribes missed-thrust-robust optimal control problems into
//! nonlinear programs via forward-backward multiple shooting with adaptive
//! segmentation, solves them with an augmented-Lagrangian local solver, and
//! provides the non-conditional and conditional seeding strategies used to
//! compare global-search performance.
//!
//! The dynamical environment is the spatial circular restricted three-body
//! problem in the rotating frame, nondimensional throughout (DU/TU/MU). All
//! numerics are pure functions; wall-clock time enters only through the
//! [`time::Clock`] trait so batches are reproducible under any scheduler.
//!
//! The crate is `no_std` with `alloc`; IO, configuration, and the solution
//! archive live in the companion `mtkit` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod dynamics;
pub mod linalg;
pub mod metrics;
pub mod orbit;
pub mod propagation;
pub mod scenario;
pub mod search;
pub mod solver;
pub mod time;
pub mod transcription;

pub use dynamics::{ControlSegment, DynamicsError, DynamicsParams, SpacecraftState};
pub use orbit::OrbitTable;
pub use propagation::{Arc, ArcResult, PropagationError};
pub use scenario::{MteScenario, WeibullParams};
pub use solver::{FeasibilityTolerances, SolveRecord, SolveStatus, SolverConfig};
pub use transcription::{
    BoundaryConditions, BoxBounds, DecisionVector, DefectVector, LegLayout, Problem,
};
