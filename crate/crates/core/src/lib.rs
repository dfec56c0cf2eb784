//! Synthesis, simulation, and compact encoding of single-flux-quantum pulse
//! schedules for fluxonium single-qubit gates.
//!
//! The pipeline runs bottom-up: [`model`] diagonalizes the circuit,
//! [`schedule`] describes ramp/train/ramp kick patterns, [`closed`] and
//! [`open`] propagate them, [`optimizer`] searches ramp timings, and
//! [`encoding`] packs the result into a control word.

pub mod closed;
pub mod encoding;
pub mod model;
pub mod numerics;
pub mod open;
pub mod optimizer;
pub mod schedule;

pub use closed::{ErrorBudget, PauliDecomposition};
pub use model::{CircuitParams, CoherenceRates, QubitModel};
pub use schedule::{ClockGrid, Coupling, Ramp, Schedule, SnapOutcome};
