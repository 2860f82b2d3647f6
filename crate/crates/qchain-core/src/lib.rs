//! Engines for computing outcome statistics of sequences of quantum
//! measurements performed with probes and memories.
//!
//! The crate provides two independent probability calculi for measurement
//! chains (a path-amplitude engine and a conditional-evolution engine that
//! must agree), unitary couplings between systems, pointer probes and memory
//! registers, closed-form builders for the classic two-observer thought
//! experiments, a consistency checker for history families, and a JSON
//! scenario format with a CLI-facing runner.

pub mod apparatus;
pub mod chain;
pub mod dist;
pub mod gedanken;
pub mod histories;
pub mod sampling;
pub mod scenario;
pub mod evolution;
pub mod feynman;
pub mod hilbert;

pub use chain::{ChainBuilder, InitialState, MeasurementChain, Observable};
pub use dist::{Distribution, OutcomeSequence};
pub use hilbert::{COperator, CVector, C64};
