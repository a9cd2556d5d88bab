//! Desk-scale simulator and resource analyzer for grid-based quantum
//! chemical dynamics.
//!
//! The library has two mirrored halves. The *simulation* half propagates
//! wavefunctions on position grids, both classically (split-operator FFT,
//! [`grid`]) and at the circuit level (statevector simulator, [`qsim`], fed
//! by phase-kickback potential evaluation, [`kickback`], and reversible
//! fixed-point arithmetic, [`arith`]). The *analysis* half counts what the
//! same algorithm would cost at molecular scale ([`resources`]) and extracts
//! observables from either propagation path ([`measure`], [`prep`]).
//!
//! Every circuit-level operation has an independent classical oracle; tests
//! hold the two routes together bit-exactly (arithmetic) or to stated
//! tolerances (dynamics).

pub mod arith;
pub mod grid;
pub mod kickback;
pub mod measure;
pub mod prep;
pub mod qsim;
pub mod resources;

pub use grid::{GridSpec, GridWavefunction};
pub use qsim::{CircuitState, Gate, GateTally, RegisterLayout};
