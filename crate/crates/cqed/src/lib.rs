//! Simulation toolkit for a superconducting qubit dispersively coupled to a
//! driven, damped microwave resonator.
//!
//! The crate covers four tiers of description with a shared operator core:
//!
//! * the bare Jaynes–Cummings master equation on the truncated qubit ⊗ Fock
//!   space ([`lindblad`]), integrated either brute-force or in the exactly
//!   dressed basis of the diagonalizing transformation ([`dispersive`]);
//! * the dispersive-frame master equation with photon-dressed collapse
//!   operators and frequency-resolved bath rates;
//! * a reduced qubit model driven by the two coherent pointer fields, with
//!   photon-number-dependent dephasing, relaxation, and frequency shifts
//!   ([`reduced`]);
//! * homodyne quantum-trajectory unravellings of both descriptions
//!   ([`trajectories`]).
//!
//! [`analysis`] provides fitting/sweep harnesses and deterministic CSV/SVG
//! output; [`config`] the TOML-driven experiment layer used by the `cqed`
//! binary.
//!
//! Conventions: angular frequencies in rad/µs throughout the API; config
//! files take ν/2π in MHz and times in µs. Basis ordering and operator
//! conventions are fixed in [`operators`].

pub mod analysis;
pub mod band;
pub mod config;
pub mod dispersive;
pub mod error;
pub mod lindblad;
pub mod ode;
pub mod operators;
pub mod params;
pub mod reduced;
pub mod trajectories;
