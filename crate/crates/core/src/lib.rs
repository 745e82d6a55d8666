//! Weak values on a grid.
//!
//! `wvsim` simulates the von Neumann weak-measurement protocol (weak momentum
//! measurement, delay, position post-selection) by Monte Carlo over identically
//! prepared systems, computes the corresponding formal weak values directly from
//! the wavefunction, and uses functions of weak values (Bohmian kinetic energy,
//! quantum potential, osmotic kinetic energy) as thermalization diagnostics for
//! a two-electron system in a disordered trap.
//!
//! Atomic units are used throughout: `ħ = m_e = 1`.
//!
//! Module map:
//!
//! - [`grid`]: uniform grids, spectral derivatives, expectation values, snapshots.
//! - [`model`]: harmonic, speckle and soft-Coulomb potentials; two-particle states.
//! - [`propagator`]: Strang split-operator evolution.
//! - [`weakfield`]: formal weak values, local expectations, Bohmian fields, tomography.
//! - [`protocol`]: Monte Carlo weak-measurement protocol and conditional averages.
//! - [`manybody`]: distinguishable and particle-agnostic two-body weak values.
//! - [`thermal`]: the disordered-trap thermalization study.
//! - [`checks`]: the invariant suite behind `wvsim validate`.

pub mod checks;
pub mod error;
pub mod grid;
pub mod manybody;
pub mod model;
pub mod propagator;
pub mod protocol;
pub mod seeding;
pub mod thermal;
pub mod weakfield;

pub use error::{Error, ErrorKind, Result};
pub use grid::{SpatialGrid, WavefunctionGrid};

/// Physical constants in atomic units.
pub mod units {
    pub const HBAR: f64 = 1.0;
    pub const ELECTRON_MASS: f64 = 1.0;
}

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/intro.md")]
    mod intro {}
    #[doc = include_str!("../../../book/src/grids.md")]
    mod grids {}
    #[doc = include_str!("../../../book/src/local-expectations.md")]
    mod local_expectations {}
    #[doc = include_str!("../../../book/src/protocol.md")]
    mod protocol {}
    #[doc = include_str!("../../../book/src/decompositions.md")]
    mod decompositions {}
    #[doc = include_str!("../../../book/src/many-body.md")]
    mod many_body {}
    #[doc = include_str!("../../../book/src/thermalization.md")]
    mod thermalization {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../book/src/formats.md")]
    mod formats {}
}
