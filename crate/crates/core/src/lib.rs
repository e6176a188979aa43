//! Spin-1/2 rational Gaudin magnets in arbitrarily oriented magnetic fields.
//!
//! Every eigenstate of the conserved charges
//!
//! ```text
//! R_k = B·S_k + Σ_{j≠k} S_k·S_j / (ε_k − ε_j)
//! ```
//!
//! is written as `N` generalized raising operators
//! `S⁺(λ) = B₀⁺ + Σ_i S⁺_i / (λ − ε_i)` acting on the fully polarized state
//! `|↓…↓⟩`, whatever the orientation of the field. The crate solves the
//! quadratic equations in the eigenvalue-based variables
//! `Λ_i = Σ_p 1/(ε_i − λ_p)`, rebuilds the roots `λ_p`, evaluates
//! determinant scalar products and canonical-basis projections, and runs
//! quench dynamics. Each formula has a brute-force counterpart on the full
//! `2^N` Fock space ([`fock`]) that the test suites compare against.
//!
//! Module map:
//!
//! * [`model`]: the validated [`SpinSystem`] and derived field constants.
//! * [`fock`]: operators, Bethe vectors and the exact-diagonalization oracle.
//! * [`bethe`]: quadratic equations, Newton refinement, continuation in `|B|`.
//! * [`roots`]: `Λ ↔ λ` conversion and root-level identities.
//! * [`overlap`]: determinant overlaps and projections with their oracles.
//! * [`dynamics`]: eigenbasis expansion and time evolution.
//! * [`config`]: the JSON configuration file.

// `!(x < tol)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bethe;
pub mod config;
pub mod dynamics;
mod error;
pub mod fock;
mod linalg;
pub mod model;
pub mod overlap;
pub mod roots;

pub use error::{GaudinError, Result};
pub use model::{build_system, FieldParams, SpinSystem};

/// Complex double used for amplitudes, roots and operator entries.
pub type C64 = num_complex::Complex64;
