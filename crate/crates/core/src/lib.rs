//! Non-local Cahn–Hilliard tumor-growth model with relaxation parameters.
//!
//! The system evolves a phase field `φ`, a chemical potential `μ` and a
//! nutrient `σ` on a 1D interval or 2D rectangle with no-flux boundaries:
//!
//! ```text
//! ε μ_t + φ_t − Δμ = (Pσ − A) h(φ)
//! μ = τ φ_t + aφ − J*φ + F'(φ) − χσ
//! σ_t − Δσ + B(σ − σ_S) + C σ h(φ) = −η Δφ
//! ```
//!
//! with `a = J*1`. Singular potentials enter through the Yosida
//! regularization of their convex part. The crate provides the time stepper
//! ([`model`]), an independent spectral Galerkin integrator ([`galerkin`]),
//! diagnostics and theorem probes ([`diagnostics`]), and a sweep harness for
//! the `ε → 0` / `τ → 0` relaxation limits ([`asymptotics`]).

pub mod asymptotics;
pub mod audit;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod galerkin;
pub mod grid;
pub mod io;
pub mod kernel;
mod linalg;
pub mod model;
pub mod ode;
pub mod potential;
pub mod verify;

pub use error::{Error, Result};
pub use grid::{Field, Grid};
