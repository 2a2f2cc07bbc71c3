//! Numerical solver for the radial three-wave kinetic equation of viscous
//! capillary waves,
//!
//! ```text
//! ∂t f = Q[f] - 2ν (|k|^2 + ρ|k|^4) f,   E(k) = sqrt(σ) |k|^γ,
//! ```
//!
//! with resonance-surface quadrature, an energy-conserving collision
//! discretization, positivity-preserving time stepping and moment diagnostics.

pub mod cli;
pub mod collision;
pub mod config;
pub mod diagnostics;
pub mod dispersion;
pub mod error;
pub mod evolution;
pub mod geometry;
pub mod grid;
pub mod io;
pub mod kernel;
pub mod quadrature;

pub use error::{Error, Result};
