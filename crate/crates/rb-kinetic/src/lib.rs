//! Kinetic Rayleigh-Benard toolkit.
//!
//! Velocity-space collision operators and their spectral gaps, Boussinesq
//! linear stability and roll solutions, Hilbert-expansion assembly with Milne
//! boundary layers, and a one-dimensional slab solver for the remainder.

// `!(x > 0.0)` is used on purpose: it rejects NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod collision;
pub mod expansion;
pub mod field;
pub mod hardsphere;
pub mod hydro;
pub mod krylov;
pub mod milne;
pub mod slab;
pub mod quadrature;
pub mod velocity;

pub use collision::{
    assemble_linearized_operator, bilinear_j, build_lj, burnett_functions, collision_frequency,
    pseudo_inverse, spectral_gap, Burnett, CollisionModel, GapReport, LinearOperator,
    OperatorKind, PseudoInverse,
};
pub use velocity::{build_velocity_grid, KernelBasis, VelocityGrid, VelocityScheme};

/// Errors surfaced by every module.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("solvability violated: |Pg| = {norm:.3e}")]
    Solvability { norm: f64, moments: Vec<f64> },
    #[error("assembly defect {defect:.3e} exceeds tolerance {tol:.1e}")]
    Assembly { defect: f64, tol: f64 },
    #[error("kernel construction residual {residual:.3e} at eps = {eps}")]
    Kernel { residual: f64, eps: f64 },
    #[error("nonpositive spectral gap {gap:.6e}")]
    Gap { gap: f64 },
    #[error("solver did not converge: {0}")]
    Convergence(String),
    #[error("no sign change of the growth rate in [{lo}, {hi}]")]
    Bracket { lo: f64, hi: f64 },
    #[error("delta = {delta} is outside the validity range (0, {max}]")]
    OutOfRange { delta: f64, max: f64 },
    #[error("numerical blow-up at step {step}")]
    Blowup { step: usize },
    #[error("Picard iteration diverged at eps = {eps}: ratios {ratios:?}")]
    Divergence { eps: f64, ratios: Vec<f64> },
    #[error("missing data: {0}")]
    Missing(String),
}

pub type Result<T> = std::result::Result<T, Error>;
