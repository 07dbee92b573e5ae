//! Shared fixtures for the benchmarks.

use rb_kinetic::slab::{QProfile, SlabProblem};
use rb_kinetic::*;

pub fn velocity(order: usize, model: CollisionModel) -> (VelocityGrid, LinearOperator) {
    let grid = build_velocity_grid(order, VelocityScheme::GaussHermiteTensor).expect("velocity grid");
    let op = assemble_linearized_operator(&grid, model).expect("operator");
    (grid, op)
}

/// Slab problem used by the stationary and Picard benchmarks.
pub fn slab_problem(eps: f64, nz: usize) -> SlabProblem {
    let (grid, op) = velocity(6, CollisionModel::BgkUnit);
    let mut p = SlabProblem::new(grid, op, eps, 0.1, 0.5, nz).expect("slab problem");
    p.q = QProfile::Laminar { lambda: 0.5 };
    p
}
