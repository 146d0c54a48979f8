//! Numerical building blocks shared by every other module.

mod diff;
mod linalg;
mod ode;

pub use diff::{grad_fd, hessian_fd};
pub use linalg::{
    check_full_column_rank, is_finite, left_annihilator, matrix, pseudo_inverse, rotation,
    skew_defect, skew_j, symmetry_defect, vector, Matrix, Vector, RANK_TOL,
};
pub use ode::{integrate, IntegratorSettings, Method, Solution, VectorField};

use std::f64::consts::PI;

/// Wraps an angle to `(-π, π]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let mut a = theta.rem_euclid(2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    }
    a
}
