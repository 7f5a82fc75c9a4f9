//! Numerical building blocks shared by every other module.
//!
//! Matrices and vectors are plain `nalgebra` dense types. All tolerances are
//! explicit arguments; the `DEFAULT_*` constants document the values used
//! throughout the crate.

mod io;
mod linalg;
mod lp;
mod rng;
mod special;
mod stats;

pub use io::{format_f64, format_matrix, parse_matrix, parse_vector, read_matrix, read_vector, write_matrix};
pub(crate) use linalg::shrink;
pub use linalg::{
    kernel_basis, nonincreasing_rearrangement, operator_norm, singular_values, smallest_nonzero_singular_value,
    soft_threshold, symmetric_sqrt,
};
pub use lp::{solve_lp, ConstraintSense, LpProblem, LpSolution, LpStatus};
pub use rng::{label_id, mix_stream, RngStream};
pub use special::{gamma_fn, ln_gamma, unit_ball_width};
pub use stats::{par_samples, MeanEstimate, RunningStats};

/// Dense real matrix.
pub type Matrix = nalgebra::DMatrix<f64>;
/// Dense real column vector.
pub type Vector = nalgebra::DVector<f64>;

/// Relative singular-value cutoff used to decide numerical rank.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;
/// Relative stopping tolerance of the power iteration.
pub const DEFAULT_POWER_TOL: f64 = 1e-12;
/// Iteration cap of the power iteration.
pub const POWER_MAX_ITER: usize = 100_000;
/// Feasibility / pivot tolerance for the simplex solver.
pub const DEFAULT_LP_TOL: f64 = 1e-9;

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
