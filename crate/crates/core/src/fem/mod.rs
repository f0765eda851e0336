//! P1 finite elements: problem description, assembly with symmetric
//! Dirichlet elimination, CG and Picard solves, backward-Euler stepping and
//! the relative error metric.

mod assembly;
mod problem;
mod solve;

pub use assembly::{
    apply_dirichlet, assemble, assemble_unconstrained, dirichlet_vector, mass_matrix,
    stiffness_matrix, triangle_average, DirichletElimination, SparseSystem,
};
pub use problem::{Equation, ProblemSpec};
pub use solve::{
    cg_cap, dirichlet_lift, format_mean_std, format_percent, l2_relative_error, picard, solve_cg, solve_direct,
    solve_linear, HeatStepper, PicardSolution, PreparedLinear, CG_TOL, PICARD_MAX_ITER, inner_tol, picard_tol,
    PICARD_TOL,
};
