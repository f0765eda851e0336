//! Overlapping domain decomposition for 2D boundary value problems.
//!
//! A domain is triangulated, partitioned into overlapping subdomains, and the
//! global solution is assembled from independent local solves through the
//! additive Schwarz-Richardson update
//! `u ← u + τ Σ_k R_kᵀ (ŵ_k − R_k u)`.
//! Local solvers are pluggable: an exact P1 finite-element solve, an exact
//! solve with injected error of controlled size, or a learned branch-trunk
//! surrogate wrapped in symmetry-based normalization.
//!
//! Everything numerical is generic over [`Real`] (`f32` or `f64`); the
//! aliases at the crate root fix the scalar to `f64`.

// `!(x > 0)` also rejects NaN, which is the point.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
pub mod datagen;
pub mod decomp;
pub mod error;
pub mod fem;
pub mod geometry;
pub mod scalar;
pub mod schwarz;
pub mod sparse;
pub mod surrogate;
pub mod symmetry;
pub mod verify;

pub use error::{Result, SniError};
pub use scalar::Real;

pub type Polygon = geometry::Polygon<f64>;
pub type Mesh = geometry::TriMesh<f64>;
pub type SubMesh = geometry::SubMesh<f64>;
pub type ProblemSpec = fem::ProblemSpec<f64>;
pub type CsrMatrix = sparse::CsrMatrix<f64>;
pub type SparseSystem = fem::SparseSystem<f64>;
pub type TransformRecord = symmetry::TransformRecord<f64>;
pub type SniConfig = schwarz::SniConfig<f64>;
pub type SniState = schwarz::SniState<f64>;
pub type SurrogateModel = surrogate::SurrogateModel<f64>;

pub type Polygon32 = geometry::Polygon<f32>;
pub type Mesh32 = geometry::TriMesh<f32>;
pub type ProblemSpec32 = fem::ProblemSpec<f32>;
