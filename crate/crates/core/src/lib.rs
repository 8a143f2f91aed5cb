//! Conjugate gradients derived from orthogonal gradients.
//!
//! The crate runs CG on a strictly convex quadratic `q(x) = ½ xᵀHx + cᵀx`
//! and cross-checks every iterate against independent characterizations:
//! the recursive and gradient-sum forms of the direction, brute-force
//! minimization over the span of the observed gradients, and the
//! minimum-norm vector of the affine hull of the gradients. Everything is
//! generic over [`Scalar`], so the same code runs in `f64` and in exact
//! rational arithmetic, where every identity is checked with tolerance zero.

pub mod cg;
pub mod cli;
pub mod error;
pub mod generate;
pub mod io;
pub mod linalg;
pub mod minnorm;
pub mod quadratic;
pub mod scalar;
pub mod subspace;
pub mod verify;

pub use error::{Error, Result};
pub use scalar::{Backend, Scalar};

/// Exact arbitrary-precision rational scalar.
pub type Rational = num_rational::BigRational;

pub type VectorF64 = linalg::Vector<f64>;
pub type VectorQ = linalg::Vector<Rational>;
pub type SymMatrixF64 = linalg::SymMatrix<f64>;
pub type SymMatrixQ = linalg::SymMatrix<Rational>;
pub type ProblemF64 = quadratic::QuadraticProblem<f64>;
pub type ProblemQ = quadratic::QuadraticProblem<Rational>;
pub type TraceF64 = cg::CgTrace<f64>;
pub type TraceQ = cg::CgTrace<Rational>;
