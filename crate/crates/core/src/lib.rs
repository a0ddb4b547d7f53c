//! Saddle-point solvers for `min_x max_y G(x) + <Ax, y> - F*(y)` when the
//! backward operator is only an approximation `V*` of the true adjoint `A^T`.
//!
//! The crate provides the primal-dual Douglas-Rachford iteration (with the
//! true or a mismatched adjoint), an adapted variant that stays monotone under
//! mismatch, a Chambolle-Pock baseline, step-size and linear-rate
//! certificates, fixed-point existence and error-bound analysis, and an
//! experiment harness (quadratic problems, a divergence counterexample and a
//! small TV-regularized tomography study).

// `!(x > 0.0)` is used on purpose so NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod experiments;
pub mod operators;
pub mod par;
pub mod proximal;
pub mod solvers;
pub mod stepsize;

pub use error::{Error, Result};

/// Dense real vector used for every primal and dual variable.
pub type Vector = nalgebra::DVector<f64>;
/// Dense real matrix.
pub type Matrix = nalgebra::DMatrix<f64>;
