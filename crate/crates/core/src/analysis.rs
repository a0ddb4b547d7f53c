//! Fixed points of the mismatched iteration: existence, inclusion residuals,
//! the a-priori primal error bound and closed forms for quadratic problems.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::AdjointMode;
use crate::solvers::SaddleProblem;
use crate::stepsize::ConvexityProfile;
use crate::{Matrix, Vector};

/// Probe step of [`inclusion_residual`] used by reports. The zero set of the
/// residual does not depend on it, its magnitude does.
pub const DEFAULT_PROBE_TAU: f64 = 1.0;

/// `gamma_G gamma_F* > ||A - V||^2 / 4` (strict).
pub fn check_existence(profile: &ConvexityProfile) -> bool {
    profile.exists_unique()
}

/// `||x - prox_{tau G}(x - tau V* y)|| + ||y - prox_{tau F*}(y + tau A x)||`,
/// zero exactly when `0 in dG(x) + V* y` and `0 in dF*(y) - A x`. `mode`
/// selects `V*` or `A^T`.
pub fn inclusion_residual(problem: &SaddleProblem, x: &Vector, y: &Vector, probe_tau: f64, mode: AdjointMode) -> f64 {
    assert!(probe_tau > 0.0, "probe step must be positive");
    let pair = &problem.pair;
    let px = problem
        .prox_g
        .prox(&(x - pair.apply_backward(y, mode) * probe_tau), probe_tau);
    let py = problem
        .prox_fstar
        .prox(&(y + pair.apply_forward(x) * probe_tau), probe_tau);
    (x - px).norm() + (y - py).norm()
}

/// `||V* y - A^T y|| / gamma_G`, a bound on the distance between the primal
/// part of a mismatched fixed point with dual part `y` and the true solution.
pub fn error_bound(problem: &SaddleProblem, y_hat: &Vector) -> f64 {
    let pair = &problem.pair;
    let diff = pair.surrogate().apply_adjoint(y_hat) - pair.forward().apply_adjoint(y_hat);
    diff.norm() / problem.gamma_g()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedPointReport {
    pub exists_unique: bool,
    pub x_hat: Option<Vec<f64>>,
    pub y_hat: Option<Vec<f64>>,
    pub inclusion_residual: f64,
    pub error_bound: f64,
    pub distance_to_true: Option<f64>,
}

/// Evaluates a candidate fixed point `(x, y)` of the mismatched inclusion.
pub fn fixed_point_report(
    problem: &SaddleProblem,
    x: &Vector,
    y: &Vector,
    x_true: Option<&Vector>,
    probe_tau: f64,
) -> Result<FixedPointReport> {
    let profile = ConvexityProfile::new(problem.gamma_g(), problem.gamma_f(), problem.pair.mismatch_norm());
    let exists_unique = profile.map(|p| check_existence(&p)).unwrap_or(false);
    if x.len() != problem.primal_dim() || y.len() != problem.dual_dim() {
        return Err(Error::DimensionMismatch {
            context: "candidate point".into(),
            expected: problem.primal_dim() + problem.dual_dim(),
            found: x.len() + y.len(),
        });
    }
    Ok(FixedPointReport {
        exists_unique,
        x_hat: Some(x.as_slice().to_vec()),
        y_hat: Some(y.as_slice().to_vec()),
        inclusion_residual: inclusion_residual(problem, x, y, probe_tau, AdjointMode::Mismatched),
        error_bound: error_bound(problem, y),
        distance_to_true: x_true.map(|t| (t - x).norm()),
    })
}

/// Fixed points of the quadratic problem
/// `G = (alpha/2)||x||^2`, `F* = (beta/2)||y||^2 + <y, z>`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticReference {
    /// `V^T (alpha beta I + A V^T)^{-1} z`.
    pub x_hat: Vector,
    /// `-alpha (alpha beta I + A V^T)^{-1} z`.
    pub y_hat: Vector,
    /// `A^T (alpha beta I + A A^T)^{-1} z`, the true minimizer.
    pub x_star: Vector,
}

pub fn quadratic_reference(a: &Matrix, v: &Matrix, alpha: f64, beta: f64, z: &Vector) -> Result<QuadraticReference> {
    if !(alpha * beta > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "quadratic reference needs alpha beta > 0, got {}",
            alpha * beta
        )));
    }
    if a.shape() != v.shape() || a.nrows() != z.len() {
        return Err(Error::DimensionMismatch {
            context: "quadratic reference".into(),
            expected: a.nrows(),
            found: z.len(),
        });
    }
    let m = a.nrows();
    let shift = Matrix::identity(m, m) * (alpha * beta);
    let solve = |mat: Matrix, what: &str| -> Result<Vector> {
        mat.lu()
            .solve(z)
            .filter(|s| s.iter().all(|x| x.is_finite()))
            .ok_or_else(|| Error::Singular(format!("{what} is singular")))
    };
    let s_hat = solve(&shift + a * v.transpose(), "alpha beta I + A V^T")?;
    let s_star = solve(&shift + a * a.transpose(), "alpha beta I + A A^T")?;
    Ok(QuadraticReference {
        x_hat: v.tr_mul(&s_hat),
        y_hat: -s_hat * alpha,
        x_star: a.tr_mul(&s_star),
    })
}

/// Least-squares solution of `m u = rhs` and the norm of its residual. A
/// residual bounded away from zero certifies that the linear system (and the
/// inclusion it encodes) has no solution.
pub fn least_squares_residual(m: &Matrix, rhs: &Vector) -> Result<(Vector, f64)> {
    let svd = m.clone().svd(true, true);
    let eps = f64::EPSILON * m.nrows().max(m.ncols()) as f64 * svd.singular_values.max();
    let u = svd
        .solve(rhs, eps)
        .map_err(|e| Error::Singular(format!("least-squares solve failed: {e}")))?;
    let residual = (m * &u - rhs).norm();
    Ok((u, residual))
}
