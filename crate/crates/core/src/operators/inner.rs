//! The 2x2 block systems
//!
//! ```text
//! [  a I    c P ] [v]   [rx]
//! [ -c Q    b I ] [w] = [ry]
//! ```
//!
//! with `P: Y -> X`, `Q: X -> Y`, solved through a Schur complement on the
//! smaller of the two spaces. The splitting iteration uses `a = 1 + tau mu_G`,
//! `b = 1 + tau mu_F*`, `c = tau`, `P = V*` and `Q = A`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use log::debug;

use super::{map_id, AdjointMode, LinearMap, MismatchPair};
use crate::error::{Error, Result};
use crate::{Matrix, Vector};

/// Largest `n + m` for which inner systems are factored densely.
pub const DENSE_DIM_LIMIT: usize = 2000;
/// Largest accepted 1-norm condition estimate of a dense Schur complement.
pub const CONDITION_LIMIT: f64 = 1e14;
/// Relative residual target of the iterative Schur solves.
pub const ITERATIVE_TOL: f64 = 1e-12;

/// Which unknown is eliminated; the Schur complement lives on the other space.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Elimination {
    /// Solve `(ab I + c^2 Q P) w = a ry + c Q rx`, then `v = (rx - c P w) / a`.
    EliminateV,
    /// Solve `(ab I + c^2 P Q) v = b rx - c P ry`, then `w = (ry + c Q v) / b`.
    EliminateW,
}

impl Elimination {
    pub fn for_dims(n: usize, m: usize) -> Self {
        if m <= n {
            Elimination::EliminateV
        } else {
            Elimination::EliminateW
        }
    }
}

/// Coefficients and operator actions of one block system.
pub(crate) struct BlockSystem<'a> {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub n: usize,
    pub m: usize,
    pub p: &'a dyn Fn(&Vector) -> Vector,
    pub q: &'a dyn Fn(&Vector) -> Vector,
}

impl BlockSystem<'_> {
    fn schur_apply(&self, side: Elimination, z: &Vector) -> Vector {
        let ab = self.a * self.b;
        let c2 = self.c * self.c;
        match side {
            Elimination::EliminateV => z * ab + (self.q)(&(self.p)(z)) * c2,
            Elimination::EliminateW => z * ab + (self.p)(&(self.q)(z)) * c2,
        }
    }

    fn schur_rhs(&self, side: Elimination, rx: &Vector, ry: &Vector) -> Vector {
        match side {
            Elimination::EliminateV => ry * self.a + (self.q)(rx) * self.c,
            Elimination::EliminateW => rx * self.b - (self.p)(ry) * self.c,
        }
    }

    fn back_substitute(&self, side: Elimination, rx: &Vector, ry: &Vector, z: Vector) -> (Vector, Vector) {
        match side {
            Elimination::EliminateV => {
                let v = (rx - (self.p)(&z) * self.c) / self.a;
                (v, z)
            }
            Elimination::EliminateW => {
                let w = (ry + (self.q)(&z) * self.c) / self.b;
                (z, w)
            }
        }
    }

    /// Residuals of both block equations, relative to the right-hand side.
    #[cfg(test)]
    pub fn relative_residual(&self, v: &Vector, w: &Vector, rx: &Vector, ry: &Vector) -> f64 {
        let r1 = v * self.a + (self.p)(w) * self.c - rx;
        let r2 = w * self.b - (self.q)(v) * self.c - ry;
        let scale = (rx.norm_squared() + ry.norm_squared()).sqrt().max(f64::MIN_POSITIVE);
        (r1.norm_squared() + r2.norm_squared()).sqrt() / scale
    }

    fn dense_schur(&self, side: Elimination, p: &Matrix, q: &Matrix) -> Matrix {
        let (prod, dim) = match side {
            Elimination::EliminateV => (q * p, self.m),
            Elimination::EliminateW => (p * q, self.n),
        };
        prod * (self.c * self.c) + Matrix::identity(dim, dim) * (self.a * self.b)
    }

    /// Solves iteratively with an optional Jacobi preconditioner on the Schur
    /// complement and an optional initial guess for the eliminated-side unknown.
    pub fn solve_iterative(
        &self,
        side: Elimination,
        rx: &Vector,
        ry: &Vector,
        inv_diag: Option<&Vector>,
        guess: Option<&Vector>,
        tol: f64,
    ) -> Result<(Vector, Vector)> {
        let rhs = self.schur_rhs(side, rx, ry);
        let dim = rhs.len();
        let x0 = guess.cloned().unwrap_or_else(|| Vector::zeros(dim));
        let z = bicgstab(|z| self.schur_apply(side, z), &rhs, x0, inv_diag, tol, 20 * dim + 100)?;
        Ok(self.back_substitute(side, rx, ry, z))
    }
}

/// Preconditioned BiCGSTAB for `op(x) = rhs`; `inv_diag` is the inverse of a
/// diagonal (Jacobi) preconditioner applied from the right.
///
/// Returns the solution once `||rhs - op(x)|| <= tol ||rhs||`.
pub fn bicgstab(
    op: impl Fn(&Vector) -> Vector,
    rhs: &Vector,
    mut x: Vector,
    inv_diag: Option<&Vector>,
    tol: f64,
    max_iters: usize,
) -> Result<Vector> {
    let b_norm = rhs.norm();
    if b_norm == 0.0 {
        return Ok(Vector::zeros(rhs.len()));
    }
    let target = tol * b_norm;
    let precond = |v: &Vector| match inv_diag {
        Some(d) => v.component_mul(d),
        None => v.clone(),
    };
    let mut r = rhs - op(&x);
    if r.norm() <= target {
        return Ok(x);
    }
    let mut r_hat = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = Vector::zeros(rhs.len());
    let mut p = Vector::zeros(rhs.len());
    let mut restarts = 0;
    for _ in 0..max_iters {
        let rho_new = r_hat.dot(&r);
        if rho_new.abs() < f64::EPSILON * r_hat.norm() * r.norm() {
            // Shadow residual became orthogonal; restart from the current residual.
            restarts += 1;
            if restarts > 10 {
                break;
            }
            r_hat = r.clone();
            rho = 1.0;
            alpha = 1.0;
            omega = 1.0;
            v.fill(0.0);
            p.fill(0.0);
            continue;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        p = &r + (&p - &v * omega) * beta;
        let p_hat = precond(&p);
        v = op(&p_hat);
        alpha = rho_new / r_hat.dot(&v);
        let s = &r - &v * alpha;
        if s.norm() <= target {
            x += p_hat * alpha;
            return Ok(x);
        }
        let s_hat = precond(&s);
        let t = op(&s_hat);
        let tt = t.norm_squared();
        omega = if tt > 0.0 { t.dot(&s) / tt } else { 0.0 };
        x += p_hat * alpha + &s_hat * omega;
        r = s - t * omega;
        let r_norm = r.norm();
        if !r_norm.is_finite() {
            break;
        }
        if r_norm <= target {
            return Ok(x);
        }
        if omega == 0.0 {
            restarts += 1;
            if restarts > 10 {
                break;
            }
            r_hat = r.clone();
            rho = 1.0;
            alpha = 1.0;
            omega = 1.0;
            v.fill(0.0);
            p.fill(0.0);
            continue;
        }
        rho = rho_new;
    }
    let residual = (rhs - op(&x)).norm() / b_norm;
    Err(Error::NonConvergence {
        what: "BiCGSTAB",
        iterations: max_iters,
        best_estimate: x.norm(),
        residual,
    })
}

/// Cached data for one `(pair, mode, tau, mu_G, mu_F*)` inner system.
#[derive(Debug)]
pub struct InnerFactorization {
    pub side: Elimination,
    a: f64,
    b: f64,
    c: f64,
    kind: FactorKind,
}

#[derive(Debug)]
enum FactorKind {
    /// Explicit inverse of the dense Schur complement.
    Dense { inverse: Matrix, condition: f64 },
    /// Inverse Jacobi diagonal of the Schur complement, when available.
    Iterative { inv_diag: Option<Vector> },
}

impl InnerFactorization {
    pub fn is_dense(&self) -> bool {
        matches!(self.kind, FactorKind::Dense { .. })
    }

    /// 1-norm condition number of the dense Schur complement.
    pub fn condition(&self) -> Option<f64> {
        match self.kind {
            FactorKind::Dense { condition, .. } => Some(condition),
            FactorKind::Iterative { .. } => None,
        }
    }

    /// Solves the block system. `guess` warm-starts the iterative path and is
    /// ignored by the dense one.
    pub fn solve(
        &self,
        pair: &MismatchPair,
        mode: AdjointMode,
        rx: &Vector,
        ry: &Vector,
        guess: Option<(&Vector, &Vector)>,
    ) -> Result<(Vector, Vector)> {
        check_len("inner system rhs_x", pair.primal_dim(), rx.len())?;
        check_len("inner system rhs_y", pair.dual_dim(), ry.len())?;
        let backward = pair.backward_map(mode);
        let forward = pair.forward();
        let p = |y: &Vector| backward.apply_adjoint(y);
        let q = |x: &Vector| forward.apply(x);
        let sys = BlockSystem {
            a: self.a,
            b: self.b,
            c: self.c,
            n: pair.primal_dim(),
            m: pair.dual_dim(),
            p: &p,
            q: &q,
        };
        match &self.kind {
            FactorKind::Dense { inverse, .. } => {
                let z = inverse * sys.schur_rhs(self.side, rx, ry);
                Ok(sys.back_substitute(self.side, rx, ry, z))
            }
            FactorKind::Iterative { inv_diag } => {
                let guess = guess.map(|(v, w)| match self.side {
                    Elimination::EliminateV => w,
                    Elimination::EliminateW => v,
                });
                sys.solve_iterative(self.side, rx, ry, inv_diag.as_ref(), guess, ITERATIVE_TOL)
                    .map_err(|_| Error::IllConditioned {
                        condition: f64::INFINITY,
                        tau: self.c,
                        tau_bound: pair.tau_bound(),
                    })
            }
        }
    }
}

fn check_len(context: &str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context: context.to_string(),
            expected,
            found,
        })
    }
}

type CacheKey = (usize, usize, u64, u64, u64);

/// Inner-system factorizations shared by every clone of a [`MismatchPair`].
#[derive(Debug, Default)]
pub struct FactorizationCache {
    entries: Mutex<HashMap<CacheKey, Arc<InnerFactorization>>>,
}

impl FactorizationCache {
    pub fn clear(&self) {
        self.entries.lock().expect("factorization cache poisoned").clear();
    }

    #[cfg(test)]
    pub fn len(&self) -> usize {
        self.entries.lock().expect("factorization cache poisoned").len()
    }
}

impl MismatchPair {
    /// Returns the (cached) factorization of the inner system for the given
    /// step size and strong-convexity shifts.
    pub fn inner_factorization(
        &self,
        mode: AdjointMode,
        tau: f64,
        mu_g: f64,
        mu_f: f64,
    ) -> Result<Arc<InnerFactorization>> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::StepBound(format!("tau must be positive and finite, got {tau}")));
        }
        if !(mu_g >= 0.0 && mu_f >= 0.0) {
            return Err(Error::StepBound(format!(
                "strong-convexity shifts must be nonnegative, got mu_G = {mu_g}, mu_F* = {mu_f}"
            )));
        }
        let backward = self.backward_map(mode);
        let key = (
            map_id(self.forward()),
            map_id(backward),
            tau.to_bits(),
            mu_g.to_bits(),
            mu_f.to_bits(),
        );
        let cache = self.cache();
        if let Some(f) = cache.entries.lock().expect("factorization cache poisoned").get(&key) {
            return Ok(f.clone());
        }
        let fact = Arc::new(self.factor(mode, tau, mu_g, mu_f)?);
        cache
            .entries
            .lock()
            .expect("factorization cache poisoned")
            .insert(key, fact.clone());
        Ok(fact)
    }

    fn factor(&self, mode: AdjointMode, tau: f64, mu_g: f64, mu_f: f64) -> Result<InnerFactorization> {
        let (n, m) = (self.primal_dim(), self.dual_dim());
        let side = Elimination::for_dims(n, m);
        let (a, b, c) = (1.0 + tau * mu_g, 1.0 + tau * mu_f, tau);
        let forward = self.forward();
        let backward = self.backward_map(mode);
        let kind = if n + m <= DENSE_DIM_LIMIT {
            let q = forward.to_dense();
            let p = backward.to_dense().transpose();
            let noop = |v: &Vector| v.clone();
            let sys = BlockSystem {
                a,
                b,
                c,
                n,
                m,
                p: &noop,
                q: &noop,
            };
            let schur = sys.dense_schur(side, &p, &q);
            let (inverse, condition) = invert_with_condition(&schur);
            debug!(
                "dense inner factorization ({side:?}, dim {}), condition {condition:e}",
                schur.nrows()
            );
            match inverse {
                Some(inverse) if condition <= CONDITION_LIMIT => FactorKind::Dense { inverse, condition },
                _ => {
                    return Err(Error::IllConditioned {
                        condition,
                        tau,
                        tau_bound: self.tau_bound(),
                    })
                }
            }
        } else {
            let inv_diag = schur_diagonal(&**forward, &**backward, side).map(|d| {
                d.map(|x| {
                    let s = a * b + c * c * x;
                    if s.abs() > f64::EPSILON * a * b {
                        1.0 / s
                    } else {
                        1.0
                    }
                })
            });
            debug!(
                "iterative inner solver ({side:?}), jacobi preconditioner: {}",
                inv_diag.is_some()
            );
            FactorKind::Iterative { inv_diag }
        };
        Ok(InnerFactorization { side, a, b, c, kind })
    }
}

/// `diag(Q P)` or `diag(P Q)` for `Q = forward`, `P = backward^T`, when both
/// operators are explicitly sparse.
pub(crate) fn schur_diagonal(forward: &dyn LinearMap, backward: &dyn LinearMap, side: Elimination) -> Option<Vector> {
    let (a, v) = (forward.as_sparse()?, backward.as_sparse()?);
    Some(match side {
        Elimination::EliminateV => a.row_dot_diag(v),
        Elimination::EliminateW => v.column_dot_diag(a),
    })
}

/// Inverse of a square matrix together with its 1-norm condition number
/// (`inf` when the LU factorization is singular).
pub(crate) fn invert_with_condition(m: &Matrix) -> (Option<Matrix>, f64) {
    match m.clone().lu().try_inverse() {
        Some(inv) if inv.iter().all(|x| x.is_finite()) => {
            let cond = one_norm(m) * one_norm(&inv);
            (Some(inv), cond)
        }
        _ => (None, f64::INFINITY),
    }
}

fn one_norm(m: &Matrix) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Solves `(1 + tau mu_G) v + tau V* w = rhs_x`, `-tau A v + (1 + tau mu_F*) w = rhs_y`.
///
/// `mode` selects whether `V*` or the true adjoint `A^T` couples the blocks.
/// The factorization is cached on the pair.
pub fn solve_inner_system(
    pair: &MismatchPair,
    mode: AdjointMode,
    tau: f64,
    mu_g: f64,
    mu_f: f64,
    rhs_x: &Vector,
    rhs_y: &Vector,
) -> Result<(Vector, Vector)> {
    pair.inner_factorization(mode, tau, mu_g, mu_f)?
        .solve(pair, mode, rhs_x, rhs_y, None)
}
