//! Operator norms and smallest singular values.

use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::inner::{schur_diagonal, BlockSystem, Elimination, DENSE_DIM_LIMIT, ITERATIVE_TOL};
use super::{gaussian_vector, BlockSkewOperator, LinearMap};
use crate::error::{Error, Result};
use crate::Vector;

/// Seed of the deterministic start vector of every power iteration.
pub const POWER_SEED: u64 = 0x5EED;

#[derive(Clone, Copy, Debug)]
pub struct PowerIterationOptions {
    pub tol: f64,
    pub max_iters: usize,
    pub seed: u64,
}

impl Default for PowerIterationOptions {
    fn default() -> Self {
        PowerIterationOptions {
            tol: 1e-9,
            max_iters: 5000,
            seed: POWER_SEED,
        }
    }
}

/// `||M||` by power iteration on `M^T M` with default options.
pub fn estimate_operator_norm(map: &dyn LinearMap) -> Result<f64> {
    estimate_operator_norm_with(map, PowerIterationOptions::default())
}

/// `||M||` by power iteration on `M^T M`, stopping once the relative change
/// of the estimate `||M v||` drops below `opts.tol`.
pub fn estimate_operator_norm_with(map: &dyn LinearMap, opts: PowerIterationOptions) -> Result<f64> {
    power_iteration(map.domain_dim(), opts, "operator norm power iteration", |v| {
        let mv = map.apply(v);
        let est = mv.norm();
        Ok((est, map.apply_adjoint(&mv)))
    })
}

/// Shared driver: `step(v)` returns the estimate for the unit vector `v` and
/// the next (unnormalized) iterate. An estimate of exactly zero on the first
/// step means the operator vanishes.
///
/// The estimates increase monotonically; the remaining error is extrapolated
/// from the ratio `r` of successive changes as `change * r / (1 - r)`.
fn power_iteration(
    dim: usize,
    opts: PowerIterationOptions,
    what: &'static str,
    mut step: impl FnMut(&Vector) -> Result<(f64, Vector)>,
) -> Result<f64> {
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "power iteration tolerance must be positive, got {}",
            opts.tol
        )));
    }
    if dim == 0 {
        return Ok(0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut v = gaussian_vector(&mut rng, dim);
    v /= v.norm();
    let mut prev = 0.0;
    let mut prev_change = f64::INFINITY;
    let mut residual = f64::INFINITY;
    for k in 0..opts.max_iters {
        let (est, next) = step(&v)?;
        if k == 0 && est == 0.0 {
            return Ok(0.0);
        }
        let change = (est - prev).abs() / est;
        if k > 0 {
            let ratio = change / prev_change;
            residual = if ratio < 1.0 {
                change * ratio / (1.0 - ratio)
            } else {
                change
            };
            if residual <= opts.tol || change <= 4.0 * f64::EPSILON {
                return Ok(est);
            }
        }
        prev = est;
        prev_change = change;
        let norm = next.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Ok(est);
        }
        v = next / norm;
    }
    Err(Error::NonConvergence {
        what,
        iterations: opts.max_iters,
        best_estimate: prev,
        residual,
    })
}

/// Smallest singular value of a square operator by dense SVD. Errors when the
/// operator exceeds the dense dimension limit.
pub fn sigma_min_dense(map: &dyn LinearMap) -> Result<f64> {
    let dim = map.domain_dim().max(map.codomain_dim());
    if dim > DENSE_DIM_LIMIT {
        return Err(Error::DenseLimitExceeded {
            dim,
            limit: DENSE_DIM_LIMIT,
        });
    }
    let svd = map.to_dense().svd(false, false);
    Ok(svd.singular_values.min())
}

/// Iteration cap of the inverse power iteration on the iterative path.
pub const SIGMA_ITERATIVE_MAX_ITERS: usize = 200;

/// Lower bound `lambda_min([[s_g, -d/2], [-d/2, s_f]])` on `sigma_min(B_Sigma)`
/// with `d = ||A - V||`, from `||B z|| ||z|| >= <B z, z>`. Zero or negative
/// when the symmetric part is not positive definite.
pub fn sigma_min_lower_bound(b: &BlockSkewOperator) -> f64 {
    let d = b.pair.mismatch_norm();
    let mean = 0.5 * (b.shift_g + b.shift_f);
    let half_gap = 0.5 * (b.shift_g - b.shift_f);
    mean - (half_gap * half_gap + 0.25 * d * d).sqrt()
}

/// `sigma_min(B_Sigma)`: dense SVD up to the dense limit, otherwise inverse
/// power iteration on `B^T B` with iterative block solves (both shifts must be
/// positive). When the iteration does not settle within
/// [`SIGMA_ITERATIVE_MAX_ITERS`] steps, as happens with large clusters of
/// small singular values, the positive [`sigma_min_lower_bound`] is returned.
pub fn estimate_sigma_min(b: &BlockSkewOperator, tol: f64) -> Result<f64> {
    if b.domain_dim() <= DENSE_DIM_LIMIT {
        return sigma_min_dense(b);
    }
    if !(b.shift_g > 0.0 && b.shift_f > 0.0) {
        return Err(Error::InvalidConfig(
            "iterative sigma_min requires positive shifts on both blocks".into(),
        ));
    }
    let pair = &b.pair;
    let (n, m) = (pair.primal_dim(), pair.dual_dim());
    let side = Elimination::for_dims(n, m);
    let forward = pair.forward();
    let surrogate = pair.surrogate();
    let inv_diag = schur_diagonal(&**forward, &**surrogate, side)
        .map(|d| d.map(|x| 1.0 / (b.shift_g * b.shift_f + x).max(f64::EPSILON)));

    let p = |y: &Vector| surrogate.apply_adjoint(y);
    let q = |x: &Vector| forward.apply(x);
    let p_t = |y: &Vector| -forward.apply_adjoint(y);
    let q_t = |x: &Vector| -surrogate.apply(x);
    let sys = BlockSystem {
        a: b.shift_g,
        b: b.shift_f,
        c: 1.0,
        n,
        m,
        p: &p,
        q: &q,
    };
    let sys_t = BlockSystem {
        a: b.shift_g,
        b: b.shift_f,
        c: 1.0,
        n,
        m,
        p: &p_t,
        q: &q_t,
    };

    let opts = PowerIterationOptions {
        tol,
        max_iters: SIGMA_ITERATIVE_MAX_ITERS,
        ..PowerIterationOptions::default()
    };
    let result = power_iteration(n + m, opts, "inverse power iteration for sigma_min", |z| {
        let (zx, zy) = b.split(z);
        let (ux, uy) = sys.solve_iterative(
            side,
            &zx.into_owned(),
            &zy.into_owned(),
            inv_diag.as_ref(),
            None,
            ITERATIVE_TOL,
        )?;
        let est = (ux.norm_squared() + uy.norm_squared()).sqrt();
        let (tx, ty) = sys_t.solve_iterative(side, &ux, &uy, inv_diag.as_ref(), None, ITERATIVE_TOL)?;
        let mut t = Vector::zeros(n + m);
        t.rows_mut(0, n).copy_from(&tx);
        t.rows_mut(n, m).copy_from(&ty);
        Ok((est, t))
    });
    match result {
        Ok(inv_norm) => Ok(1.0 / inv_norm),
        Err(Error::NonConvergence { best_estimate, .. }) => {
            let lower = sigma_min_lower_bound(b);
            if !(lower > 0.0) {
                return Err(Error::NoRateCertificate { eta: 0.0, sigma: lower });
            }
            warn!(
                "sigma_min iteration unsettled (estimate {:.6e}); using the lower bound {lower:.6e}",
                1.0 / best_estimate
            );
            Ok(lower)
        }
        Err(e) => Err(e),
    }
}
