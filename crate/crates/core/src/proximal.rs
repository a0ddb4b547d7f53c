//! Proximal maps `prox_{tau f}(v) = argmin_u f(u) + ||u - v||^2 / (2 tau)`.

use std::sync::Arc;

use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::operators::gaussian_vector;
use crate::Vector;

/// A proper convex lower semicontinuous function accessed through its prox.
pub trait ProxFn: Send + Sync {
    /// `prox_{tau f}(point)`.
    fn prox(&self, point: &Vector, tau: f64) -> Vector;

    /// Declared strong-convexity modulus (a lower bound, not verified).
    fn strong_convexity(&self) -> f64;

    /// Function value for reporting; `None` when not available.
    fn objective(&self, _point: &Vector) -> Option<f64> {
        None
    }

    /// Required input dimension, or `None` when any dimension is accepted.
    fn dim(&self) -> Option<usize> {
        None
    }
}

/// `f = 0`.
#[derive(Clone, Copy, Debug, Default)]
pub struct Zero;

impl ProxFn for Zero {
    fn prox(&self, point: &Vector, _tau: f64) -> Vector {
        point.clone()
    }
    fn strong_convexity(&self) -> f64 {
        0.0
    }
    fn objective(&self, _point: &Vector) -> Option<f64> {
        Some(0.0)
    }
}

/// `f(x) = (alpha / 2) ||x||^2 + <x, shift>`.
#[derive(Clone, Debug)]
pub struct ScaledQuadratic {
    pub alpha: f64,
    pub shift: Option<Vector>,
}

impl ScaledQuadratic {
    pub fn new(alpha: f64) -> Self {
        assert!(alpha >= 0.0, "quadratic weight must be nonnegative");
        ScaledQuadratic { alpha, shift: None }
    }

    pub fn with_shift(alpha: f64, shift: Vector) -> Self {
        assert!(alpha >= 0.0, "quadratic weight must be nonnegative");
        ScaledQuadratic {
            alpha,
            shift: Some(shift),
        }
    }
}

impl ProxFn for ScaledQuadratic {
    fn prox(&self, point: &Vector, tau: f64) -> Vector {
        let scale = 1.0 / (1.0 + tau * self.alpha);
        match &self.shift {
            Some(s) => (point - s * tau) * scale,
            None => point * scale,
        }
    }
    fn strong_convexity(&self) -> f64 {
        self.alpha
    }
    fn objective(&self, point: &Vector) -> Option<f64> {
        let lin = self.shift.as_ref().map_or(0.0, |s| s.dot(point));
        Some(0.5 * self.alpha * point.norm_squared() + lin)
    }
    fn dim(&self) -> Option<usize> {
        self.shift.as_ref().map(|s| s.len())
    }
}

/// `f(x) = ||x||_1`; its prox is soft thresholding at level `tau`.
#[derive(Clone, Copy, Debug, Default)]
pub struct L1Norm;

impl L1Norm {
    /// The Fenchel conjugate, the indicator of `[-1, 1]^d`.
    pub fn conjugate(&self) -> BoxIndicator {
        BoxIndicator { radius: 1.0 }
    }
}

impl ProxFn for L1Norm {
    fn prox(&self, point: &Vector, tau: f64) -> Vector {
        point.map(|v| v.signum() * (v.abs() - tau).max(0.0))
    }
    fn strong_convexity(&self) -> f64 {
        0.0
    }
    fn objective(&self, point: &Vector) -> Option<f64> {
        Some(point.lp_norm(1))
    }
}

/// Indicator of the box `[-radius, radius]^d`; the prox is the projection.
#[derive(Clone, Copy, Debug)]
pub struct BoxIndicator {
    pub radius: f64,
}

impl ProxFn for BoxIndicator {
    fn prox(&self, point: &Vector, _tau: f64) -> Vector {
        point.map(|v| v.clamp(-self.radius, self.radius))
    }
    fn strong_convexity(&self) -> f64 {
        0.0
    }
    fn objective(&self, point: &Vector) -> Option<f64> {
        let inside = point.iter().all(|v| v.abs() <= self.radius);
        Some(if inside { 0.0 } else { f64::INFINITY })
    }
}

/// Indicator of `{p : |p_i| <= radius for every pixel i}` where a field of
/// `pixels` 2-vectors is stored as all first components followed by all
/// second components. The prox projects each pixel radially.
#[derive(Clone, Copy, Debug)]
pub struct Linf2Ball {
    pub radius: f64,
    pub pixels: usize,
}

impl Linf2Ball {
    pub fn new(radius: f64, pixels: usize) -> Self {
        assert!(radius >= 0.0, "ball radius must be nonnegative");
        Linf2Ball { radius, pixels }
    }

    pub fn project(&self, field: &Vector) -> Vector {
        assert_eq!(field.len(), 2 * self.pixels, "field must hold two components per pixel");
        let n = self.pixels;
        let mut out = field.clone();
        if self.radius == 0.0 {
            out.fill(0.0);
            return out;
        }
        for i in 0..n {
            let norm = field[i].hypot(field[n + i]);
            if norm > self.radius {
                let s = self.radius / norm;
                out[i] *= s;
                out[n + i] *= s;
            }
        }
        out
    }

    /// Largest pixel norm of a field.
    pub fn max_pixel_norm(&self, field: &Vector) -> f64 {
        let n = self.pixels;
        (0..n).map(|i| field[i].hypot(field[n + i])).fold(0.0, f64::max)
    }
}

impl ProxFn for Linf2Ball {
    fn prox(&self, point: &Vector, _tau: f64) -> Vector {
        self.project(point)
    }
    fn strong_convexity(&self) -> f64 {
        0.0
    }
    fn objective(&self, point: &Vector) -> Option<f64> {
        Some(if self.max_pixel_norm(point) <= self.radius * (1.0 + 1e-12) {
            0.0
        } else {
            f64::INFINITY
        })
    }
    fn dim(&self) -> Option<usize> {
        Some(2 * self.pixels)
    }
}

/// `f + (epsilon / 2) ||.||^2`, evaluated as
/// `prox_{tau/(1 + tau eps) f}(point / (1 + tau eps))`.
#[derive(Clone)]
pub struct PlusQuadratic {
    pub base: Arc<dyn ProxFn>,
    pub epsilon: f64,
}

impl PlusQuadratic {
    pub fn new(base: Arc<dyn ProxFn>, epsilon: f64) -> Self {
        assert!(epsilon >= 0.0, "quadratic weight must be nonnegative");
        PlusQuadratic { base, epsilon }
    }
}

impl ProxFn for PlusQuadratic {
    fn prox(&self, point: &Vector, tau: f64) -> Vector {
        let s = 1.0 + tau * self.epsilon;
        self.base.prox(&(point / s), tau / s)
    }
    fn strong_convexity(&self) -> f64 {
        self.base.strong_convexity() + self.epsilon
    }
    fn objective(&self, point: &Vector) -> Option<f64> {
        self.base
            .objective(point)
            .map(|v| v + 0.5 * self.epsilon * point.norm_squared())
    }
    fn dim(&self) -> Option<usize> {
        self.base.dim()
    }
}

/// Sum of functions acting on consecutive, disjoint blocks of coordinates.
#[derive(Clone)]
pub struct BlockSeparable {
    blocks: Vec<(Arc<dyn ProxFn>, usize)>,
}

impl BlockSeparable {
    pub fn new(blocks: Vec<(Arc<dyn ProxFn>, usize)>) -> Result<Self> {
        for (i, (f, len)) in blocks.iter().enumerate() {
            if let Some(d) = f.dim() {
                if d != *len {
                    return Err(Error::DimensionMismatch {
                        context: format!("block {i} of separable function"),
                        expected: *len,
                        found: d,
                    });
                }
            }
        }
        Ok(BlockSeparable { blocks })
    }

    fn spans(&self) -> impl Iterator<Item = (&Arc<dyn ProxFn>, usize, usize)> {
        self.blocks.iter().scan(0usize, |start, (f, len)| {
            let s = *start;
            *start += len;
            Some((f, s, *len))
        })
    }
}

impl ProxFn for BlockSeparable {
    fn prox(&self, point: &Vector, tau: f64) -> Vector {
        let mut out = Vector::zeros(point.len());
        for (f, start, len) in self.spans() {
            let block = point.rows(start, len).into_owned();
            out.rows_mut(start, len).copy_from(&f.prox(&block, tau));
        }
        out
    }
    fn strong_convexity(&self) -> f64 {
        self.blocks
            .iter()
            .map(|(f, _)| f.strong_convexity())
            .fold(f64::INFINITY, f64::min)
    }
    fn objective(&self, point: &Vector) -> Option<f64> {
        let mut total = 0.0;
        for (f, start, len) in self.spans() {
            total += f.objective(&point.rows(start, len).into_owned())?;
        }
        Some(total)
    }
    fn dim(&self) -> Option<usize> {
        Some(self.blocks.iter().map(|(_, len)| len).sum())
    }
}

/// `prox_{lambda (f - (mu/2)||.||^2)}(point)`, computed as
/// `prox_{lambda/(1 - lambda mu) f}(point / (1 - lambda mu))`.
///
/// Requires `lambda < 1/mu`; `mu` should not exceed the strong-convexity
/// modulus of `base`, otherwise the shifted function is not convex.
pub fn prox_convex_shifted(base: &dyn ProxFn, mu: f64, point: &Vector, lambda: f64) -> Result<Vector> {
    if mu < 0.0 {
        return Err(Error::StepBound(format!("shift mu = {mu} must be nonnegative")));
    }
    let s = 1.0 - lambda * mu;
    if !(s > 0.0) {
        return Err(Error::StepBound(format!(
            "lambda = {lambda} must be below 1/mu = {}",
            1.0 / mu
        )));
    }
    if mu > base.strong_convexity() {
        warn!(
            "shift mu = {mu} exceeds declared strong convexity {}; shifted function may be nonconvex",
            base.strong_convexity()
        );
    }
    Ok(base.prox(&(point / s), lambda / s))
}

/// Randomized check that `(v - prox(v)) / tau`, a subgradient at `prox(v)`,
/// is strongly monotone with the declared modulus. Logs a warning and returns
/// `false` on a violation.
pub fn spot_check_strong_convexity(f: &dyn ProxFn, dim: usize, tau: f64, trials: usize, seed: u64) -> bool {
    let gamma = f.strong_convexity();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..trials {
        let a = gaussian_vector(&mut rng, dim) * 3.0;
        let b = gaussian_vector(&mut rng, dim) * 3.0;
        let (pa, pb) = (f.prox(&a, tau), f.prox(&b, tau));
        let ga = (&a - &pa) / tau;
        let gb = (&b - &pb) / tau;
        let dp = &pa - &pb;
        let lhs = (ga - gb).dot(&dp);
        let rhs = gamma * dp.norm_squared();
        if lhs < rhs - 1e-9 * (1.0 + rhs.abs()) {
            warn!("declared strong convexity {gamma} violated: <g_a - g_b, p_a - p_b> = {lhs} < {rhs}");
            return false;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_vec(xs.to_vec())
    }

    #[test]
    fn quadratic_prox_closed_forms() {
        let g = ScaledQuadratic::new(0.01);
        let x = v(&[2.0, -4.0]);
        assert_eq!(g.prox(&x, 3.0), &x / (1.0 + 0.03));
        assert_eq!(ScaledQuadratic::new(0.0).prox(&x, 5.0), x);
        let b = v(&[1.0, 0.5]);
        let f = ScaledQuadratic::with_shift(1.0, b.clone());
        assert_eq!(f.prox(&x, 1.0), (&x - &b) / 2.0);
    }

    #[test]
    fn soft_threshold() {
        assert_eq!(L1Norm.prox(&v(&[0.0, 0.0]), 1.0), v(&[0.0, 0.0]));
        assert_eq!(L1Norm.prox(&v(&[2.0, -0.5]), 1.0), v(&[1.0, 0.0]));
    }

    #[test]
    fn ball_projection() {
        let ball = Linf2Ball::new(1.0, 2);
        let inside = v(&[0.1, -0.2, 0.3, 0.4]);
        assert_eq!(ball.project(&inside), inside);
        let out = ball.project(&v(&[3.0, 0.0, 4.0, 0.5]));
        assert!((out[0] - 0.6).abs() < 1e-15 && (out[2] - 0.8).abs() < 1e-15);
        assert_eq!((out[1], out[3]), (0.0, 0.5));
        assert_eq!(Linf2Ball::new(0.0, 2).project(&inside), Vector::zeros(4));
    }

    #[test]
    fn plus_quadratic_prescales() {
        let ball: Arc<dyn ProxFn> = Arc::new(Linf2Ball::new(6.0, 1));
        let f = PlusQuadratic::new(ball.clone(), 0.1);
        let p = v(&[10.0, 2.0]);
        assert_eq!(f.prox(&p, 0.5), ball.prox(&(&p / 1.05), 0.0));
        assert!((f.strong_convexity() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn block_separable_dispatches() {
        let f = BlockSeparable::new(vec![
            (Arc::new(ScaledQuadratic::new(1.0)) as Arc<dyn ProxFn>, 2),
            (Arc::new(L1Norm), 1),
        ])
        .unwrap();
        assert_eq!(f.prox(&v(&[2.0, 4.0, -3.0]), 1.0), v(&[1.0, 2.0, -2.0]));
        assert_eq!(f.strong_convexity(), 0.0);
        assert_eq!(f.objective(&v(&[1.0, 1.0, -2.0])), Some(3.0));
        assert!(BlockSeparable::new(vec![(Arc::new(Linf2Ball::new(1.0, 2)) as Arc<dyn ProxFn>, 3)]).is_err());
    }

    #[test]
    fn shifted_prox_matches_direct_formula() {
        let (alpha, mu) = (0.8, 0.5);
        let base = ScaledQuadratic::new(alpha);
        let x = v(&[1.5, -2.0, 0.25]);
        for lambda in [0.01, 0.1, 0.9 * 0.5 / mu] {
            let shifted = prox_convex_shifted(&base, mu, &x, lambda).unwrap();
            let direct = &x / (1.0 + lambda * (alpha - mu));
            assert!((shifted - direct).norm() < 1e-12);
        }
        assert!(prox_convex_shifted(&base, mu, &x, 2.0).is_err());
        assert_eq!(prox_convex_shifted(&base, 0.0, &x, 0.3).unwrap(), base.prox(&x, 0.3));
    }

    #[test]
    fn spot_check_flags_overclaimed_modulus() {
        assert!(spot_check_strong_convexity(&ScaledQuadratic::new(2.0), 5, 0.7, 50, 1));
        let liar = PlusQuadratic::new(Arc::new(L1Norm), 0.0);
        struct Overclaim(PlusQuadratic);
        impl ProxFn for Overclaim {
            fn prox(&self, p: &Vector, t: f64) -> Vector {
                self.0.prox(p, t)
            }
            fn strong_convexity(&self) -> f64 {
                1.0
            }
        }
        assert!(!spot_check_strong_convexity(&Overclaim(liar), 5, 0.7, 50, 1));
    }
}
