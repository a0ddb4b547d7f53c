//! Linear operators, mismatched operator pairs and the block systems that
//! appear inside the splitting iterations.
//!
//! Every [`LinearMap`] is internally consistent: `apply_adjoint` is the true
//! adjoint of `apply`. An adjoint mismatch is modeled by a [`MismatchPair`]
//! holding two distinct maps, the forward operator `A` and a surrogate `V`
//! whose adjoint `V*` replaces `A^T` in the iteration.

mod csv_io;
mod inner;
mod sparse;
mod spectral;

use std::fmt;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::par::Execution;
use crate::{Matrix, Vector};

pub use csv_io::{read_dense_csv, write_dense_csv};
pub use inner::{bicgstab, solve_inner_system, InnerFactorization, DENSE_DIM_LIMIT};
pub use sparse::SparseMatrix;
pub use spectral::{
    estimate_operator_norm, estimate_operator_norm_with, estimate_sigma_min, sigma_min_dense, sigma_min_lower_bound,
    PowerIterationOptions, POWER_SEED, SIGMA_ITERATIVE_MAX_ITERS,
};

/// A bounded linear map between finite-dimensional Euclidean spaces together
/// with its exact adjoint.
pub trait LinearMap: Send + Sync {
    fn domain_dim(&self) -> usize;
    fn codomain_dim(&self) -> usize;
    fn apply(&self, x: &Vector) -> Vector;
    fn apply_adjoint(&self, y: &Vector) -> Vector;

    /// Materializes the operator column by column.
    fn to_dense(&self) -> Matrix {
        let n = self.domain_dim();
        let mut m = Matrix::zeros(self.codomain_dim(), n);
        let mut e = Vector::zeros(n);
        for j in 0..n {
            e[j] = 1.0;
            m.set_column(j, &self.apply(&e));
            e[j] = 0.0;
        }
        m
    }

    /// Explicit sparse representation, when the operator was assembled as one.
    fn as_sparse(&self) -> Option<&SparseMatrix> {
        None
    }
}

/// Identity of an operator instance, used to key cached factorizations.
pub(crate) fn map_id(map: &Arc<dyn LinearMap>) -> usize {
    Arc::as_ptr(map) as *const () as usize
}

#[derive(Clone, Debug)]
pub struct DenseMap {
    matrix: Matrix,
}

impl DenseMap {
    pub fn new(matrix: Matrix) -> Self {
        DenseMap { matrix }
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }
}

impl LinearMap for DenseMap {
    fn domain_dim(&self) -> usize {
        self.matrix.ncols()
    }
    fn codomain_dim(&self) -> usize {
        self.matrix.nrows()
    }
    fn apply(&self, x: &Vector) -> Vector {
        &self.matrix * x
    }
    fn apply_adjoint(&self, y: &Vector) -> Vector {
        self.matrix.tr_mul(y)
    }
    fn to_dense(&self) -> Matrix {
        self.matrix.clone()
    }
}

/// `scale * I` on a space of dimension `dim`.
#[derive(Clone, Copy, Debug)]
pub struct ScaledIdentity {
    pub dim: usize,
    pub scale: f64,
}

impl LinearMap for ScaledIdentity {
    fn domain_dim(&self) -> usize {
        self.dim
    }
    fn codomain_dim(&self) -> usize {
        self.dim
    }
    fn apply(&self, x: &Vector) -> Vector {
        x * self.scale
    }
    fn apply_adjoint(&self, y: &Vector) -> Vector {
        y * self.scale
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ZeroMap {
    pub rows: usize,
    pub cols: usize,
}

impl LinearMap for ZeroMap {
    fn domain_dim(&self) -> usize {
        self.cols
    }
    fn codomain_dim(&self) -> usize {
        self.rows
    }
    fn apply(&self, _x: &Vector) -> Vector {
        Vector::zeros(self.rows)
    }
    fn apply_adjoint(&self, _y: &Vector) -> Vector {
        Vector::zeros(self.cols)
    }
}

/// Sparse operator with a precomputed transpose so that both directions are
/// row-parallel products.
#[derive(Clone, Debug)]
pub struct SparseMap {
    matrix: SparseMatrix,
    transpose: SparseMatrix,
    exec: Execution,
}

impl SparseMap {
    pub fn new(matrix: SparseMatrix) -> Self {
        Self::with_execution(matrix, Execution::default())
    }

    pub fn with_execution(matrix: SparseMatrix, exec: Execution) -> Self {
        let transpose = matrix.transpose();
        SparseMap {
            matrix,
            transpose,
            exec,
        }
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.matrix
    }
}

impl LinearMap for SparseMap {
    fn domain_dim(&self) -> usize {
        self.matrix.cols()
    }
    fn codomain_dim(&self) -> usize {
        self.matrix.rows()
    }
    fn apply(&self, x: &Vector) -> Vector {
        Vector::from_vec(self.matrix.mul_vec(x.as_slice(), self.exec))
    }
    fn apply_adjoint(&self, y: &Vector) -> Vector {
        Vector::from_vec(self.transpose.mul_vec(y.as_slice(), self.exec))
    }
    fn to_dense(&self) -> Matrix {
        self.matrix.to_dense()
    }
    fn as_sparse(&self) -> Option<&SparseMatrix> {
        Some(&self.matrix)
    }
}

/// `left - right`, applied action-wise.
#[derive(Clone)]
pub struct DifferenceMap {
    pub left: Arc<dyn LinearMap>,
    pub right: Arc<dyn LinearMap>,
}

impl DifferenceMap {
    pub fn new(left: Arc<dyn LinearMap>, right: Arc<dyn LinearMap>) -> Result<Self> {
        check_same_shape(&*left, &*right, "difference map")?;
        Ok(DifferenceMap { left, right })
    }
}

impl LinearMap for DifferenceMap {
    fn domain_dim(&self) -> usize {
        self.left.domain_dim()
    }
    fn codomain_dim(&self) -> usize {
        self.left.codomain_dim()
    }
    fn apply(&self, x: &Vector) -> Vector {
        self.left.apply(x) - self.right.apply(x)
    }
    fn apply_adjoint(&self, y: &Vector) -> Vector {
        self.left.apply_adjoint(y) - self.right.apply_adjoint(y)
    }
}

fn check_same_shape(a: &dyn LinearMap, b: &dyn LinearMap, context: &str) -> Result<()> {
    if a.domain_dim() != b.domain_dim() {
        return Err(Error::DimensionMismatch {
            context: format!("{context} (domain)"),
            expected: a.domain_dim(),
            found: b.domain_dim(),
        });
    }
    if a.codomain_dim() != b.codomain_dim() {
        return Err(Error::DimensionMismatch {
            context: format!("{context} (codomain)"),
            expected: a.codomain_dim(),
            found: b.codomain_dim(),
        });
    }
    Ok(())
}

/// Largest relative discrepancy `|<Ax, y> - <x, A^T y>|` over `trials` random
/// Gaussian pairs, normalized by `||Ax|| ||y|| + ||x|| ||A^T y||`.
pub fn adjoint_mismatch_probe(forward: &dyn LinearMap, adjoint_of: &dyn LinearMap, trials: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let x = gaussian_vector(&mut rng, forward.domain_dim());
        let y = gaussian_vector(&mut rng, forward.codomain_dim());
        let ax = forward.apply(&x);
        let aty = adjoint_of.apply_adjoint(&y);
        let scale = ax.norm() * y.norm() + x.norm() * aty.norm();
        if scale == 0.0 {
            continue;
        }
        worst = worst.max((ax.dot(&y) - x.dot(&aty)).abs() / scale);
    }
    worst
}

/// Vector of independent standard normal entries.
pub fn gaussian_vector<R: rand::Rng>(rng: &mut R, n: usize) -> Vector {
    Vector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(rng)))
}

/// Which operator supplies the backward action inside an iteration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdjointMode {
    /// Use `A^T`, the exact adjoint of the forward operator.
    Matched,
    /// Use `V*`, the adjoint of the surrogate.
    Mismatched,
}

/// Forward operator `A` and surrogate `V`, with a cached `||A - V||`.
#[derive(Clone)]
pub struct MismatchPair {
    forward: Arc<dyn LinearMap>,
    surrogate: Arc<dyn LinearMap>,
    mismatch_norm: f64,
    cache: Arc<inner::FactorizationCache>,
}

impl fmt::Debug for MismatchPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MismatchPair")
            .field("domain_dim", &self.primal_dim())
            .field("codomain_dim", &self.dual_dim())
            .field("mismatch_norm", &self.mismatch_norm)
            .finish()
    }
}

impl MismatchPair {
    /// Builds the pair and estimates `||A - V||` by power iteration.
    pub fn new(forward: Arc<dyn LinearMap>, surrogate: Arc<dyn LinearMap>) -> Result<Self> {
        check_same_shape(&*forward, &*surrogate, "mismatch pair")?;
        let norm = if Arc::ptr_eq(&forward, &surrogate) {
            0.0
        } else {
            let diff = DifferenceMap::new(forward.clone(), surrogate.clone())?;
            estimate_operator_norm(&diff)?
        };
        Self::with_mismatch_norm(forward, surrogate, norm)
    }

    /// Builds the pair with a known `||A - V||`.
    pub fn with_mismatch_norm(
        forward: Arc<dyn LinearMap>,
        surrogate: Arc<dyn LinearMap>,
        mismatch_norm: f64,
    ) -> Result<Self> {
        check_same_shape(&*forward, &*surrogate, "mismatch pair")?;
        if !(mismatch_norm >= 0.0 && mismatch_norm.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "mismatch norm must be finite and nonnegative, got {mismatch_norm}"
            )));
        }
        Ok(MismatchPair {
            forward,
            surrogate,
            mismatch_norm,
            cache: Arc::default(),
        })
    }

    /// The adjoint-consistent pair `V = A`.
    pub fn matched(forward: Arc<dyn LinearMap>) -> Self {
        MismatchPair {
            surrogate: forward.clone(),
            forward,
            mismatch_norm: 0.0,
            cache: Arc::default(),
        }
    }

    pub fn forward(&self) -> &Arc<dyn LinearMap> {
        &self.forward
    }

    pub fn surrogate(&self) -> &Arc<dyn LinearMap> {
        &self.surrogate
    }

    /// Cached `||A - V||`.
    pub fn mismatch_norm(&self) -> f64 {
        self.mismatch_norm
    }

    pub fn primal_dim(&self) -> usize {
        self.forward.domain_dim()
    }

    pub fn dual_dim(&self) -> usize {
        self.forward.codomain_dim()
    }

    /// The operator whose adjoint acts as the backward map in `mode`.
    pub fn backward_map(&self, mode: AdjointMode) -> &Arc<dyn LinearMap> {
        match mode {
            AdjointMode::Matched => &self.forward,
            AdjointMode::Mismatched => &self.surrogate,
        }
    }

    pub fn apply_forward(&self, x: &Vector) -> Vector {
        self.forward.apply(x)
    }

    /// `A^T y` in matched mode, `V* y` in mismatched mode.
    pub fn apply_backward(&self, y: &Vector, mode: AdjointMode) -> Vector {
        self.backward_map(mode).apply_adjoint(y)
    }

    /// Largest step size for which `I + tau * B` is guaranteed invertible by
    /// the bound `tau < 1 / ||A - V||`.
    pub fn tau_bound(&self) -> f64 {
        if self.mismatch_norm == 0.0 {
            f64::INFINITY
        } else {
            1.0 / self.mismatch_norm
        }
    }

    /// Drops every cached inner-system factorization.
    pub fn invalidate_cache(&self) {
        self.cache.clear();
    }

    pub(crate) fn cache(&self) -> &inner::FactorizationCache {
        &self.cache
    }
}

/// `B_Sigma = [[shift_g I, V*], [-A, shift_f I]]` acting on `X x Y`.
///
/// With both shifts zero this is the skew-like operator of the splitting; it
/// is monotone only when `V = A`.
#[derive(Clone, Debug)]
pub struct BlockSkewOperator {
    pub pair: MismatchPair,
    pub shift_g: f64,
    pub shift_f: f64,
}

impl BlockSkewOperator {
    pub fn new(pair: MismatchPair, shift_g: f64, shift_f: f64) -> Self {
        BlockSkewOperator { pair, shift_g, shift_f }
    }

    pub fn split<'a>(&self, z: &'a Vector) -> (nalgebra::DVectorView<'a, f64>, nalgebra::DVectorView<'a, f64>) {
        let n = self.pair.primal_dim();
        (z.rows(0, n), z.rows(n, z.len() - n))
    }

    fn join(x: Vector, y: Vector) -> Vector {
        let mut z = Vector::zeros(x.len() + y.len());
        z.rows_mut(0, x.len()).copy_from(&x);
        z.rows_mut(x.len(), y.len()).copy_from(&y);
        z
    }
}

impl LinearMap for BlockSkewOperator {
    fn domain_dim(&self) -> usize {
        self.pair.primal_dim() + self.pair.dual_dim()
    }
    fn codomain_dim(&self) -> usize {
        self.domain_dim()
    }
    fn apply(&self, z: &Vector) -> Vector {
        let (x, y) = self.split(z);
        let (x, y) = (x.into_owned(), y.into_owned());
        let top = &x * self.shift_g + self.pair.surrogate.apply_adjoint(&y);
        let bottom = &y * self.shift_f - self.pair.forward.apply(&x);
        Self::join(top, bottom)
    }
    fn apply_adjoint(&self, z: &Vector) -> Vector {
        let (x, y) = self.split(z);
        let (x, y) = (x.into_owned(), y.into_owned());
        let top = &x * self.shift_g - self.pair.forward.apply_adjoint(&y);
        let bottom = &y * self.shift_f + self.pair.surrogate.apply(&x);
        Self::join(top, bottom)
    }
}
