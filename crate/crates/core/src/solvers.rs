//! Iterations for the saddle-point problem
//! `min_x max_y G(x) + <Ax, y> - F*(y)`:
//! primal-dual Douglas-Rachford (PDDR) with the true or a mismatched adjoint,
//! the adapted PDDR variant, a Chambolle-Pock baseline, and the lifted
//! preconditioned proximal point iteration that PDDR is equivalent to.

use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::{gaussian_vector, AdjointMode, MismatchPair};
use crate::proximal::{prox_convex_shifted, ProxFn};
use crate::Vector;

/// `G`, `F*` (through their proxes) and the operator pair.
#[derive(Clone)]
pub struct SaddleProblem {
    pub prox_g: Arc<dyn ProxFn>,
    pub prox_fstar: Arc<dyn ProxFn>,
    pub pair: MismatchPair,
}

impl SaddleProblem {
    pub fn new(prox_g: Arc<dyn ProxFn>, prox_fstar: Arc<dyn ProxFn>, pair: MismatchPair) -> Result<Self> {
        for (name, f, dim) in [
            ("prox of G", &prox_g, pair.primal_dim()),
            ("prox of F*", &prox_fstar, pair.dual_dim()),
        ] {
            if let Some(d) = f.dim() {
                if d != dim {
                    return Err(Error::DimensionMismatch {
                        context: name.to_string(),
                        expected: dim,
                        found: d,
                    });
                }
            }
        }
        Ok(SaddleProblem {
            prox_g,
            prox_fstar,
            pair,
        })
    }

    pub fn primal_dim(&self) -> usize {
        self.pair.primal_dim()
    }

    pub fn dual_dim(&self) -> usize {
        self.pair.dual_dim()
    }

    /// Strong-convexity modulus of `G`.
    pub fn gamma_g(&self) -> f64 {
        self.prox_g.strong_convexity()
    }

    /// Strong-convexity modulus of `F*`.
    pub fn gamma_f(&self) -> f64 {
        self.prox_fstar.strong_convexity()
    }

    /// The same problem with `V` replaced by `A`.
    pub fn matched(&self) -> SaddleProblem {
        SaddleProblem {
            prox_g: self.prox_g.clone(),
            prox_fstar: self.prox_fstar.clone(),
            pair: MismatchPair::matched(self.pair.forward().clone()),
        }
    }
}

/// Iterates of one run. For Douglas-Rachford steppers `(p, q)` is the
/// governing sequence, `(x, y)` its prox images and `(v, w)` the inner-system
/// solution. The Chambolle-Pock stepper keeps `(p, q) = (x, y)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SolverState {
    pub x: Vector,
    pub y: Vector,
    pub v: Vector,
    pub w: Vector,
    pub p: Vector,
    pub q: Vector,
    pub k: usize,
}

impl SolverState {
    pub fn zeros(n: usize, m: usize) -> Self {
        Self::from_pq(Vector::zeros(n), Vector::zeros(m))
    }

    /// Starts from the given governing pair, with every other iterate equal to it.
    pub fn from_pq(p: Vector, q: Vector) -> Self {
        SolverState {
            x: p.clone(),
            y: q.clone(),
            v: p.clone(),
            w: q.clone(),
            p,
            q,
            k: 0,
        }
    }

    /// Standard normal `(p, q)`.
    pub fn gaussian(n: usize, m: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = gaussian_vector(&mut rng, n);
        let q = gaussian_vector(&mut rng, m);
        Self::from_pq(p, q)
    }

    fn check_dims(&self, problem: &SaddleProblem) -> Result<()> {
        let (n, m) = (problem.primal_dim(), problem.dual_dim());
        for (name, len, want) in [
            ("state p", self.p.len(), n),
            ("state q", self.q.len(), m),
            ("state x", self.x.len(), n),
            ("state y", self.y.len(), m),
        ] {
            if len != want {
                return Err(Error::DimensionMismatch {
                    context: name.into(),
                    expected: want,
                    found: len,
                });
            }
        }
        Ok(())
    }
}

fn dr_step(
    problem: &SaddleProblem,
    state: &SolverState,
    tau: f64,
    theta: f64,
    mode: AdjointMode,
    shifts: Option<(f64, f64)>,
) -> Result<SolverState> {
    state.check_dims(problem)?;
    if !(tau > 0.0) {
        return Err(Error::StepBound(format!("tau must be positive, got {tau}")));
    }
    let (x, y, mu_g, mu_f) = match shifts {
        None => (
            problem.prox_g.prox(&state.p, tau),
            problem.prox_fstar.prox(&state.q, tau),
            0.0,
            0.0,
        ),
        Some((mu_g, mu_f)) => (
            prox_convex_shifted(&*problem.prox_g, mu_g, &state.p, tau)?,
            prox_convex_shifted(&*problem.prox_fstar, mu_f, &state.q, tau)?,
            mu_g,
            mu_f,
        ),
    };
    let rx = &x * 2.0 - &state.p;
    let ry = &y * 2.0 - &state.q;
    let fact = problem.pair.inner_factorization(mode, tau, mu_g, mu_f)?;
    let (v, w) = fact.solve(&problem.pair, mode, &rx, &ry, Some((&state.v, &state.w)))?;
    let p = &state.p + (&v - &x) * theta;
    let q = &state.q + (&w - &y) * theta;
    Ok(SolverState {
        x,
        y,
        v,
        w,
        p,
        q,
        k: state.k + 1,
    })
}

/// One PDDR step. `mode` selects `A^T` or `V*` in the inner system.
pub fn step_pddr(
    problem: &SaddleProblem,
    state: &SolverState,
    tau: f64,
    theta: f64,
    mode: AdjointMode,
) -> Result<SolverState> {
    dr_step(problem, state, tau, theta, mode, None)
}

/// One step of the adapted iteration: proxes of `G - (mu_G/2)||.||^2` and
/// `F* - (mu_F*/2)||.||^2`, and the inner system with diagonal blocks
/// `(1 + tau mu) I`. Requires `tau < min(1/mu_G, 1/mu_F*)`.
pub fn step_adapted_pddr(
    problem: &SaddleProblem,
    state: &SolverState,
    tau: f64,
    theta: f64,
    mu_g: f64,
    mu_f: f64,
) -> Result<SolverState> {
    dr_step(problem, state, tau, theta, AdjointMode::Mismatched, Some((mu_g, mu_f)))
}

/// One Chambolle-Pock step with the backward operator chosen by `mode`:
/// `x+ = prox_{tau G}(x - tau V* y)`, `xbar = x+ + theta (x+ - x)`,
/// `y+ = prox_{sigma F*}(y + sigma A xbar)`.
pub fn step_cp(
    problem: &SaddleProblem,
    state: &SolverState,
    tau_p: f64,
    sigma_d: f64,
    theta_cp: f64,
    mode: AdjointMode,
) -> Result<SolverState> {
    state.check_dims(problem)?;
    if !(tau_p > 0.0 && sigma_d > 0.0) {
        return Err(Error::StepBound(format!(
            "primal and dual step sizes must be positive, got {tau_p} and {sigma_d}"
        )));
    }
    let pair = &problem.pair;
    let x_new = problem
        .prox_g
        .prox(&(&state.x - pair.apply_backward(&state.y, mode) * tau_p), tau_p);
    let x_bar = &x_new + (&x_new - &state.x) * theta_cp;
    let y_new = problem
        .prox_fstar
        .prox(&(&state.y + pair.apply_forward(&x_bar) * sigma_d), sigma_d);
    Ok(SolverState {
        v: x_new.clone(),
        w: y_new.clone(),
        p: x_new.clone(),
        q: y_new.clone(),
        x: x_new,
        y: y_new,
        k: state.k + 1,
    })
}

/// Chambolle-Pock with `V*` in place of `A^T`.
pub fn step_cp_mismatched(
    problem: &SaddleProblem,
    state: &SolverState,
    tau_p: f64,
    sigma_d: f64,
    theta_cp: f64,
) -> Result<SolverState> {
    step_cp(problem, state, tau_p, sigma_d, theta_cp, AdjointMode::Mismatched)
}

/// State of the relaxed preconditioned proximal point iteration
/// `w+ = w + lambda (C* (M + A_alpha)^{-1} C w - w)`, stored in the reduced
/// space `X x Y`.
#[derive(Clone, Debug, PartialEq)]
pub struct LiftedState {
    pub w_x: Vector,
    pub w_y: Vector,
    pub alpha: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub k: usize,
}

impl LiftedState {
    /// Lifts the PDDR governing pair: `w = (1 + alpha) (p, q)`, `gamma = (1 + alpha) tau`.
    pub fn lift(p: &Vector, q: &Vector, alpha: f64, tau: f64, lambda: f64) -> Self {
        LiftedState {
            w_x: p * (1.0 + alpha),
            w_y: q * (1.0 + alpha),
            alpha,
            gamma: (1.0 + alpha) * tau,
            lambda,
            k: 0,
        }
    }

    /// `w / (1 + alpha)`, the PDDR governing pair.
    pub fn reduced(&self) -> (Vector, Vector) {
        let s = 1.0 + self.alpha;
        (&self.w_x / s, &self.w_y / s)
    }

    pub fn tau(&self) -> f64 {
        self.gamma / (1.0 + self.alpha)
    }
}

/// One lifted step. With `ubar = w` the three blocks of
/// `(M + A_alpha)^{-1} C w` are
/// `v1 = J_{tau A}(ubar / (1 + alpha))`, `v2 = ubar - 2 v1`,
/// `v3 = J_{tau B}(2 v1 - ubar / (1 + alpha))`, and `C*` sums them.
pub fn step_lifted_ppp(problem: &SaddleProblem, lifted: &LiftedState, tau: f64) -> Result<LiftedState> {
    let expected = lifted.tau();
    if (tau - expected).abs() > 1e-14 * expected.max(1.0) {
        return Err(Error::StepBound(format!(
            "lifted step needs tau = gamma / (1 + alpha) = {expected}, got {tau}"
        )));
    }
    if !(lifted.alpha > -1.0) {
        return Err(Error::StepBound(format!("alpha = {} must exceed -1", lifted.alpha)));
    }
    let s = 1.0 + lifted.alpha;
    let (ux, uy) = (&lifted.w_x, &lifted.w_y);
    let v1x = problem.prox_g.prox(&(ux / s), tau);
    let v1y = problem.prox_fstar.prox(&(uy / s), tau);
    let v2x = ux - &v1x * 2.0;
    let v2y = uy - &v1y * 2.0;
    let rx = &v1x * 2.0 - ux / s;
    let ry = &v1y * 2.0 - uy / s;
    let fact = problem
        .pair
        .inner_factorization(AdjointMode::Mismatched, tau, 0.0, 0.0)?;
    let (v3x, v3y) = fact.solve(&problem.pair, AdjointMode::Mismatched, &rx, &ry, None)?;
    let cx = v1x + v2x + v3x;
    let cy = v1y + v2y + v3y;
    Ok(LiftedState {
        w_x: ux + (cx - ux) * lifted.lambda,
        w_y: uy + (cy - uy) * lifted.lambda,
        k: lifted.k + 1,
        ..lifted.clone()
    })
}

/// A fully parameterized iteration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Stepper {
    Pddr {
        tau: f64,
        theta: f64,
        mode: AdjointMode,
    },
    AdaptedPddr {
        tau: f64,
        theta: f64,
        mu_g: f64,
        mu_f: f64,
    },
    ChambollePock {
        tau_p: f64,
        sigma_d: f64,
        theta_cp: f64,
        mode: AdjointMode,
    },
}

impl Stepper {
    pub fn step(&self, problem: &SaddleProblem, state: &SolverState) -> Result<SolverState> {
        match *self {
            Stepper::Pddr { tau, theta, mode } => step_pddr(problem, state, tau, theta, mode),
            Stepper::AdaptedPddr { tau, theta, mu_g, mu_f } => {
                step_adapted_pddr(problem, state, tau, theta, mu_g, mu_f)
            }
            Stepper::ChambollePock {
                tau_p,
                sigma_d,
                theta_cp,
                mode,
            } => step_cp(problem, state, tau_p, sigma_d, theta_cp, mode),
        }
    }

    /// Checks parameters before a run; soft conditions only log warnings.
    pub fn validate(&self, problem: &SaddleProblem) -> Result<()> {
        match *self {
            Stepper::Pddr { tau, theta, mode } => {
                positive("tau", tau)?;
                if theta == 0.0 || !theta.is_finite() {
                    return Err(Error::InvalidConfig(format!(
                        "theta must be finite and nonzero, got {theta}"
                    )));
                }
                if mode == AdjointMode::Matched && !(theta > 0.0 && theta < 2.0) {
                    return Err(Error::InvalidConfig(format!(
                        "matched PDDR needs theta in (0, 2), got {theta}"
                    )));
                }
            }
            Stepper::AdaptedPddr { tau, theta, mu_g, mu_f } => {
                positive("tau", tau)?;
                if theta == 0.0 || !theta.is_finite() {
                    return Err(Error::InvalidConfig(format!(
                        "theta must be finite and nonzero, got {theta}"
                    )));
                }
                if mu_g < 0.0 || mu_f < 0.0 {
                    return Err(Error::InvalidConfig("adapted shifts must be nonnegative".into()));
                }
                if tau * mu_g >= 1.0 || tau * mu_f >= 1.0 {
                    return Err(Error::StepBound(format!(
                        "adapted PDDR needs tau < min(1/mu_G, 1/mu_F*), got tau = {tau}, mu_G = {mu_g}, mu_F* = {mu_f}"
                    )));
                }
                let d = problem.pair.mismatch_norm();
                if mu_g * mu_f < 0.25 * d * d {
                    warn!(
                        "mu_G mu_F* = {} is below ||A - V||^2 / 4 = {}; the shifted splitting is not monotone",
                        mu_g * mu_f,
                        0.25 * d * d
                    );
                }
                if mu_g > problem.gamma_g() || mu_f > problem.gamma_f() {
                    warn!("adapted shifts exceed the declared strong convexity of G or F*");
                }
            }
            Stepper::ChambollePock { tau_p, sigma_d, .. } => {
                positive("tau_p", tau_p)?;
                positive("sigma_d", sigma_d)?;
            }
        }
        Ok(())
    }

    /// Scale turning the change of the governing pair into the fixed-point
    /// defect `||(v, w) - (x, y)||`.
    fn residual_scale(&self) -> f64 {
        match *self {
            Stepper::Pddr { theta, .. } | Stepper::AdaptedPddr { theta, .. } => 1.0 / theta.abs(),
            Stepper::ChambollePock { .. } => 1.0,
        }
    }
}

fn positive(name: &str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!(
            "{name} must be positive and finite, got {value}"
        )))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoppingRule {
    pub max_iters: usize,
    /// Stop once `||(p, q)^{k+1} - (p, q)^k|| / theta` drops to this value.
    pub fixed_point_tol: f64,
    /// Declare divergence once `||x^k||` exceeds this value.
    pub divergence_threshold: f64,
}

impl Default for StoppingRule {
    fn default() -> Self {
        StoppingRule {
            max_iters: 10_000,
            fixed_point_tol: 1e-10,
            divergence_threshold: 1e6,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Converged,
    Diverged,
    MaxIters,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: usize,
    pub dist_to_ref: Option<f64>,
    pub objective: Option<f64>,
    pub residual: Option<f64>,
    pub wall_time_ms: f64,
    /// `||x^k - x_secondary||`; kept in memory only, not part of the CSV row.
    #[serde(skip)]
    pub dist_to_secondary: Option<f64>,
}

/// Consumer of per-iteration trace records.
pub trait TraceSink {
    fn record(&mut self, record: &TraceRecord) -> Result<()>;
}

impl TraceSink for Vec<TraceRecord> {
    fn record(&mut self, record: &TraceRecord) -> Result<()> {
        self.push(*record);
        Ok(())
    }
}

/// Discards every record.
pub struct NullSink;

impl TraceSink for NullSink {
    fn record(&mut self, _record: &TraceRecord) -> Result<()> {
        Ok(())
    }
}

/// Writes records as CSV rows `iter,dist_to_ref,objective,residual,wall_time_ms`;
/// missing values are empty fields.
pub struct CsvTraceSink<W: Write> {
    writer: csv::Writer<W>,
}

impl<W: Write> CsvTraceSink<W> {
    pub fn new(inner: W) -> Result<Self> {
        let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(inner);
        writer.write_record(["iter", "dist_to_ref", "objective", "residual", "wall_time_ms"])?;
        Ok(CsvTraceSink { writer })
    }

    pub fn finish(mut self) -> Result<W> {
        self.writer.flush()?;
        self.writer
            .into_inner()
            .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
    }
}

impl<W: Write> TraceSink for CsvTraceSink<W> {
    fn record(&mut self, record: &TraceRecord) -> Result<()> {
        self.writer.serialize(record)?;
        Ok(())
    }
}

/// Optional quantities recorded along a run.
#[derive(Clone, Copy, Default)]
pub struct RunOptions<'a> {
    /// Reference point for `||x^k - x_ref||`.
    pub reference: Option<&'a Vector>,
    /// Second reference point, e.g. the true solution when `reference` is
    /// the mismatched fixed point.
    pub secondary: Option<&'a Vector>,
    /// Objective evaluated at `x^k`.
    pub objective: Option<&'a (dyn Fn(&Vector) -> f64 + Sync)>,
    /// Record every `record_every`-th iteration (0 or 1: all). The initial and
    /// final iterates are always recorded.
    pub record_every: usize,
}

#[derive(Clone, Debug)]
pub struct SolveOutcome {
    pub state: SolverState,
    pub status: Status,
    pub iterations: usize,
    pub final_residual: Option<f64>,
    pub elapsed_ms: f64,
}

/// Iterates `stepper` from `initial` until the fixed-point defect reaches
/// `stopping.fixed_point_tol`, `||x||` exceeds `stopping.divergence_threshold`
/// (or any iterate stops being finite), or `stopping.max_iters` steps are done.
pub fn run(
    problem: &SaddleProblem,
    stepper: &Stepper,
    initial: SolverState,
    stopping: &StoppingRule,
    options: RunOptions<'_>,
    sink: &mut dyn TraceSink,
) -> Result<SolveOutcome> {
    stepper.validate(problem)?;
    initial.check_dims(problem)?;
    let start = Instant::now();
    let every = options.record_every.max(1);
    let elapsed = || start.elapsed().as_secs_f64() * 1e3;
    let make_record = |state: &SolverState, residual: Option<f64>, ms: f64| TraceRecord {
        iter: state.k,
        dist_to_ref: options.reference.map(|r| (&state.x - r).norm()),
        objective: options.objective.map(|f| f(&state.x)),
        residual,
        wall_time_ms: ms,
        dist_to_secondary: options.secondary.map(|r| (&state.x - r).norm()),
    };
    let mut state = initial;
    let first_iter = state.k;
    sink.record(&make_record(&state, None, 0.0))?;
    let scale = stepper.residual_scale();
    let mut status = Status::MaxIters;
    let mut residual = None;
    let mut recorded_last = true;
    for _ in 0..stopping.max_iters {
        let next = stepper.step(problem, &state)?;
        let dp = &next.p - &state.p;
        let dq = &next.q - &state.q;
        let r = (dp.norm_squared() + dq.norm_squared()).sqrt() * scale;
        residual = Some(r);
        state = next;
        let finite = [&state.x, &state.y, &state.p, &state.q]
            .iter()
            .all(|v| v.iter().all(|e| e.is_finite()));
        if !finite || state.x.norm() > stopping.divergence_threshold {
            status = Status::Diverged;
        } else if r <= stopping.fixed_point_tol {
            status = Status::Converged;
        }
        recorded_last = false;
        if status != Status::MaxIters || (state.k - first_iter).is_multiple_of(every) {
            sink.record(&make_record(&state, residual, elapsed()))?;
            recorded_last = true;
        }
        if status != Status::MaxIters {
            break;
        }
    }
    if !recorded_last {
        sink.record(&make_record(&state, residual, elapsed()))?;
    }
    Ok(SolveOutcome {
        iterations: state.k - first_iter,
        state,
        status,
        final_residual: residual,
        elapsed_ms: elapsed(),
    })
}
