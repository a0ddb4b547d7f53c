//! Random quadratic problem `G = (alpha/2)||x||^2`,
//! `F* = (beta/2)||y||^2 + <y, z>` with `V = A + E`, `||E|| = mismatch_eta`.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::{error_bound, fixed_point_report, quadratic_reference};
use crate::error::{Error, Result};
use crate::operators::{gaussian_vector, AdjointMode, DenseMap, LinearMap, MismatchPair};
use crate::par::Execution;
use crate::proximal::ScaledQuadratic;
use crate::solvers::{SaddleProblem, SolverState, Stepper, StoppingRule};
use crate::stepsize::{plan_for_pair, predicted_rate};
use crate::{Matrix, Vector};

use super::{final_half_ratio, run_jobs, to_json, Job, RunReport};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadraticConfig {
    pub n: usize,
    pub m: usize,
    pub alpha: f64,
    pub beta: f64,
    pub mismatch_eta: f64,
    pub theta: f64,
    pub seed: u64,
    pub max_iters: usize,
    pub tol: f64,
    pub record_every: usize,
}

impl Default for QuadraticConfig {
    fn default() -> Self {
        QuadraticConfig {
            n: 400,
            m: 200,
            alpha: 0.15,
            beta: 1.0,
            mismatch_eta: 0.15,
            theta: 0.5,
            seed: 0,
            max_iters: 20_000,
            tol: 1e-10,
            record_every: 1,
        }
    }
}

impl QuadraticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m == 0 {
            return Err(Error::InvalidConfig("n and m must be positive".into()));
        }
        if !(self.alpha > 0.0 && self.beta > 0.0) {
            return Err(Error::InvalidConfig("alpha and beta must be positive".into()));
        }
        if !(self.mismatch_eta >= 0.0) {
            return Err(Error::InvalidConfig("mismatch_eta must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Seeded problem data `(A, V, z)`: Gaussian `A / sqrt(n)`, Gaussian `E`
/// rescaled to spectral norm `mismatch_eta`, Gaussian `z`.
pub fn quadratic_data(config: &QuadraticConfig) -> (Matrix, Matrix, Vector) {
    let (n, m) = (config.n, config.m);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let scale = 1.0 / (n as f64).sqrt();
    let a = Matrix::from_vec(m, n, gaussian_vector(&mut rng, m * n).as_slice().to_vec()) * scale;
    let e = Matrix::from_vec(m, n, gaussian_vector(&mut rng, m * n).as_slice().to_vec());
    let z = gaussian_vector(&mut rng, m);
    let v = if config.mismatch_eta == 0.0 {
        a.clone()
    } else {
        let e_norm = e.singular_values().max();
        &a + e * (config.mismatch_eta / e_norm)
    };
    (a, v, z)
}

pub fn run_quadratic(config: &QuadraticConfig) -> Result<RunReport> {
    run_quadratic_with(config, Execution::default())
}

pub fn run_quadratic_with(config: &QuadraticConfig, exec: Execution) -> Result<RunReport> {
    config.validate()?;
    let (a, v, z) = quadratic_data(config);
    let measured = (&v - &a).singular_values().max();
    let forward: Arc<dyn LinearMap> = Arc::new(DenseMap::new(a.clone()));
    let pair = if config.mismatch_eta == 0.0 {
        MismatchPair::matched(forward)
    } else {
        MismatchPair::with_mismatch_norm(forward, Arc::new(DenseMap::new(v.clone())), measured)?
    };
    let problem = SaddleProblem::new(
        Arc::new(ScaledQuadratic::new(config.alpha)),
        Arc::new(ScaledQuadratic::with_shift(config.beta, z.clone())),
        pair,
    )?;
    let plan = plan_for_pair(&problem.pair, config.alpha, config.beta, config.theta).map_err(|e| {
        Error::InvalidConfig(format!(
            "no step-size certificate for ||A - V|| = {measured:.4e} ({e}); try a smaller mismatch_eta"
        ))
    })?;
    let reference = quadratic_reference(&a, &v, config.alpha, config.beta, &z)?;
    let matched = problem.matched();
    let objective = |x: &Vector| -> f64 {
        0.5 * config.alpha * x.norm_squared() + (&a * x - &z).norm_squared() / (2.0 * config.beta)
    };
    let stopping = StoppingRule {
        max_iters: config.max_iters,
        fixed_point_tol: config.tol,
        divergence_threshold: 1e12,
    };
    let initial = SolverState::gaussian(config.n, config.m, config.seed.wrapping_add(1));
    let (norm_a, norm_v) = (a.singular_values().max(), v.singular_values().max());
    let cp_step = 0.95 / (norm_a * norm_v).sqrt();
    let jobs = vec![
        Job {
            solver: "pddr_matched",
            problem: &matched,
            stepper: Stepper::Pddr {
                tau: plan.tau,
                theta: plan.theta,
                mode: AdjointMode::Matched,
            },
            initial: initial.clone(),
            stopping,
            reference: Some(&reference.x_star),
            secondary: Some(&reference.x_star),
            objective: Some(&objective),
            record_every: config.record_every,
        },
        Job {
            solver: "pddr_mismatched",
            problem: &problem,
            stepper: Stepper::Pddr {
                tau: plan.tau,
                theta: plan.theta,
                mode: AdjointMode::Mismatched,
            },
            initial: initial.clone(),
            stopping,
            reference: Some(&reference.x_hat),
            secondary: Some(&reference.x_star),
            objective: Some(&objective),
            record_every: config.record_every,
        },
        Job {
            solver: "pddr_adapted",
            problem: &problem,
            stepper: Stepper::AdaptedPddr {
                tau: plan.tau,
                theta: plan.theta,
                mu_g: plan.mu_g,
                mu_f: plan.mu_f,
            },
            initial: initial.clone(),
            stopping,
            reference: Some(&reference.x_hat),
            secondary: Some(&reference.x_star),
            objective: Some(&objective),
            record_every: config.record_every,
        },
        Job {
            solver: "cp",
            problem: &problem,
            stepper: Stepper::ChambollePock {
                tau_p: cp_step,
                sigma_d: cp_step,
                theta_cp: 1.0,
                mode: AdjointMode::Mismatched,
            },
            initial: initial.clone(),
            stopping,
            reference: Some(&reference.x_hat),
            secondary: Some(&reference.x_star),
            objective: Some(&objective),
            record_every: config.record_every,
        },
    ];
    let runs = run_jobs(&jobs, exec)?;

    let mm = &runs[1];
    let mut report = RunReport::new("quadratic", to_json(config), mm.status);
    let bound = error_bound(&problem, &reference.y_hat);
    let x_mm = Vector::from_column_slice(&mm.x);
    let x_ad = Vector::from_column_slice(&runs[2].x);
    let metrics = [
        ("mismatch_norm", measured),
        ("tau", plan.tau),
        ("predicted_rate", predicted_rate(&plan)),
        ("error_bound", bound),
        ("dist_x_hat_x_star", (&reference.x_hat - &reference.x_star).norm()),
        ("terminal_dist_to_x_hat", (&x_mm - &reference.x_hat).norm()),
        ("terminal_dist_to_x_star", (&x_mm - &reference.x_star).norm()),
        ("empirical_ratio", final_half_ratio(&mm.trace).unwrap_or(f64::NAN)),
        (
            "adapted_vs_plain_rel",
            (&x_ad - &x_mm).norm() / x_mm.norm().max(f64::MIN_POSITIVE),
        ),
        ("cp_step", cp_step),
    ];
    for (k, val) in metrics {
        report.metrics.insert(k.into(), val);
    }
    report.fixed_point_report = Some(fixed_point_report(
        &problem,
        &reference.x_hat,
        &reference.y_hat,
        Some(&reference.x_star),
        crate::analysis::DEFAULT_PROBE_TAU,
    )?);
    report.step_plan = Some(plan);
    report.runs = runs;
    Ok(report)
}
