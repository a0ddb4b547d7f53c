//! `G = 0`, `F = ||.||_1`, `A = I` and `V* = -alpha I`: the saddle point
//! `(0, 0)` exists, yet mismatched PDDR escapes to infinity.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::{AdjointMode, LinearMap, MismatchPair, ScaledIdentity};
use crate::par::Execution;
use crate::proximal::{BoxIndicator, Zero};
use crate::solvers::{SaddleProblem, SolverState, Stepper, StoppingRule};

use super::{linear_fit, run_jobs, to_json, Job, RunReport};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CounterexampleConfig {
    pub dim: usize,
    pub alpha_mm: f64,
    pub tau: f64,
    pub theta: f64,
    pub seed: u64,
    pub max_iters: usize,
    pub divergence_threshold: f64,
    /// Use `V* = A^T = I` instead of `-alpha I`.
    pub matched: bool,
}

impl Default for CounterexampleConfig {
    fn default() -> Self {
        CounterexampleConfig {
            dim: 10,
            alpha_mm: 0.01,
            tau: 0.1,
            theta: 1.0,
            seed: 0,
            max_iters: 10_000,
            divergence_threshold: 1e6,
            matched: false,
        }
    }
}

pub fn run_counterexample(config: &CounterexampleConfig) -> Result<RunReport> {
    if config.dim == 0 {
        return Err(Error::InvalidConfig("dimension must be positive".into()));
    }
    let d = config.dim;
    let forward: Arc<dyn LinearMap> = Arc::new(ScaledIdentity { dim: d, scale: 1.0 });
    let (pair, mode, solver) = if config.matched {
        (MismatchPair::matched(forward), AdjointMode::Matched, "pddr_matched")
    } else {
        let surrogate: Arc<dyn LinearMap> = Arc::new(ScaledIdentity {
            dim: d,
            scale: -config.alpha_mm,
        });
        let pair = MismatchPair::with_mismatch_norm(forward, surrogate, (1.0 + config.alpha_mm).abs())?;
        (pair, AdjointMode::Mismatched, "pddr_mismatched")
    };
    let problem = SaddleProblem::new(Arc::new(Zero), Arc::new(BoxIndicator { radius: 1.0 }), pair)?;
    let initial = SolverState::gaussian(d, d, config.seed);
    let x0_norm = initial.x.norm();
    let origin = crate::Vector::zeros(d);
    let job = Job {
        solver,
        problem: &problem,
        stepper: Stepper::Pddr {
            tau: config.tau,
            theta: config.theta,
            mode,
        },
        initial,
        stopping: StoppingRule {
            max_iters: config.max_iters,
            fixed_point_tol: 1e-10,
            divergence_threshold: config.divergence_threshold,
        },
        reference: Some(&origin),
        secondary: None,
        objective: None,
        record_every: 1,
    };
    let run = run_jobs(std::slice::from_ref(&job), Execution::Sequential)?.remove(0);

    let mut report = RunReport::new("counterexample", to_json(config), run.status);
    let norms: Vec<(f64, f64)> = run
        .trace
        .iter()
        .filter_map(|r| r.dist_to_ref.map(|v| (r.iter as f64, v)))
        .collect();
    let final_norm = norms.last().map_or(x0_norm, |p| p.1);
    let max_norm = norms.iter().map(|p| p.1).fold(x0_norm, f64::max);
    let tail = &norms[norms.len() / 2..];
    let (slope, r2) = linear_fit(tail).unwrap_or((0.0, 0.0));
    let monotone = tail.windows(2).all(|w| w[1].1 >= w[0].1);
    report.metrics.insert("initial_norm".into(), x0_norm);
    report.metrics.insert("final_norm".into(), final_norm);
    report.metrics.insert("max_norm".into(), max_norm);
    report.metrics.insert("growth_per_iteration".into(), slope);
    report.metrics.insert("growth_fit_r2".into(), r2);
    // Escape certificate: once the dual iterate saturates the update is affine
    // with linear part of spectrum {0, 1}, so steady monotone linear growth of
    // ||x|| over the second half continues without bound.
    let escaping = slope > 0.0 && r2 > 0.999 && monotone && final_norm > x0_norm;
    report.flags.insert("monotone_escape".into(), monotone && slope > 0.0);
    report.flags.insert("certified_divergence".into(), escaping);
    report.runs.push(run);
    Ok(report)
}
