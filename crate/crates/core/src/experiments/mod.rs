//! Experiment drivers behind the command-line tool: the scalar divergence
//! counterexample, the random quadratic study and a small TV-regularized
//! tomography problem with a non-adjoint projector pair.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::analysis::FixedPointReport;
use crate::error::Result;
use crate::par::{self, Execution};
use crate::solvers::{run, RunOptions, SaddleProblem, SolverState, Status, Stepper, StoppingRule, TraceRecord};
use crate::stepsize::StepPlan;
use crate::Vector;

pub mod analyze;
pub mod counterexample;
pub mod phantom;
pub mod projector;
pub mod quadratic;
pub mod report;
pub mod tomo;

pub use counterexample::{run_counterexample, CounterexampleConfig};
pub use projector::{build_projector_pair, Geometry, ProjectorPair};
pub use quadratic::{run_quadratic, QuadraticConfig};
pub use report::{emit_report, write_pgm};
pub use tomo::{run_tomography, TomoConfig};

/// One solver run inside an experiment.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolverRun {
    pub solver: String,
    pub stepper: Stepper,
    pub status: Status,
    pub iterations: usize,
    pub final_residual: Option<f64>,
    pub elapsed_ms: f64,
    pub trace: Vec<TraceRecord>,
    /// `||x^k - x*||` at the recorded iterations, when a true solution is known.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dist_to_true: Vec<f64>,
    #[serde(skip)]
    pub x: Vec<f64>,
    #[serde(skip)]
    pub y: Vec<f64>,
}

/// Grayscale image, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub name: String,
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunReport {
    pub experiment: String,
    pub config: serde_json::Value,
    pub runs: Vec<SolverRun>,
    pub terminal_status: Status,
    pub step_plan: Option<StepPlan>,
    pub fixed_point_report: Option<FixedPointReport>,
    pub metrics: BTreeMap<String, f64>,
    pub flags: BTreeMap<String, bool>,
    pub artifact_paths: Vec<String>,
    #[serde(skip)]
    pub images: Vec<Image>,
}

impl RunReport {
    pub fn new(experiment: &str, config: serde_json::Value, terminal_status: Status) -> Self {
        RunReport {
            experiment: experiment.to_string(),
            config,
            runs: Vec::new(),
            terminal_status,
            step_plan: None,
            fixed_point_report: None,
            metrics: BTreeMap::new(),
            flags: BTreeMap::new(),
            artifact_paths: Vec::new(),
            images: Vec::new(),
        }
    }

    pub fn run(&self, solver: &str) -> Option<&SolverRun> {
        self.runs.iter().find(|r| r.solver == solver)
    }

    /// Diverged, or flagged as a certified escape.
    pub fn certified_divergence(&self) -> bool {
        self.terminal_status == Status::Diverged || self.flags.get("certified_divergence").copied().unwrap_or(false)
    }
}

/// A solver run to be executed by [`run_jobs`].
pub struct Job<'a> {
    pub solver: &'static str,
    pub problem: &'a SaddleProblem,
    pub stepper: Stepper,
    pub initial: SolverState,
    pub stopping: StoppingRule,
    pub reference: Option<&'a Vector>,
    pub secondary: Option<&'a Vector>,
    pub objective: Option<&'a (dyn Fn(&Vector) -> f64 + Sync)>,
    pub record_every: usize,
}

pub fn run_job(job: &Job<'_>) -> Result<SolverRun> {
    let mut trace: Vec<TraceRecord> = Vec::new();
    let options = RunOptions {
        reference: job.reference,
        secondary: job.secondary,
        objective: job.objective,
        record_every: job.record_every,
    };
    let out = run(
        job.problem,
        &job.stepper,
        job.initial.clone(),
        &job.stopping,
        options,
        &mut trace,
    )?;
    let dist_to_true = trace.iter().filter_map(|r| r.dist_to_secondary).collect();
    Ok(SolverRun {
        solver: job.solver.to_string(),
        stepper: job.stepper,
        status: out.status,
        iterations: out.iterations,
        final_residual: out.final_residual,
        elapsed_ms: out.elapsed_ms,
        trace,
        dist_to_true,
        x: out.state.x.as_slice().to_vec(),
        y: out.state.y.as_slice().to_vec(),
    })
}

/// Runs independent jobs, concurrently when `exec` allows; results keep the
/// job order.
pub fn run_jobs(jobs: &[Job<'_>], exec: Execution) -> Result<Vec<SolverRun>> {
    par::map_range(exec, jobs.len(), |i| run_job(&jobs[i]))
        .into_iter()
        .collect()
}

/// Least-squares slope of `ln values[k]` against `iters[k]`, returned as the
/// per-iteration ratio `exp(slope)`. Non-positive values are skipped.
pub fn geometric_ratio(iters: &[usize], values: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = iters
        .iter()
        .zip(values)
        .filter(|(_, v)| **v > 0.0 && v.is_finite())
        .map(|(k, v)| (*k as f64, v.ln()))
        .collect();
    linear_fit(&pts).map(|(slope, _)| slope.exp())
}

/// Ordinary least squares `y = slope x + b`, returning `(slope, r^2)`.
pub fn linear_fit(pts: &[(f64, f64)]) -> Option<(f64, f64)> {
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some((slope, r2))
}

/// Geometric ratio of `dist_to_ref` over the final half of a trace.
pub fn final_half_ratio(trace: &[TraceRecord]) -> Option<f64> {
    let half = &trace[trace.len() / 2..];
    let iters: Vec<usize> = half.iter().map(|r| r.iter).collect();
    let vals: Vec<f64> = half.iter().map(|r| r.dist_to_ref.unwrap_or(f64::NAN)).collect();
    geometric_ratio(&iters, &vals)
}

pub(crate) fn to_json<T: Serialize>(value: &T) -> serde_json::Value {
    serde_json::to_value(value).unwrap_or(serde_json::Value::Null)
}
