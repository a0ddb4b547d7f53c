//! File-driven entry points: step-size plans and fixed-point reports for
//! operators given as dense CSV files.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::analysis::{fixed_point_report, FixedPointReport, DEFAULT_PROBE_TAU};
use crate::error::{Error, Result};
use crate::operators::{read_dense_csv, DenseMap, LinearMap, MismatchPair};
use crate::proximal::{BoxIndicator, L1Norm, ProxFn, ScaledQuadratic, Zero};
use crate::solvers::SaddleProblem;
use crate::stepsize::{plan_for_pair, plan_for_scalars, StepPlan};
use crate::Vector;

/// Proximable function named in a config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProxSpec {
    Zero,
    /// `(alpha/2)||u||^2 + <u, shift>`.
    Quadratic {
        alpha: f64,
        #[serde(default)]
        shift: Option<Vec<f64>>,
    },
    L1,
    Box {
        radius: f64,
    },
}

impl ProxSpec {
    pub fn build(&self) -> Arc<dyn ProxFn> {
        match self {
            ProxSpec::Zero => Arc::new(Zero),
            ProxSpec::Quadratic { alpha, shift: None } => Arc::new(ScaledQuadratic::new(*alpha)),
            ProxSpec::Quadratic { alpha, shift: Some(s) } => {
                Arc::new(ScaledQuadratic::with_shift(*alpha, Vector::from_column_slice(s)))
            }
            ProxSpec::L1 => Arc::new(L1Norm),
            ProxSpec::Box { radius } => Arc::new(BoxIndicator { radius: *radius }),
        }
    }
}

/// Operators either as CSV files or as scalars `A = a`, `V* = v`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OperatorSpec {
    Files { forward: PathBuf, surrogate: PathBuf },
    Scalars { a: f64, v: f64 },
}

impl OperatorSpec {
    pub fn load(&self, base: &Path) -> Result<MismatchPair> {
        match self {
            OperatorSpec::Files { forward, surrogate } => {
                let a = read_dense_csv(base.join(forward))?;
                let v = read_dense_csv(base.join(surrogate))?;
                MismatchPair::new(Arc::new(DenseMap::new(a)), Arc::new(DenseMap::new(v)))
            }
            OperatorSpec::Scalars { a, v } => {
                let fwd: Arc<dyn LinearMap> = Arc::new(crate::operators::ScaledIdentity { dim: 1, scale: *a });
                let sur: Arc<dyn LinearMap> = Arc::new(crate::operators::ScaledIdentity { dim: 1, scale: *v });
                MismatchPair::with_mismatch_norm(fwd, sur, (a - v).abs())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepsizeConfig {
    pub gamma_g: f64,
    pub gamma_f: f64,
    pub theta: f64,
    pub operators: OperatorSpec,
}

pub fn run_stepsize(config: &StepsizeConfig, base: &Path) -> Result<StepPlan> {
    match &config.operators {
        OperatorSpec::Scalars { a, v } => plan_for_scalars(*a, *v, config.gamma_g, config.gamma_f, config.theta),
        files => {
            let pair = files.load(base)?;
            plan_for_pair(&pair, config.gamma_g, config.gamma_f, config.theta)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeConfig {
    pub operators: OperatorSpec,
    pub g: ProxSpec,
    pub fstar: ProxSpec,
    /// CSV with the candidate `(x, y)` stacked in one column.
    pub point: PathBuf,
    /// Optional CSV column with the true primal solution.
    #[serde(default)]
    pub x_true: Option<PathBuf>,
    #[serde(default)]
    pub probe_tau: Option<f64>,
}

fn read_column(path: &Path) -> Result<Vector> {
    let m = read_dense_csv(path)?;
    if m.ncols() != 1 {
        return Err(Error::InvalidConfig(format!(
            "{} must hold a single column, found {}",
            path.display(),
            m.ncols()
        )));
    }
    Ok(m.column(0).into_owned())
}

pub fn run_analyze(config: &AnalyzeConfig, base: &Path) -> Result<FixedPointReport> {
    let pair = config.operators.load(base)?;
    let problem = SaddleProblem::new(config.g.build(), config.fstar.build(), pair)?;
    let (n, m) = (problem.primal_dim(), problem.dual_dim());
    let point = read_column(&base.join(&config.point))?;
    if point.len() != n + m {
        return Err(Error::DimensionMismatch {
            context: "candidate point".into(),
            expected: n + m,
            found: point.len(),
        });
    }
    let x = point.rows(0, n).into_owned();
    let y = point.rows(n, m).into_owned();
    let x_true = config.x_true.as_ref().map(|p| read_column(&base.join(p))).transpose()?;
    fixed_point_report(
        &problem,
        &x,
        &y,
        x_true.as_ref(),
        config.probe_tau.unwrap_or(DEFAULT_PROBE_TAU),
    )
}
