//! TV-regularized parallel-beam reconstruction
//! `min (lambda0/2)||Rx - z||^2 + lambda1 TV_eps(x) + (lambda2/2)||x||^2`
//! with `A = [R; grad]` and the pixel-driven projector as mismatched backprojector.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::{error_bound, fixed_point_report};
use crate::error::{Error, Result};
use crate::operators::{estimate_operator_norm_with, gaussian_vector, AdjointMode, PowerIterationOptions};
use crate::par::Execution;
use crate::proximal::{BlockSeparable, Linf2Ball, PlusQuadratic, ProxFn, ScaledQuadratic};
use crate::solvers::{SaddleProblem, SolverState, Stepper, StoppingRule};
use crate::stepsize::plan_for_pair_with;
use crate::Vector;

use super::phantom::shepp_logan;
use super::projector::{build_projector_pair_with, Geometry};
use super::{run_jobs, to_json, Image, Job, RunReport, SolverRun};

/// Relative tolerance of the norm estimates; the gradient block has tightly
/// clustered top singular values.
pub const NORM_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TomoConfig {
    pub image_size: usize,
    pub num_angles: usize,
    /// Defaults to enough bins for the image diagonal.
    pub num_bins: Option<usize>,
    pub noise_rel: f64,
    pub lambda0: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub epsilon: f64,
    pub theta: f64,
    pub seed: u64,
    pub max_iters: usize,
    pub tol: f64,
    /// Use the ray-driven adjoint as backprojector everywhere.
    pub disable_mismatch: bool,
    /// When positive, also run matched and mismatched PDDR for
    /// `oracle_factor * max_iters` iterations as reference solutions.
    pub oracle_factor: usize,
    pub record_every: usize,
    /// Subset of `pddr_matched`, `pddr_mismatched`, `pddr_adapted`, `cp`;
    /// all when absent.
    pub solvers: Option<Vec<String>>,
}

impl Default for TomoConfig {
    fn default() -> Self {
        TomoConfig {
            image_size: 64,
            num_angles: 10,
            num_bins: None,
            noise_rel: 0.15,
            lambda0: 10.0,
            lambda1: 6.0,
            lambda2: 2.0,
            epsilon: 0.1,
            theta: 0.5,
            seed: 0,
            max_iters: 5000,
            tol: 1e-6,
            disable_mismatch: false,
            oracle_factor: 0,
            record_every: 1,
            solvers: None,
        }
    }
}

impl TomoConfig {
    /// 400 x 400 pixels, 40 angles, 400 bins.
    pub fn full_scale(self) -> Self {
        TomoConfig {
            image_size: 400,
            num_angles: 40,
            num_bins: Some(400),
            ..self
        }
    }

    pub fn geometry(&self) -> Geometry {
        Geometry {
            image_size: self.image_size,
            num_angles: self.num_angles,
            num_bins: self.num_bins.unwrap_or_else(|| Geometry::default_bins(self.image_size)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry().validate()?;
        if !(self.noise_rel >= 0.0) {
            return Err(Error::InvalidConfig("noise_rel must be nonnegative".into()));
        }
        for (name, v) in [
            ("lambda0", self.lambda0),
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("epsilon", self.epsilon),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Huber-smoothed isotropic TV: conjugate of the `lambda1` ball plus
/// `(eps/2)||.||^2`, summed over pixels of the two-block gradient field.
pub fn smoothed_tv(grad: &[f64], pixels: usize, lambda1: f64, epsilon: f64) -> f64 {
    (0..pixels)
        .map(|i| {
            let t = grad[i].hypot(grad[pixels + i]);
            if t <= lambda1 * epsilon {
                t * t / (2.0 * epsilon)
            } else {
                lambda1 * t - 0.5 * lambda1 * lambda1 * epsilon
            }
        })
        .sum()
}

/// Noisy sinogram `R x + noise_rel ||R x|| / sqrt(dim) g`.
pub fn noisy_sinogram(clean: &Vector, noise_rel: f64, seed: u64) -> Vector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = gaussian_vector(&mut rng, clean.len());
    clean + g * (noise_rel * clean.norm() / (clean.len() as f64).sqrt())
}

pub fn run_tomography(config: &TomoConfig) -> Result<RunReport> {
    run_tomography_with(config, Execution::default())
}

pub fn run_tomography_with(config: &TomoConfig, exec: Execution) -> Result<RunReport> {
    config.validate()?;
    let geometry = config.geometry();
    let norm_opts = PowerIterationOptions {
        tol: NORM_TOL,
        ..PowerIterationOptions::default()
    };
    let projectors = build_projector_pair_with(&geometry, exec)?;
    let pair = if config.disable_mismatch {
        projectors.matched_pair()
    } else {
        projectors.mismatch_pair(norm_opts)?
    };
    let d = pair.mismatch_norm();
    let np = geometry.num_pixels();
    let nr = geometry.num_rays();

    let phantom = shepp_logan(geometry.image_size);
    let clean = Vector::from_vec(projectors.ray_driven.mul_vec(phantom.as_slice(), exec));
    let z = noisy_sinogram(&clean, config.noise_rel, config.seed);

    let gamma_f = f64::min(1.0 / config.lambda0, config.epsilon);
    let lhs = config.lambda2 * gamma_f;
    if !(lhs > 0.25 * d * d) {
        return Err(Error::NoFixedPoint {
            product: lhs,
            threshold: 0.25 * d * d,
        });
    }
    let data: Arc<dyn ProxFn> = Arc::new(ScaledQuadratic::with_shift(1.0 / config.lambda0, z.clone()));
    let tv: Arc<dyn ProxFn> = Arc::new(PlusQuadratic::new(
        Arc::new(Linf2Ball::new(config.lambda1, np)),
        config.epsilon,
    ));
    let problem = SaddleProblem::new(
        Arc::new(ScaledQuadratic::new(config.lambda2)),
        Arc::new(BlockSeparable::new(vec![(data, nr), (tv, 2 * np)])?),
        pair,
    )?;
    let plan = plan_for_pair_with(&problem.pair, config.lambda2, gamma_f, config.theta, norm_opts)?;
    let matched = problem.matched();

    let ray = &projectors.ray_driven;
    let grad = &projectors.gradient;
    let objective = |x: &Vector| -> f64 {
        let rx = Vector::from_vec(ray.mul_vec(x.as_slice(), Execution::Sequential));
        let gx = grad.mul_vec(x.as_slice(), Execution::Sequential);
        0.5 * config.lambda0 * (rx - &z).norm_squared()
            + smoothed_tv(&gx, np, config.lambda1, config.epsilon)
            + 0.5 * config.lambda2 * x.norm_squared()
    };
    let stopping = StoppingRule {
        max_iters: config.max_iters,
        fixed_point_tol: config.tol,
        divergence_threshold: 1e12,
    };
    let initial = SolverState::zeros(np, problem.dual_dim());
    let norm_a = estimate_operator_norm_with(problem.pair.forward().as_ref(), norm_opts)?;
    let norm_v = estimate_operator_norm_with(problem.pair.surrogate().as_ref(), norm_opts)?;
    let cp_step = 0.95 / (norm_a * norm_v).sqrt();
    let pddr = |mode| Stepper::Pddr {
        tau: plan.tau,
        theta: plan.theta,
        mode,
    };
    let make = |solver, problem, stepper, stopping, record_every| Job {
        solver,
        problem,
        stepper,
        initial: initial.clone(),
        stopping,
        reference: Some(&phantom),
        secondary: None,
        objective: Some(&objective),
        record_every,
    };
    let mut jobs = vec![
        make(
            "pddr_matched",
            &matched,
            pddr(AdjointMode::Matched),
            stopping,
            config.record_every,
        ),
        make(
            "pddr_mismatched",
            &problem,
            pddr(AdjointMode::Mismatched),
            stopping,
            config.record_every,
        ),
        make(
            "pddr_adapted",
            &problem,
            Stepper::AdaptedPddr {
                tau: plan.tau,
                theta: plan.theta,
                mu_g: plan.mu_g,
                mu_f: plan.mu_f,
            },
            stopping,
            config.record_every,
        ),
        make(
            "cp",
            &problem,
            Stepper::ChambollePock {
                tau_p: cp_step,
                sigma_d: cp_step,
                theta_cp: 1.0,
                mode: AdjointMode::Mismatched,
            },
            stopping,
            config.record_every,
        ),
    ];
    if let Some(selected) = &config.solvers {
        if let Some(bad) = selected.iter().find(|s| !jobs.iter().any(|j| j.solver == s.as_str())) {
            return Err(Error::InvalidConfig(format!("unknown solver {bad:?}")));
        }
        jobs.retain(|j| selected.iter().any(|s| s == j.solver));
        if jobs.is_empty() {
            return Err(Error::InvalidConfig("no solver selected".into()));
        }
    }
    if config.oracle_factor > 0 {
        let long = StoppingRule {
            max_iters: config.max_iters * config.oracle_factor,
            fixed_point_tol: config.tol * 1e-3,
            ..stopping
        };
        let every = config.record_every.max(1) * config.oracle_factor;
        jobs.push(make(
            "oracle_matched",
            &matched,
            pddr(AdjointMode::Matched),
            long,
            every,
        ));
        jobs.push(make(
            "oracle_mismatched",
            &problem,
            pddr(AdjointMode::Mismatched),
            long,
            every,
        ));
    }
    let runs = run_jobs(&jobs, exec)?;

    let find = |name: &str| runs.iter().find(|r| r.solver == name);
    let vec_of = |r: &SolverRun| Vector::from_column_slice(&r.x);
    // Primary run: mismatched PDDR unless deselected.
    let mm = find("pddr_mismatched").unwrap_or(&runs[0]);
    let x_mm = vec_of(mm);
    let y_mm = Vector::from_column_slice(&mm.y);
    let x_matched = find("pddr_matched").map(vec_of).unwrap_or_else(|| x_mm.clone());
    let truth = find("oracle_matched").map(vec_of).unwrap_or_else(|| x_matched.clone());

    let mut report = RunReport::new("tomo", to_json(config), mm.status);
    let bound = error_bound(&problem, &y_mm);
    let data_fit =
        |x: &Vector| (Vector::from_vec(ray.mul_vec(x.as_slice(), exec)) - &z).norm() / z.norm().max(f64::MIN_POSITIVE);
    let mut metrics = vec![
        ("mismatch_norm", d),
        ("existence_lhs", lhs),
        ("existence_rhs", 0.25 * d * d),
        ("tau", plan.tau),
        ("cp_step", cp_step),
        ("error_bound", bound),
        ("matched_data_fit_rel", data_fit(&x_matched)),
        ("mismatched_data_fit_rel", data_fit(&x_mm)),
        ("mismatched_vs_matched", (&x_mm - &x_matched).norm()),
        ("mismatched_final_residual", mm.final_residual.unwrap_or(f64::NAN)),
    ];
    if let Some(o) = find("oracle_matched") {
        metrics.push(("dist_to_matched_oracle", (&x_mm - vec_of(o)).norm()));
    }
    if let Some(o) = find("oracle_mismatched") {
        metrics.push(("dist_to_mismatched_oracle", (&x_mm - vec_of(o)).norm()));
        let y_o = Vector::from_column_slice(&o.y);
        metrics.push(("oracle_error_bound", error_bound(&problem, &y_o)));
    }
    for (k, val) in metrics {
        report.metrics.insert(k.into(), val);
    }
    report.flags.insert("exists_unique".into(), true);
    report.fixed_point_report = Some(fixed_point_report(
        &problem,
        &x_mm,
        &y_mm,
        Some(&truth),
        crate::analysis::DEFAULT_PROBE_TAU,
    )?);
    report.step_plan = Some(plan);

    let size = geometry.image_size;
    let image = |name: String, pixels: Vec<f64>| Image {
        name,
        width: size,
        height: size,
        pixels,
    };
    report.images.push(image("phantom".into(), phantom.as_slice().to_vec()));
    // Reconstructions share the display scale of the matched one; the strong
    // ridge term shrinks intensities well below the phantom's.
    let peak = x_matched.iter().copied().fold(0.0, f64::max);
    let display = if peak > 0.0 { 1.0 / peak } else { 1.0 };
    report.metrics.insert("display_scale".into(), display);
    for run in runs.iter().filter(|r| !r.solver.starts_with("oracle")) {
        report
            .images
            .push(image(run.solver.clone(), run.x.iter().map(|v| v * display).collect()));
        if run.solver != "pddr_matched" {
            let diff: Vec<f64> = run.x.iter().zip(x_matched.iter()).map(|(a, b)| (a - b).abs()).collect();
            let peak = diff.iter().copied().fold(0.0, f64::max);
            let scaled = diff.iter().map(|v| if peak > 0.0 { v / peak } else { 0.0 }).collect();
            report.images.push(image(format!("{}_diff", run.solver), scaled));
        }
    }
    report.runs = runs;
    Ok(report)
}
