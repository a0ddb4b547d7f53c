//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use mismatch_splitting::analysis::{check_existence, error_bound, inclusion_residual, least_squares_residual};
use mismatch_splitting::experiments::projector::{build_projector_pair, Geometry};
use mismatch_splitting::experiments::quadratic::quadratic_data;
use mismatch_splitting::experiments::{
    emit_report, run_counterexample, run_quadratic, run_tomography, CounterexampleConfig, QuadraticConfig, TomoConfig,
};
use mismatch_splitting::operators::{
    gaussian_vector, AdjointMode, BlockSkewOperator, DenseMap, DifferenceMap, LinearMap, MismatchPair, ScaledIdentity,
    SparseMap, SparseMatrix,
};
use mismatch_splitting::proximal::{
    prox_convex_shifted, BlockSeparable, BoxIndicator, L1Norm, Linf2Ball, PlusQuadratic, ProxFn, ScaledQuadratic,
};
use mismatch_splitting::solvers::{
    run, step_lifted_ppp, step_pddr, LiftedState, NullSink, RunOptions, SaddleProblem, SolverState, Status, Stepper,
    StoppingRule,
};
use mismatch_splitting::stepsize::{plan_for_pair, plan_for_scalars, predicted_rate, ConvexityProfile};
use mismatch_splitting::{Matrix, Vector};

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);
type ConjProx<'a> = Box<dyn Fn(&Vector, f64) -> Vector + 'a>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(start: Instant, limit: Duration) -> Result<(), String> {
    let t = start.elapsed();
    ensure(t < limit, || format!("runtime {:.2?} exceeds {:.0?}", t, limit))
}

fn scalar(v: f64) -> Vector {
    Vector::from_vec(vec![v])
}

fn scalar_pair(a: f64, v: f64) -> MismatchPair {
    let fwd: Arc<dyn LinearMap> = Arc::new(ScaledIdentity { dim: 1, scale: a });
    let sur: Arc<dyn LinearMap> = Arc::new(ScaledIdentity { dim: 1, scale: v });
    MismatchPair::with_mismatch_norm(fwd, sur, (a - v).abs()).unwrap()
}

fn counterexample_divergence() -> Check {
    let start = Instant::now();
    let report = run_counterexample(&CounterexampleConfig::default()).map_err(|e| e.to_string())?;
    within(start, Duration::from_secs(5))?;
    let max_norm = report.metrics["max_norm"];
    ensure(max_norm > 1e6, || {
        format!(
            "max ||x^k|| = {max_norm:.4e} after {} iterations (needs > 1e6); linear growth {:.4e} per iteration",
            report.runs[0].iterations, report.metrics["growth_per_iteration"]
        )
    })?;
    Ok(format!("max ||x^k|| = {max_norm:.3e}"))
}

fn scalar_existence() -> Check {
    let start = Instant::now();
    // G = x^2/2, F* = y^2/2 + 3y, A = 1.
    let build = |v: f64| {
        SaddleProblem::new(
            Arc::new(ScaledQuadratic::new(1.0)),
            Arc::new(ScaledQuadratic::with_shift(1.0, scalar(3.0))),
            scalar_pair(1.0, v),
        )
        .unwrap()
    };
    let exists = check_existence(&ConvexityProfile::new(1.0, 1.0, 2.0).unwrap());
    ensure(!exists, || "existence reported for V* = -1".into())?;
    // x + v y = 0 and -x + y = -3.
    let m = Matrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]);
    let (_, ls) = least_squares_residual(&m, &Vector::from_vec(vec![0.0, -3.0])).map_err(|e| e.to_string())?;
    ensure(ls > 1.0, || {
        format!("least-squares residual {ls:e} does not certify inconsistency")
    })?;

    let problem = build(-0.5);
    let plan = plan_for_scalars(1.0, -0.5, 1.0, 1.0, 0.5).map_err(|e| e.to_string())?;
    let stepper = Stepper::Pddr {
        tau: plan.tau,
        theta: plan.theta,
        mode: AdjointMode::Mismatched,
    };
    let stopping = StoppingRule {
        max_iters: 100_000,
        fixed_point_tol: 1e-13,
        divergence_threshold: 1e6,
    };
    let out = run(
        &problem,
        &stepper,
        SolverState::zeros(1, 1),
        &stopping,
        RunOptions::default(),
        &mut NullSink,
    )
    .map_err(|e| e.to_string())?;
    let err = ((out.state.x[0] + 3.0).powi(2) + (out.state.y[0] + 6.0).powi(2)).sqrt();
    ensure(err <= 1e-8, || format!("PDDR ended {err:e} from (-3, -6)"))?;
    let matched = build(1.0);
    let r = inclusion_residual(&matched, &scalar(1.5), &scalar(-1.5), 1.0, AdjointMode::Matched);
    ensure(r <= 1e-12, || {
        format!("matched inclusion residual {r:e} at (3/2, -3/2)")
    })?;
    within(start, Duration::from_secs(1))?;
    Ok(format!(
        "lsq residual {ls:.6} (3/sqrt2 = {:.6}); fixed point error {err:.1e}; matched residual {r:.1e}",
        3.0 / 2f64.sqrt()
    ))
}

fn error_bound_sharpness() -> Check {
    // G = x^2/4, F* = |y|, A = 1, V* = 1/2. The true solution minimizes
    // x^2/4 over [-1, 1], so x* = 0; confirm with a matched solve.
    let problem = SaddleProblem::new(
        Arc::new(ScaledQuadratic::new(0.5)),
        Arc::new(L1Norm),
        scalar_pair(1.0, 0.5),
    )
    .unwrap();
    let out = run(
        &problem.matched(),
        &Stepper::Pddr {
            tau: 1.0,
            theta: 1.0,
            mode: AdjointMode::Matched,
        },
        SolverState::from_pq(scalar(0.8), scalar(-0.3)),
        &StoppingRule {
            max_iters: 10_000,
            fixed_point_tol: 1e-14,
            divergence_threshold: 1e6,
        },
        RunOptions::default(),
        &mut NullSink,
    )
    .map_err(|e| e.to_string())?;
    ensure(out.state.x[0].abs() < 1e-10, || {
        format!("matched solve gave x* = {:e}", out.state.x[0])
    })?;
    let x_star: f64 = 0.0;
    let mut worst: f64 = 0.0;
    for x_hat in [0.0, 1.0, -1.0] {
        let bound = error_bound(&problem, &scalar(-x_hat));
        let dist = (x_hat - x_star).abs();
        worst = worst.max((bound - dist).abs());
    }
    ensure(worst <= 1e-12, || format!("bound and distance differ by {worst:e}"))?;
    Ok(format!("max |bound - distance| = {worst:.1e} at x_hat in {{0, 1, -1}}"))
}

/// `x_hat` from the dense block system `[[alpha I, V^T], [-A, beta I]] (x, y) = (0, -z)`
/// and `x*` from `(alpha beta I + A^T A) x = A^T z`.
fn quadratic_oracles(a: &Matrix, v: &Matrix, alpha: f64, beta: f64, z: &Vector) -> (Vector, Vector, Vector) {
    let (m, n) = a.shape();
    let mut k = Matrix::zeros(n + m, n + m);
    k.view_mut((0, 0), (n, n)).fill_with_identity();
    k.view_mut((0, 0), (n, n)).scale_mut(alpha);
    k.view_mut((0, n), (n, m)).copy_from(&v.transpose());
    k.view_mut((n, 0), (m, n)).copy_from(&(-a));
    k.view_mut((n, n), (m, m)).fill_with_identity();
    k.view_mut((n, n), (m, m)).scale_mut(beta);
    let mut rhs = Vector::zeros(n + m);
    rhs.rows_mut(n, m).copy_from(&(-z));
    let sol = k.lu().solve(&rhs).expect("block system");
    let normal = Matrix::identity(n, n) * (alpha * beta) + a.transpose() * a;
    let x_star = normal.lu().solve(&a.tr_mul(z)).expect("normal equations");
    (sol.rows(0, n).into_owned(), sol.rows(n, m).into_owned(), x_star)
}

fn quadratic_study() -> Check {
    let start = Instant::now();
    let cfg = QuadraticConfig::default();
    let report = run_quadratic(&cfg).map_err(|e| e.to_string())?;
    within(start, Duration::from_secs(60))?;
    let plan = report.step_plan.as_ref().unwrap();
    ensure((0.15..=0.25).contains(&plan.tau), || {
        format!("tau = {} outside [0.15, 0.25]", plan.tau)
    })?;

    let (a, v, z) = quadratic_data(&cfg);
    let (x_hat, y_hat, x_star) = quadratic_oracles(&a, &v, cfg.alpha, cfg.beta, &z);
    let mm = report.run("pddr_mismatched").unwrap();
    ensure(mm.status == Status::Converged, || {
        format!("mismatched run status {:?}", mm.status)
    })?;
    let x = Vector::from_column_slice(&mm.x);
    let to_hat = (&x - &x_hat).norm();
    ensure(to_hat <= 1e-6, || format!("terminal distance to x_hat {to_hat:e}"))?;

    // Geometric fit over the final half of ||x^k - x_hat||, x_hat from the oracle.
    let half = &mm.trace[mm.trace.len() / 2..];
    let pts: Vec<(f64, f64)> = half
        .iter()
        .filter_map(|r| r.dist_to_ref.filter(|d| *d > 0.0).map(|d| (r.iter as f64, d.ln())))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let slope =
        pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    let ratio = slope.exp();
    let predicted = predicted_rate(plan);
    ensure(ratio <= predicted + 0.02, || {
        format!("empirical ratio {ratio} > predicted {predicted} + 0.02")
    })?;

    let problem_bound = {
        let diff = v.tr_mul(&y_hat) - a.tr_mul(&y_hat);
        diff.norm() / cfg.alpha
    };
    let to_star = (&x - &x_star).norm();
    ensure(to_star <= problem_bound + 1e-6, || {
        format!("||x^k - x*|| = {to_star} exceeds bound {problem_bound} + 1e-6")
    })?;
    Ok(format!(
        "tau = {:.4}, ||A - V|| = {:.4}, ratio {ratio:.4} <= {predicted:.6} + 0.02, ||x^k - x*|| = {to_star:.4} <= {problem_bound:.4}, {:.1?}",
        plan.tau,
        report.metrics["mismatch_norm"],
        start.elapsed()
    ))
}

fn adapted_vs_plain() -> Check {
    let report = run_quadratic(&QuadraticConfig::default()).map_err(|e| e.to_string())?;
    let x_mm = Vector::from_column_slice(&report.run("pddr_mismatched").unwrap().x);
    let ad = report.run("pddr_adapted").unwrap();
    ensure(ad.status == Status::Converged, || {
        format!("adapted run status {:?}", ad.status)
    })?;
    let rel = (Vector::from_column_slice(&ad.x) - &x_mm).norm() / x_mm.norm();
    ensure(rel <= 1e-6, || format!("relative difference {rel:e}"))?;
    Ok(format!("relative difference {rel:.2e}"))
}

fn lifted_equivalence() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut worst: f64 = 0.0;
    for instance in 0..10 {
        let n = rng.random_range(3..9);
        let m = rng.random_range(2..8);
        let a = Matrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
        let v = &a + Matrix::from_fn(m, n, |_, _| rng.random_range(-0.2..0.2));
        let pair = MismatchPair::new(Arc::new(DenseMap::new(a)), Arc::new(DenseMap::new(v))).unwrap();
        let tau = 0.5 / pair.mismatch_norm();
        let problem = SaddleProblem::new(
            Arc::new(ScaledQuadratic::new(rng.random_range(0.5..2.0))),
            Arc::new(ScaledQuadratic::with_shift(
                rng.random_range(0.5..2.0),
                gaussian_vector(&mut rng, m),
            )),
            pair,
        )
        .unwrap();
        let lambda = rng.random_range(0.3..1.9);
        for alpha in [0.0, 1.0, 3.0] {
            let theta = lambda / (1.0 + alpha);
            let mut direct = SolverState::gaussian(n, m, 1000 + instance);
            let mut lifted = LiftedState::lift(&direct.p, &direct.q, alpha, tau, lambda);
            for _ in 0..100 {
                direct =
                    step_pddr(&problem, &direct, tau, theta, AdjointMode::Mismatched).map_err(|e| e.to_string())?;
                lifted = step_lifted_ppp(&problem, &lifted, tau).map_err(|e| e.to_string())?;
                let (p, q) = lifted.reduced();
                let scale = 1.0 + (direct.p.norm_squared() + direct.q.norm_squared()).sqrt();
                let gap = ((&p - &direct.p).norm_squared() + (&q - &direct.q).norm_squared()).sqrt() / scale;
                worst = worst.max(gap);
            }
        }
    }
    ensure(worst <= 1e-10, || format!("trajectories differ by {worst:e}"))?;
    Ok(format!(
        "max relative trajectory gap {worst:.1e} over 10 instances x 3 alphas x 100 steps"
    ))
}

fn matched_mode_exactness() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let (n, m) = (30, 20);
    let a = Matrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0) / (n as f64).sqrt());
    let z = gaussian_vector(&mut rng, m);
    let (alpha, beta) = (0.3, 1.0);
    let pair = MismatchPair::new(Arc::new(DenseMap::new(a.clone())), Arc::new(DenseMap::new(a.clone()))).unwrap();
    ensure(pair.mismatch_norm() == 0.0, || {
        "identical operators report a mismatch".into()
    })?;
    let problem = SaddleProblem::new(
        Arc::new(ScaledQuadratic::new(alpha)),
        Arc::new(ScaledQuadratic::with_shift(beta, z.clone())),
        pair,
    )
    .unwrap();
    let (tau, theta) = (0.8, 1.0);
    let mut s_matched = SolverState::gaussian(n, m, 7);
    let mut s_mismatched = s_matched.clone();
    for k in 0..3000 {
        s_matched = step_pddr(&problem, &s_matched, tau, theta, AdjointMode::Matched).map_err(|e| e.to_string())?;
        s_mismatched =
            step_pddr(&problem, &s_mismatched, tau, theta, AdjointMode::Mismatched).map_err(|e| e.to_string())?;
        ensure(s_matched == s_mismatched, || format!("states differ at step {k}"))?;
    }
    let normal = Matrix::identity(n, n) * (alpha * beta) + a.transpose() * &a;
    let x_star = normal.lu().solve(&a.tr_mul(&z)).unwrap();
    let err = (&s_matched.x - &x_star).norm();
    ensure(err <= 1e-8, || {
        format!("converged point {err:e} from the normal-equation solution")
    })?;
    Ok(format!(
        "3000 bitwise-identical steps; distance to normal-equation solution {err:.1e}"
    ))
}

fn property_suites() -> Check {
    const CASES: usize = 100;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut lines = Vec::new();

    // Adjoint consistency of every shipped map.
    let mut worst_adj: f64 = 0.0;
    let projectors = build_projector_pair(&Geometry {
        image_size: 12,
        num_angles: 5,
        num_bins: Geometry::default_bins(12),
    })
    .unwrap();
    for case in 0..CASES {
        let (r, c) = (rng.random_range(1..12), rng.random_range(1..12));
        let dense = Matrix::from_fn(r, c, |_, _| rng.random_range(-2.0..2.0));
        let triplets: Vec<(usize, usize, f64)> = (0..r * c / 2 + 1)
            .map(|_| {
                (
                    rng.random_range(0..r),
                    rng.random_range(0..c),
                    rng.random_range(-1.0..1.0),
                )
            })
            .collect();
        let sparse = SparseMatrix::from_triplets(r, c, triplets);
        let other = Matrix::from_fn(r, c, |_, _| rng.random_range(-2.0..2.0));
        let pair = MismatchPair::new(
            Arc::new(DenseMap::new(dense.clone())),
            Arc::new(DenseMap::new(other.clone())),
        )
        .unwrap();
        let maps: Vec<Arc<dyn LinearMap>> = vec![
            Arc::new(DenseMap::new(dense.clone())),
            Arc::new(SparseMap::new(sparse)),
            Arc::new(ScaledIdentity {
                dim: c,
                scale: rng.random_range(-3.0..3.0),
            }),
            Arc::new(DifferenceMap::new(Arc::new(DenseMap::new(dense)), Arc::new(DenseMap::new(other))).unwrap()),
            Arc::new(BlockSkewOperator::new(
                pair,
                rng.random_range(0.0..2.0),
                rng.random_range(0.0..2.0),
            )),
            if case % 2 == 0 {
                projectors.forward.clone()
            } else {
                projectors.surrogate.clone()
            },
        ];
        for map in &maps {
            let x = gaussian_vector(&mut rng, map.domain_dim());
            let y = gaussian_vector(&mut rng, map.codomain_dim());
            let lhs = map.apply(&x).dot(&y);
            let rhs = x.dot(&map.apply_adjoint(&y));
            let scale = map.apply(&x).norm() * y.norm() + x.norm() * map.apply_adjoint(&y).norm();
            if scale > 0.0 {
                worst_adj = worst_adj.max((lhs - rhs).abs() / scale);
            }
        }
    }
    ensure(worst_adj <= 1e-10, || {
        format!("adjoint consistency violated: {worst_adj:e}")
    })?;
    lines.push(format!("adjoint {worst_adj:.1e}"));

    // Firm nonexpansiveness and Moreau's identity.
    let mut worst_fne: f64 = 0.0;
    let mut worst_moreau: f64 = 0.0;
    for _ in 0..CASES {
        let dim = 2 * rng.random_range(1..8);
        let tau = rng.random_range(0.05..5.0);
        let shift = gaussian_vector(&mut rng, dim);
        let a_q = rng.random_range(0.1..3.0);
        let radius = rng.random_range(0.1..3.0);
        let fns: Vec<Arc<dyn ProxFn>> = vec![
            Arc::new(ScaledQuadratic::with_shift(a_q, shift.clone())),
            Arc::new(L1Norm),
            Arc::new(BoxIndicator { radius }),
            Arc::new(Linf2Ball::new(radius, dim / 2)),
            Arc::new(PlusQuadratic::new(Arc::new(L1Norm), a_q)),
            Arc::new(
                BlockSeparable::new(vec![
                    (Arc::new(L1Norm) as Arc<dyn ProxFn>, dim / 2),
                    (Arc::new(ScaledQuadratic::new(a_q)), dim - dim / 2),
                ])
                .unwrap(),
            ),
        ];
        let u = gaussian_vector(&mut rng, dim) * 3.0;
        let w = gaussian_vector(&mut rng, dim) * 3.0;
        for f in &fns {
            let (pu, pw) = (f.prox(&u, tau), f.prox(&w, tau));
            let d = &pu - &pw;
            worst_fne = worst_fne.max(d.norm_squared() - d.dot(&(&u - &w)));
        }
        // Conjugate pairs with independent proxes of the conjugate.
        // (a/2)||x||^2 + <x, s>  <->  ||u - s||^2 / (2a).
        let conj_quad = |v: &Vector, t: f64| (v + &shift * (t / a_q)) / (1.0 + t / a_q);
        // ||.||_1  <->  indicator of the unit box.
        let conj_l1 = |v: &Vector, _t: f64| v.map(|e| e.clamp(-1.0, 1.0));
        // Indicator of the radius-r pixelwise ball  <->  r * sum of pixel norms.
        let half = dim / 2;
        let conj_ball = |v: &Vector, t: f64| {
            let mut out = v.clone();
            for i in 0..half {
                let nrm = v[i].hypot(v[half + i]);
                let s = if nrm > t * radius { 1.0 - t * radius / nrm } else { 0.0 };
                out[i] *= s;
                out[half + i] *= s;
            }
            out
        };
        let checks: Vec<(Arc<dyn ProxFn>, ConjProx)> = vec![
            (
                Arc::new(ScaledQuadratic::with_shift(a_q, shift.clone())),
                Box::new(conj_quad),
            ),
            (Arc::new(L1Norm), Box::new(conj_l1)),
            (Arc::new(Linf2Ball::new(radius, half)), Box::new(conj_ball)),
        ];
        for (f, conj) in &checks {
            // prox_{tau f}(u) + tau prox_{f*/tau}(u / tau) = u.
            let lhs = f.prox(&u, tau) + conj(&(&u / tau), 1.0 / tau) * tau;
            worst_moreau = worst_moreau.max((lhs - &u).norm() / (1.0 + u.norm()));
        }
    }
    ensure(worst_fne <= 1e-9, || {
        format!("firm nonexpansiveness violated by {worst_fne:e}")
    })?;
    ensure(worst_moreau <= 1e-12, || {
        format!("Moreau identity off by {worst_moreau:e}")
    })?;
    lines.push(format!("fne slack {worst_fne:.1e}"));
    lines.push(format!("moreau {worst_moreau:.1e}"));

    // prox of lambda (f - mu/2 ||.||^2) against closed forms for
    // f = (a/2)||x||^2 and f = ||x||_1 + (a/2)||x||^2.
    let mut worst_rescale: f64 = 0.0;
    for _ in 0..CASES {
        let dim = rng.random_range(1..10);
        let a_q = rng.random_range(0.5..3.0);
        let mu = rng.random_range(0.0..a_q);
        let mu: f64 = mu;
        let lambda = (rng.random_range(0.01..0.99) / mu).min(5.0);
        let p = gaussian_vector(&mut rng, dim) * 2.0;
        let quad = ScaledQuadratic::new(a_q);
        let got = prox_convex_shifted(&quad, mu, &p, lambda).map_err(|e| e.to_string())?;
        let want = &p / (1.0 + lambda * (a_q - mu));
        worst_rescale = worst_rescale.max((got - want).norm());
        let l1q = PlusQuadratic::new(Arc::new(L1Norm), a_q);
        let got = prox_convex_shifted(&l1q, mu, &p, lambda).map_err(|e| e.to_string())?;
        let want = p.map(|e| e.signum() * (e.abs() - lambda).max(0.0)) / (1.0 + lambda * (a_q - mu));
        worst_rescale = worst_rescale.max((got - want).norm());
    }
    ensure(worst_rescale <= 1e-12, || {
        format!("prox rescaling off by {worst_rescale:e}")
    })?;
    lines.push(format!("rescaling {worst_rescale:.1e}"));

    // ||a+b+c||^2 - ||a+b-c||^2 = ||a+c||^2 + ||b+c||^2 - ||a-c||^2 - ||b-c||^2.
    let mut worst_par: f64 = 0.0;
    for _ in 0..CASES {
        let dim = rng.random_range(1..20);
        let a = gaussian_vector(&mut rng, dim);
        let b = gaussian_vector(&mut rng, dim);
        let c = gaussian_vector(&mut rng, dim);
        let lhs = (&a + &b + &c).norm_squared() - (&a + &b - &c).norm_squared();
        let rhs =
            (&a + &c).norm_squared() + (&b + &c).norm_squared() - (&a - &c).norm_squared() - (&b - &c).norm_squared();
        let scale = (&a + &b + &c).norm_squared() + (&a + &b - &c).norm_squared() + 1.0;
        worst_par = worst_par.max((lhs - rhs).abs() / scale);
    }
    ensure(worst_par <= 1e-12, || {
        format!("parallelogram identity off by {worst_par:e}")
    })?;
    lines.push(format!("parallelogram {worst_par:.1e}"));

    // Monotonicity conditions on alpha for plans emitted by the recipe.
    let mut plans = 0;
    let mut worst_alpha: f64 = 0.0;
    while plans < CASES {
        let (n, m) = (rng.random_range(1..6), rng.random_range(1..6));
        let gg: f64 = rng.random_range(0.1..3.0);
        let gf: f64 = rng.random_range(0.1..3.0);
        let a = Matrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
        let e = Matrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
        let e_norm = e.clone().svd(false, false).singular_values.max();
        let d_target = rng.random_range(0.0..0.99_f64) * 2.0 * (gg * gf).sqrt();
        let v = &a + e * (d_target / e_norm);
        let pair = MismatchPair::new(Arc::new(DenseMap::new(a)), Arc::new(DenseMap::new(v))).unwrap();
        if !ConvexityProfile::new(gg, gf, pair.mismatch_norm())
            .unwrap()
            .exists_unique()
        {
            continue;
        }
        let theta = rng.random_range(0.05..0.95);
        let plan = plan_for_pair(&pair, gg, gf, theta).map_err(|e| e.to_string())?;
        plans += 1;
        let mus = plan.mus();
        let gamma = plan.gamma();
        let lower = mus.alpha_lower_bound(gamma);
        let margins = mus.monotonicity_margins(plan.alpha, gamma);
        let tol = 1e-12 * plan.alpha.max(1.0);
        worst_alpha = worst_alpha
            .max(lower - plan.alpha)
            .max(-margins[0] / plan.alpha.powi(2))
            .max(-margins[1] / plan.alpha.powi(2));
        ensure(plan.alpha + tol >= lower, || {
            format!("alpha {} below {lower}", plan.alpha)
        })?;
        ensure(margins.iter().all(|m| *m >= -tol * plan.alpha), || {
            format!("negative margin {margins:?}")
        })?;
        ensure(
            plan.alpha > gamma * mus.mu_tilde_g && plan.alpha > gamma * mus.mu_tilde_f,
            || "alpha not above gamma mu~".into(),
        )?;
        ensure(plan.tau <= plan.tau_s, || "tau above tau_S".into())?;
        if plan.profile.mismatch_norm > 0.0 {
            ensure(plan.tau < 1.0 / plan.profile.mismatch_norm, || {
                "tau above 1/||A - V||".into()
            })?;
        }
        ensure(plan.alpha + tol >= plan.tau / (plan.c - plan.tau), || {
            "alpha below tau/(c - tau)".into()
        })?;
    }
    lines.push(format!("alpha conditions (worst {worst_alpha:.1e})"));
    Ok(format!("{CASES} cases each: {}", lines.join(", ")))
}

fn hash_images(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "pgm"))
        .map(|p| {
            let bytes = std::fs::read(&p).unwrap();
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                Sha256::digest(&bytes).to_vec(),
            )
        })
        .collect();
    out.sort();
    out
}

fn tomography() -> Check {
    let start = Instant::now();
    let cfg = TomoConfig {
        oracle_factor: 10,
        ..TomoConfig::default()
    };
    let report = run_tomography(&cfg).map_err(|e| e.to_string())?;
    let (lhs, rhs) = (report.metrics["existence_lhs"], report.metrics["existence_rhs"]);
    ensure(lhs > rhs, || format!("existence condition fails: {lhs} <= {rhs}"))?;
    let mm = report.run("pddr_mismatched").unwrap();
    let res = mm.final_residual.unwrap_or(f64::INFINITY);
    ensure(
        mm.status == Status::Converged && res < 1e-6 && mm.iterations <= 5000,
        || {
            format!(
                "mismatched run {:?} after {} iterations, residual {res:e}",
                mm.status, mm.iterations
            )
        },
    )?;
    let bound = report.metrics["error_bound"];
    let to_matched = report.metrics["dist_to_matched_oracle"];
    let to_mismatched = report.metrics["dist_to_mismatched_oracle"];
    ensure(to_matched <= bound + 1e-3, || {
        format!("{to_matched} from matched oracle, bound {bound}")
    })?;
    ensure(to_mismatched <= bound + 1e-3, || {
        format!("{to_mismatched} from mismatched oracle, bound {bound}")
    })?;

    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    emit_report(&report, d1.path()).map_err(|e| e.to_string())?;
    let rerun = run_tomography(&TomoConfig::default()).map_err(|e| e.to_string())?;
    emit_report(&rerun, d2.path()).map_err(|e| e.to_string())?;
    let (h1, h2) = (hash_images(d1.path()), hash_images(d2.path()));
    ensure(!h1.is_empty() && h1 == h2, || {
        "emitted images differ between runs with the same seed".into()
    })?;
    within(start, Duration::from_secs(300))?;
    Ok(format!(
        "||A - V|| = {:.4}, {} iterations, residual {res:.2e}, distance to oracles {to_matched:.3e} / {to_mismatched:.1e} <= bound {bound:.3e}, {} images stable, {:.1?}",
        report.metrics["mismatch_norm"],
        mm.iterations,
        h1.len(),
        start.elapsed()
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("counterexample divergence", counterexample_divergence),
        ("scalar existence example", scalar_existence),
        ("error-bound sharpness", error_bound_sharpness),
        ("quadratic study", quadratic_study),
        ("adapted vs plain agreement", adapted_vs_plain),
        ("lifted PPP / PDDR equivalence", lifted_equivalence),
        ("matched-mode exactness", matched_mode_exactness),
        ("property suites", property_suites),
        ("tomography desk scale", tomography),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    let mut ran = 0;
    for (name, f) in criteria {
        if !filter.is_empty() && !filter.iter().any(|p| name.contains(p.as_str())) {
            continue;
        }
        ran += 1;
        let outcome = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", ran - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
