use mismatch_splitting::experiments::{
    emit_report, run_counterexample, run_quadratic, run_tomography, CounterexampleConfig, QuadraticConfig, TomoConfig,
};
use mismatch_splitting::solvers::Status;

/// Trace rows without the wall-clock column.
fn trace_rows(csv: &str) -> Vec<String> {
    csv.lines()
        .map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head).to_string())
        .collect()
}

#[test]
fn quadratic_reports_are_reproducible() {
    let cfg = QuadraticConfig {
        n: 60,
        m: 30,
        seed: 11,
        ..QuadraticConfig::default()
    };
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        emit_report(&run_quadratic(&cfg).unwrap(), d.path()).unwrap();
    }
    for solver in ["pddr_matched", "pddr_mismatched", "pddr_adapted", "cp"] {
        let name = format!("quadratic_{solver}.csv");
        let a = std::fs::read_to_string(dirs[0].path().join(&name)).unwrap();
        let b = std::fs::read_to_string(dirs[1].path().join(&name)).unwrap();
        assert_eq!(trace_rows(&a), trace_rows(&b), "{name}");
    }
}

#[test]
fn quadratic_seed_changes_the_instance() {
    let base = QuadraticConfig {
        n: 40,
        m: 20,
        ..QuadraticConfig::default()
    };
    let a = run_quadratic(&base).unwrap();
    let b = run_quadratic(&QuadraticConfig { seed: 1, ..base }).unwrap();
    assert_ne!(a.run("pddr_mismatched").unwrap().x, b.run("pddr_mismatched").unwrap().x);
}

#[test]
fn counterexample_norm_grows_and_matched_variant_settles() {
    let escape = run_counterexample(&CounterexampleConfig {
        max_iters: 3000,
        ..CounterexampleConfig::default()
    })
    .unwrap();
    assert!(escape.certified_divergence());
    assert!(escape.metrics["growth_per_iteration"] > 0.0);
    let trace = &escape.runs[0].trace;
    let norms: Vec<f64> = trace.iter().filter_map(|r| r.dist_to_ref).collect();
    assert!(norms[norms.len() - 1] > norms[norms.len() / 2]);

    let settled = run_counterexample(&CounterexampleConfig {
        matched: true,
        max_iters: 3000,
        ..CounterexampleConfig::default()
    })
    .unwrap();
    assert!(!settled.certified_divergence());
    assert!(settled.metrics["final_norm"] < 1e-3 * settled.metrics["initial_norm"]);
}

#[test]
fn noise_free_matched_tomography_fits_the_data() {
    let cfg = TomoConfig {
        image_size: 32,
        num_angles: 24,
        noise_rel: 0.0,
        lambda1: 0.01,
        lambda2: 0.01,
        disable_mismatch: true,
        solvers: Some(vec!["pddr_matched".into()]),
        max_iters: 3000,
        ..TomoConfig::default()
    };
    let report = run_tomography(&cfg).unwrap();
    let run = report.run("pddr_matched").unwrap();
    assert_eq!(run.status, Status::Converged);
    assert!(report.metrics["matched_data_fit_rel"] <= 0.05, "{:?}", report.metrics);
    assert_eq!(report.metrics["mismatch_norm"], 0.0);

    let objective: Vec<f64> = run.trace.iter().filter_map(|r| r.objective).collect();
    let quarter = objective.len() / 4;
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    assert!(mean(&objective[objective.len() - quarter..]) < mean(&objective[..quarter]));
    assert!(objective[objective.len() - 1] < 0.01 * objective[0]);
}
