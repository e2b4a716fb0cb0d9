use randmil_core::diagnostics::ErrorReport;
use randmil_core::harness::{work_precision_study, ExperimentConfig, ProblemSpec, ReferenceKind};

fn cpu(report: &ErrorReport, scheme: &str) -> f64 {
    report.entry(scheme, 10).unwrap().cpu_seconds
}

// Timing checks share one test so they never compete for a core.
#[test]
fn per_step_costs() {
    let mut config = ExperimentConfig::new(ProblemSpec::paper_example(), 10, 10);
    config.reference = ReferenceKind::RandomizedMilstein;
    config.n_ref = 11;
    config.samples = 200;
    config.workers = 1;

    let small = work_precision_study(&config).unwrap();
    let em = cpu(&small, "euler-maruyama");
    let cm = cpu(&small, "classical-milstein");
    let rm = cpu(&small, "randomized-milstein");
    assert!(em > 0.0);
    assert!(em <= cm, "euler-maruyama {em} > classical {cm}");
    let ratio = rm / cm;
    assert!((1.5..=3.0).contains(&ratio), "ratio {ratio}");

    config.samples = 400;
    let large = work_precision_study(&config).unwrap();
    let total = |r: &ErrorReport| r.entries.iter().map(|e| e.cpu_seconds).sum::<f64>();
    let scaling = total(&large) / total(&small);
    assert!((1.7..=2.3).contains(&scaling), "scaling {scaling}");

    for (a, b) in small.entries.iter().zip(&large.entries) {
        assert_eq!(a.samples * 2, b.samples);
    }
}
