use proptest::prelude::*;

use stabletrace::exit_sim::MCEstimate;
use stabletrace::experiments::{
    emit_report, fit_second_term, run_trace_experiment, ExperimentConfig, Report, ReportFormat, RunMode, TraceCurve,
};
use stabletrace::{Domain, StableParams};

fn est(mean: f64, se: f64) -> MCEstimate {
    MCEstimate { mean, std_error: se, n_samples: 1, seed: 0, bias_diagnostic: 0.0, bias_std_error: 0.0, systematic_bound: 0.0 }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn config_text_round_trips(
        alpha in 0.2f64..2.0,
        seed in any::<u64>(),
        t0 in 0.01f64..1.0,
        ratio in 0.1f64..0.9,
        n in 3usize..6,
        points in 2usize..5000,
        crosscheck in any::<bool>(),
    ) {
        let cfg = ExperimentConfig {
            alpha,
            seed,
            t_grid: (0..n).map(|i| t0 * ratio.powi(i as i32)).collect(),
            n_points: points,
            mode: if crosscheck { RunMode::Crosscheck } else { RunMode::Theorem },
            ..ExperimentConfig::default()
        };
        let back = ExperimentConfig::parse(&cfg.to_kv()).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn two_term_fit_recovers_planted_constants(
        alpha in 1.0f64..1.95,
        c2 in 0.01f64..0.2,
        b in -1.0f64..1.0,
    ) {
        let disk = Domain::ball(vec![0.0, 0.0], 1.0).unwrap();
        let params = StableParams::new(2, alpha).unwrap();
        let c1 = stabletrace::stable_kernel::c1_constant(params).value();
        let area = 2.0 * std::f64::consts::PI;
        let ts: [f64; 4] = [0.1, 0.05, 0.025, 0.0125];
        let rows: Vec<(f64, MCEstimate)> = ts
            .iter()
            .map(|&t| {
                let w = t.powf(1.0 / alpha);
                let z = c1 * std::f64::consts::PI / (w * w) - (c2 * area + b * w) / w;
                (t, est(z, 1e-9))
            })
            .collect();
        let curve = TraceCurve::from_estimates(&disk, params, c2, &rows).unwrap();
        let fit = fit_second_term(&curve, &disk).unwrap();
        prop_assert!((fit.c2_fit - c2).abs() < 1e-6 * c2.max(1.0));
        prop_assert!((fit.nuisance - b).abs() < 1e-5);
        for r in &curve.rows {
            prop_assert!((r.residual - (r.z_est - r.first_term + r.second_term).abs()).abs() < 1e-12 * r.first_term);
        }
    }
}

#[test]
fn crosscheck_run_is_reproducible_and_consistent() {
    let cfg = ExperimentConfig {
        domain: Domain::cuboid(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap(),
        alpha: 2.0,
        mode: RunMode::Crosscheck,
        t_grid: vec![0.1, 0.05, 0.025],
        n_points: 100,
        n_paths: 100,
        seed: 11,
        ..ExperimentConfig::default()
    };
    let a = run_trace_experiment(&cfg).unwrap();
    let b = run_trace_experiment(&cfg).unwrap();
    assert_eq!(a.curve.to_csv(&a.config_hash, a.seed), b.curve.to_csv(&b.config_hash, b.seed));
    for r in &a.curve.rows {
        assert!(r.z_est <= r.first_term + 3.0 * r.z_err);
    }

    let dir = tempfile::tempdir().unwrap();
    let report = Report::new(&cfg, &a, None).unwrap();
    let files = emit_report(&report, &[ReportFormat::Csv, ReportFormat::Json], dir.path()).unwrap();
    assert_eq!(files.len(), 2);
    let back = Report::from_json(&std::fs::read_to_string(&files[1]).unwrap()).unwrap();
    assert_eq!(back, report);
    let csv = std::fs::read_to_string(&files[0]).unwrap();
    assert!(csv.contains(&format!("config_hash={}", cfg.hash())));
}

#[test]
fn io_failures_surface() {
    let cfg = ExperimentConfig::default();
    assert!(matches!(ExperimentConfig::load(std::path::Path::new("/nonexistent/cfg.txt")), Err(stabletrace::Error::Io(_))));
    let file = tempfile::NamedTempFile::new().unwrap();
    let curve = TraceCurve::from_estimates(
        &cfg.domain,
        cfg.params().unwrap(),
        0.05,
        &[(0.1, est(5.0, 0.1)), (0.05, est(13.0, 0.1)), (0.02, est(40.0, 0.1))],
    )
    .unwrap();
    let run = stabletrace::experiments::TraceRun { config_hash: cfg.hash(), seed: 1, curve, c2: None, estimates: vec![] };
    let report = Report::new(&cfg, &run, None).unwrap();
    // a regular file cannot act as the output directory
    assert!(matches!(emit_report(&report, &[ReportFormat::Csv], file.path()), Err(stabletrace::Error::Io(_))));
}
