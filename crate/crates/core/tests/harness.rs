use std::fs;

use coupling_lab::bounds::Verdict;
use coupling_lab::harness::sweep::read_sweep_csv;
use coupling_lab::harness::{refit_csv, run_case, run_sweep, CaseConfig, OutputConfig, SweepConfig, CSV_HEADER};
use coupling_lab::LabError;

fn small(lambda: f64) -> CaseConfig {
    CaseConfig {
        cells: 32,
        lambda,
        t_end: 0.02,
        ..CaseConfig::default()
    }
}

#[test]
fn zero_coupling_is_not_applicable_and_conserves_mass() {
    let r = run_case(&small(0.0)).unwrap();
    assert_eq!(r.lemma_sup.verdict, Verdict::NotApplicable);
    assert_eq!(r.theorem.verdict, Verdict::NotApplicable);
    assert!(r.diagnostics.integral_drift < 1e-10);
    assert!(r.diagnostics.max_l2_increase <= 1e-12);
    assert_eq!(r.csv_row().split(',').count(), CSV_HEADER.split(',').count());
}

#[test]
fn repeated_cases_agree_bytewise() {
    let a = run_case(&small(1e3)).unwrap();
    let b = run_case(&small(1e3)).unwrap();
    assert_eq!(a.csv_row(), b.csv_row());
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    assert!(a.lemma_sup.holds() && a.lemma_spacetime.holds());
    assert_eq!(a.chain.len(), 2 * a.n_shells);
}

#[test]
fn invalid_case_reports_its_lambda() {
    let mut cfg = small(50.0);
    cfg.nu = 0.7;
    let err = run_case(&cfg).unwrap_err();
    assert!(matches!(err, LabError::Case { .. }), "{err}");
    assert!(err.to_string().contains("lambda = 5e1"), "{err}");
}

#[test]
fn sweep_outputs_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("sweep.csv");
    let json = dir.path().join("cases");
    let cfg = SweepConfig {
        lambdas: vec![1e2, 3e2, 1e3, 3e3],
        threads: Some(1),
        case: small(1.0),
        output: OutputConfig {
            csv: Some(csv.clone()),
            json_dir: Some(json.clone()),
        },
    };
    let report = run_sweep(&cfg).unwrap();
    let text = fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().next().unwrap(), CSV_HEADER);
    assert_eq!(text.lines().count(), 5);

    let rows = read_sweep_csv(&csv).unwrap();
    assert_eq!(rows.len(), 4);
    for (row, case) in rows.iter().zip(&report.cases) {
        assert_eq!(row.sup_l2v_sq, case.sup_l2v_sq);
    }
    let refit = refit_csv(&csv, None).unwrap();
    assert_eq!(refit.best, report.fit.as_ref().unwrap().best);

    let files = fs::read_dir(&json).unwrap().count();
    assert_eq!(files, 4);
    let detail: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(json.join("case_1e3.json")).unwrap()).unwrap();
    assert!(detail["chain"].as_array().unwrap().len() >= 2);
    assert!(detail["theorem"]["tier"].is_string());
}
