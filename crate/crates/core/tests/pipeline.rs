use std::fs;

use nlslab::pipeline::{emit_report, run_pipeline, ExperimentConfig, RunManifest, Stage};
use nlslab::Error;

#[test]
fn resonant_ring_runs_every_stage() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::bundled("double-well-resonant").unwrap();
    let run = run_pipeline(&cfg, Stage::Decompose, Some(dir.path())).unwrap();
    assert!(run.error.is_none(), "{:?}", run.error);
    let m = &run.manifest;
    assert_eq!(m.stages.len(), Stage::ALL.len());
    assert!(m.completed());
    assert!(m.lyapunov_c.is_some());

    let r = |stage: &str, key: &str| {
        m.residual(stage, key)
            .unwrap_or_else(|| panic!("{stage}.{key}"))
    };
    assert!(r("spectrum", "radiation_gap") > 0.0);
    assert!(r("modes", "projector_idempotency") < 1e-8);
    assert!(r("fgr", "gamma_ratio") >= 1e-4);
    assert!(r("normalform", "min_margin_over_floor") >= 1.0);
    assert!(r("normalform", "cancellation_max_discrepancy") < 1e-6);
    let slope = r("ode", "decay_slope");
    assert!((-0.6..=-0.4).contains(&slope), "{slope}");
    assert!(r("evolve", "ode_relative_deviation") < 0.2);
    assert!(r("evolve", "max_orthogonality_residual") < 1e-9);
    assert!(r("evolve", "mass_drift_rate") < 1e-10);
    assert!(r("decompose", "orthogonality_residual") < 1e-9);

    for f in [
        "spectrum.csv",
        "branch.csv",
        "modes.csv",
        "fgr.csv",
        "cancellation.csv",
        "coefficients.json",
        "ode.csv",
        "evolve.csv",
        "majorants.csv",
        "final_psi.nlsf",
        "manifest.json",
        "config.toml",
    ] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    let back = RunManifest::read(&dir.path().join("manifest.json")).unwrap();
    assert_eq!(&back, m);
    let echoed = ExperimentConfig::load(&dir.path().join("config.toml")).unwrap();
    assert_eq!(echoed.hash(), m.config_hash);
    emit_report(&back, dir.path()).unwrap();
    let csv = fs::read_to_string(dir.path().join("report.csv")).unwrap();
    let listed = csv.lines().count() - 1;
    assert_eq!(
        listed,
        m.stages.iter().map(|s| s.residuals.len()).sum::<usize>()
    );
}

#[test]
fn radiation_condition_failure_stops_at_spectrum() {
    let cfg = ExperimentConfig::bundled("single-deep-well").unwrap();
    let run = run_pipeline(&cfg, Stage::Decompose, None).unwrap();
    let err = run
        .error
        .expect("the deep well violates the radiation condition");
    assert!(!err.is_config());
    assert!(
        matches!(&err, Error::Stage { stage, source } if stage == "spectrum" && matches!(**source, Error::Condition(_)))
    );
    assert_eq!(run.manifest.stages.len(), 1);
    assert!(run.manifest.residual("spectrum", "radiation_gap").unwrap() < 0.0);
}

#[test]
fn evolve_horizon_beyond_the_safe_window_is_a_config_error() {
    let cfg = ExperimentConfig::bundled("double-well-resonant")
        .unwrap()
        .with_override("evolve.t_end", "1000")
        .unwrap();
    let run = run_pipeline(&cfg, Stage::Evolve, None).unwrap();
    let err = run.error.unwrap();
    assert!(err.is_config(), "{err}");
}
