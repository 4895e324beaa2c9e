use std::f64::consts::PI;

use magnon_squeeze::dynamics::{conditional_squeezing_run, ModelKind, RunOptions};
use magnon_squeeze::model::{derive, PhysicalParams};
use magnon_squeeze::qops::qubit;
use magnon_squeeze::scenarios::{
    self, calibrate_against, CalibrationConfig, DeltaEffChoice, Overrides, ScenarioConfig, ScenarioKind, TimeGrid,
};
use magnon_squeeze::Error;

fn small(kind: ScenarioKind, dir: &std::path::Path) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::new(kind);
    cfg.output_dir = dir.to_path_buf();
    cfg.fock_dim = 40;
    cfg.time = TimeGrid {
        end_ns: 20.0,
        step_ns: 0.5,
    };
    cfg
}

#[test]
fn calibration_recovers_a_planted_detuning() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(ScenarioKind::SqueezeCompare, dir.path());
    let step = 2.0 * PI * 0.001;
    cfg.calibration = CalibrationConfig {
        half_window: 20.0 * step,
        step,
    };
    let analytic = derive(&cfg.params).unwrap().delta_eff;
    // A grid point well above the instability threshold 2|g_cs|.
    let planted = analytic - 20.0 * step + 36.0 * step;
    let times = cfg.time.samples();
    let solver = cfg.solver.clone().with_samples(times.clone());
    let opts = RunOptions {
        fock_dim: cfg.fock_dim,
        ..RunOptions::default()
    };
    let reference = conditional_squeezing_run(
        &cfg.params.with_delta_eff(planted),
        &qubit::plus_x(),
        &solver,
        ModelKind::Effective,
        &opts,
    )
    .unwrap();
    let report = calibrate_against(&cfg, &times, reference.series("squeezing_db").unwrap()).unwrap();
    assert!((report.best_rad_per_ns - planted).abs() < 1e-9, "{} vs {planted}", report.best_rad_per_ns);
    let best = report.table.iter().find(|r| r.delta_eff_rad_per_ns == report.best_rad_per_ns).unwrap();
    assert!(best.integrated_abs_diff.unwrap() < 1e-6);
    // Detunings near resonance run away and are excluded rather than picked.
    assert!(report.table.iter().any(|r| r.status == "truncated"));
}

#[test]
fn convergence_is_exact_without_coupling() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(ScenarioKind::Custom, dir.path());
    cfg.params.g_ghz = 0.0;
    cfg.params.temperature_mk = 0.0;
    cfg.delta_eff = DeltaEffChoice::Analytic;
    let m = scenarios::run(&cfg).unwrap();
    assert!(m.convergence.applicable);
    assert_eq!(m.convergence.max_delta_s_db, Some(0.0));
    assert!(!m.convergence.flagged);
}

#[test]
fn strong_squeezing_on_a_small_space_is_flagged() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(ScenarioKind::Custom, dir.path());
    cfg.params = PhysicalParams::working_point().without_dissipation();
    cfg.delta_eff = DeltaEffChoice::Fixed(0.0);
    // r = 2|g_cs| t ≈ 2.8 at 30 ns, far beyond what 40 levels hold.
    cfg.time.end_ns = 30.0;
    let m = scenarios::run(&cfg).unwrap();
    assert!(m.convergence.flagged);
    assert!(m.convergence.max_delta_s_db.unwrap() > scenarios::DELTA_S_TOLERANCE_DB);
}

#[test]
fn manifest_lists_every_output_with_its_checksum() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(ScenarioKind::CouplingMapB, dir.path());
    let m = scenarios::run(&cfg).unwrap();
    assert!(!m.convergence.applicable);
    assert!(m.delta_eff.is_none());
    assert!(!m.outputs.is_empty());
    for rec in &m.outputs {
        let bytes = std::fs::read(dir.path().join(&rec.file)).unwrap();
        assert_eq!(bytes.len(), rec.bytes);
        assert_eq!(rec.sha256.len(), 64);
    }
    let text = std::fs::read_to_string(scenarios::manifest_path(&cfg)).unwrap();
    let json: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(json["action"], "coupling_map_b");
    assert!(json["config"]["solver"].get("sample_times").is_none());
}

fn config_error(text: &str, env: Vec<(&str, &str)>) -> Error {
    let env = env.into_iter().map(|(k, v)| (k.to_string(), v.to_string()));
    ScenarioConfig::from_layers(Some(text), env, &Overrides::default()).unwrap_err()
}

#[test]
fn config_layers_and_rejections() {
    let text = "scenario = \"kappa_sweep\"\n[params]\nkappa = \"1 MHz\"\ndelta_eff = \"17 MHz\"\n";
    let env = vec![("MAGSQ_PARAMS__TEMPERATURE".to_string(), "\"50 mK\"".to_string())];
    let cfg = ScenarioConfig::from_layers(Some(text), env, &Overrides::default()).unwrap();
    assert_eq!(cfg.scenario, ScenarioKind::KappaSweep);
    assert!((cfg.params.kappa_mhz - 1.0).abs() < 1e-12);
    assert!((cfg.params.temperature_mk - 50.0).abs() < 1e-12);
    assert!(matches!(cfg.delta_eff, DeltaEffChoice::Fixed(v) if (v - 2.0 * PI * 0.017).abs() < 1e-12));

    assert!(matches!(config_error("[params]\nkappa = 0.5\n", vec![]), Error::Config { .. }));
    assert!(matches!(config_error("[params]\nkapa = \"1 MHz\"\n", vec![]), Error::Config { .. }));
    assert!(matches!(config_error("fock_dim = 20\n", vec![]), Error::Config { .. }));
    assert!(matches!(config_error("[params]\nkappa = \"1 ns\"\n", vec![]), Error::Config { .. }));
    assert!(matches!(
        config_error("", vec![("MAGSQ_PARAMS__KAPPA", "3")]),
        Error::Config { .. }
    ));
}

#[test]
fn documented_example_config_parses() {
    let text = include_str!("example_config.toml");
    let cfg = ScenarioConfig::from_toml_str(text, Vec::new()).unwrap();
    assert_eq!(cfg.scenario, ScenarioKind::Custom);
    assert!((cfg.params.theta - PI / 4.0).abs() < 1e-12);
    assert!((cfg.params.phi - PI).abs() < 1e-12);
    assert_eq!(cfg.sweep.get("temperature").unwrap(), &[10.0, 82.5, 155.0, 227.5, 300.0]);
    assert!(matches!(cfg.delta_eff, DeltaEffChoice::Calibrate));
}
