//! Named experiment scenarios: configuration, parallel sweeps, calibration of the effective
//! detuning, truncation convergence checks, and CSV/JSON output with a checksummed manifest.

pub mod config;
pub mod units;

mod calibrate;
mod convergence;
mod output;
mod runners;

use std::path::PathBuf;
use std::time::Instant;

use serde::Serialize;

pub use calibrate::{calibrate_against, calibrate_delta_eff, CalibrationReport, CalibrationRow};
pub use config::{
    CalibrationConfig, CouplingConfig, DeltaEffChoice, Overrides, ScenarioConfig, ScenarioKind, SweepAxes, TimeGrid,
    WignerConfig,
};
pub use convergence::{convergence_check, ConvergenceReport, DELTA_S_TOLERANCE_DB, STATE_DELTA_TOLERANCE};
pub use output::{OutputRecord, OutputSet};

use crate::error::Result;
use crate::model::{self, PhysicalParams};
use crate::qops::Frame;

/// What a single invocation produces. Scenarios map one-to-one onto [`ScenarioKind`]; the
/// other actions are auxiliary tools.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Scenario(ScenarioKind),
    /// Analytic ψ± kets with norm diagnostics.
    Superpose,
    /// Δ_eff scan against the full model.
    Calibrate,
    /// Truncation convergence report only.
    Converge,
}

impl Action {
    pub fn name(self) -> String {
        match self {
            Action::Scenario(k) => k.name().to_string(),
            Action::Superpose => "superpose".into(),
            Action::Calibrate => "calibrate".into(),
            Action::Converge => "converge".into(),
        }
    }
}

/// How Δ_eff was chosen for a run.
#[derive(Debug, Clone, Serialize)]
pub struct DeltaEffReport {
    pub analytic_rad_per_ns: f64,
    pub used_rad_per_ns: f64,
    pub used_mhz: f64,
    pub source: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub action: String,
    pub version: &'static str,
    pub config: serde_json::Value,
    pub delta_eff: Option<DeltaEffReport>,
    pub calibration: Option<CalibrationReport>,
    pub convergence: ConvergenceReport,
    pub wall_clock_seconds: f64,
    pub outputs: Vec<OutputRecord>,
    pub summary: serde_json::Value,
    pub conventions: Conventions,
}

#[derive(Debug, Clone, Serialize)]
pub struct Conventions {
    pub tensor_order: &'static str,
    pub plus_minus: &'static str,
    pub reporting_frame: Frame,
    pub frequency_units: &'static str,
}

impl Default for Conventions {
    fn default() -> Self {
        Self {
            tensor_order: "magnon (x) qubit, joint index 2n + q, q = 0 is g",
            plus_minus: crate::states::PLUS_MINUS_CONVENTION,
            reporting_frame: Frame::DriveInteraction,
            frequency_units: "CSV frequencies are linear (x 2pi gives rad/ns) unless the header says rad",
        }
    }
}

pub const MANIFEST_NAME: &str = "manifest.json";

/// Physical parameters with Δ_eff resolved according to the configuration, running the
/// calibration scan when requested.
pub fn resolve_params(cfg: &ScenarioConfig) -> Result<(PhysicalParams, DeltaEffReport, Option<CalibrationReport>)> {
    let mut base = cfg.params;
    base.delta_eff_override = None;
    let analytic = model::derive(&base)?.delta_eff;
    let (used, source, cal) = match cfg.delta_eff {
        DeltaEffChoice::Analytic => (analytic, "analytic", None),
        DeltaEffChoice::Fixed(v) => (v, "fixed", None),
        DeltaEffChoice::Calibrate => {
            let report = calibrate_delta_eff(cfg)?;
            (report.best_rad_per_ns, "calibrated", Some(report))
        }
    };
    Ok((
        base.with_delta_eff(used),
        DeltaEffReport {
            analytic_rad_per_ns: analytic,
            used_rad_per_ns: used,
            used_mhz: used / (2.0 * std::f64::consts::PI) * 1e3,
            source,
        },
        cal,
    ))
}

/// Runs the scenario named in the configuration.
pub fn run(cfg: &ScenarioConfig) -> Result<RunManifest> {
    run_action(cfg, Action::Scenario(cfg.scenario))
}

/// Runs `action`, writes its outputs and `manifest.json` into `cfg.output_dir`.
pub fn run_action(cfg: &ScenarioConfig, action: Action) -> Result<RunManifest> {
    cfg.validate()?;
    let start = Instant::now();
    std::fs::create_dir_all(&cfg.output_dir)?;
    let mut out = OutputSet::new(cfg.output_dir.clone());
    let needs_delta = !matches!(
        action,
        Action::Scenario(ScenarioKind::CouplingMapA) | Action::Scenario(ScenarioKind::CouplingMapB)
    );
    let (params, delta, mut calibration) = if needs_delta && action != Action::Calibrate {
        let (p, d, c) = resolve_params(cfg)?;
        (p, Some(d), c)
    } else {
        (cfg.params, None, None)
    };
    let mut baseline = None;
    let summary = match action {
        Action::Scenario(kind) => {
            let reference = calibration.as_ref().and_then(|c| c.reference.as_ref());
            let r = runners::run_scenario(cfg, kind, &params, reference, &mut out)?;
            baseline = r.baseline;
            r.summary
        }
        Action::Superpose => runners::superpose(cfg, &params, &mut out)?,
        Action::Calibrate => {
            let report = calibrate_delta_eff(cfg)?;
            out.write("delta_eff_scan.csv", |w| report.write_csv(w))?;
            let s = serde_json::json!({
                "best_rad_per_ns": report.best_rad_per_ns,
                "best_mhz": report.best_mhz,
                "unimodal": report.unimodal,
                "optimum_at_window_edge": report.optimum_at_window_edge,
            });
            calibration = Some(report);
            s
        }
        Action::Converge => serde_json::json!({}),
    };
    let convergence = match action {
        Action::Calibrate | Action::Superpose => ConvergenceReport::not_applicable("analytic or calibration output"),
        Action::Converge => convergence::check_with(cfg, cfg.scenario, &params, None)?,
        Action::Scenario(kind) => convergence::check_with(cfg, kind, &params, baseline)?,
    };
    if convergence.flagged {
        log::warn!(
            "truncation convergence flagged: dS = {:?} dB, dW = {:?}, dF = {:?}",
            convergence.max_delta_s_db,
            convergence.max_wigner_delta,
            convergence.max_fidelity_delta
        );
    }
    let manifest = RunManifest {
        action: action.name(),
        version: env!("CARGO_PKG_VERSION"),
        config: cfg.echo(),
        delta_eff: delta,
        calibration,
        convergence,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        outputs: out.into_records(),
        summary,
        conventions: Conventions::default(),
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    std::fs::write(cfg.output_dir.join(MANIFEST_NAME), text)?;
    Ok(manifest)
}

/// Path of the manifest written by [`run_action`].
pub fn manifest_path(cfg: &ScenarioConfig) -> PathBuf {
    cfg.output_dir.join(MANIFEST_NAME)
}
