use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use super::config::ScenarioConfig;
use crate::dynamics::{conditional_squeezing_run, ModelKind, RunOptions, TrajectoryResult};
use crate::error::{Error, Result};
use crate::model;
use crate::qops::qubit;

/// Scan points whose post-selected state puts more than this on the top Fock level are
/// aborted and excluded from the optimum.
pub const SCAN_TRUNCATION_LIMIT: f64 = 1e-4;

#[derive(Debug, Clone, Serialize)]
pub struct CalibrationRow {
    pub delta_eff_rad_per_ns: f64,
    pub delta_eff_mhz: f64,
    /// ∫|S_ref − S_eff| dt over the time grid (dB·ns).
    pub integrated_abs_diff: Option<f64>,
    pub max_abs_diff_db: Option<f64>,
    pub status: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct CalibrationReport {
    pub analytic_rad_per_ns: f64,
    pub best_rad_per_ns: f64,
    pub best_mhz: f64,
    pub window_rad_per_ns: [f64; 2],
    pub step_rad_per_ns: f64,
    pub fock_dim: usize,
    pub reference_peak_db: f64,
    /// Whether the valid part of the scan has a single local minimum.
    pub unimodal: bool,
    pub optimum_at_window_edge: bool,
    pub table: Vec<CalibrationRow>,
    /// Full-model run the scan was compared against, when it was computed here.
    #[serde(skip)]
    pub reference: Option<TrajectoryResult>,
}

impl CalibrationReport {
    pub fn write_csv(&self, w: &mut Vec<u8>) -> Result<()> {
        writeln!(
            w,
            "delta_eff [rad/ns],delta_eff_mhz [MHz],integrated_abs_diff [dB*ns],max_abs_diff [dB],status"
        )?;
        let opt = |x: Option<f64>| x.map(|v| format!("{v:.10e}")).unwrap_or_default();
        for r in &self.table {
            writeln!(
                w,
                "{:.10e},{:.6},{},{},{}",
                r.delta_eff_rad_per_ns,
                r.delta_eff_mhz,
                opt(r.integrated_abs_diff),
                opt(r.max_abs_diff_db),
                r.status
            )?;
        }
        Ok(())
    }
}

fn run_opts(cfg: &ScenarioConfig) -> RunOptions {
    RunOptions {
        fock_dim: cfg.fock_dim,
        full_frame: cfg.full_frame,
        qubit_basis: cfg.qubit_basis,
        ..RunOptions::default()
    }
}

/// Runs the full model on the configured time grid and scans Δ_eff against it.
pub fn calibrate_delta_eff(cfg: &ScenarioConfig) -> Result<CalibrationReport> {
    let mut params = cfg.params;
    params.delta_eff_override = None;
    let solver = cfg.solver_with(cfg.time);
    log::info!("calibration: full-model reference run (fock_dim {})", cfg.fock_dim);
    let full = conditional_squeezing_run(&params, &qubit::plus_x(), &solver, ModelKind::Full, &run_opts(cfg))?;
    let reference = full.series("squeezing_db").expect("recorded").to_vec();
    let mut report = calibrate_against(cfg, &full.times, &reference)?;
    report.reference = Some(full);
    Ok(report)
}

/// Scans Δ_eff over `analytic ± half_window` and returns the value minimizing the
/// trapezoidal ∫|S_ref − S_eff| dt, with `reference` sampled at `times`.
pub fn calibrate_against(cfg: &ScenarioConfig, times: &[f64], reference: &[f64]) -> Result<CalibrationReport> {
    if times.len() != reference.len() || times.len() < 2 {
        return Err(Error::InvalidParameter("reference series must match the time grid".into()));
    }
    let mut params = cfg.params;
    params.delta_eff_override = None;
    let analytic = model::derive(&params)?.delta_eff;
    let half = cfg.calibration.half_window;
    let step = cfg.calibration.step;
    let n = (2.0 * half / step + 1e-9).floor() as usize;
    let grid: Vec<f64> = (0..=n).map(|k| analytic - half + k as f64 * step).collect();
    let solver = cfg.solver.clone().with_samples(times.to_vec());
    let opts = RunOptions {
        truncation_abort: Some(SCAN_TRUNCATION_LIMIT),
        ..run_opts(cfg)
    };
    let table: Vec<CalibrationRow> = grid
        .par_iter()
        .map(|&delta| {
            let p = params.with_delta_eff(delta);
            let mut row = CalibrationRow {
                delta_eff_rad_per_ns: delta,
                delta_eff_mhz: delta / (2.0 * PI) * 1e3,
                integrated_abs_diff: None,
                max_abs_diff_db: None,
                status: "ok".into(),
            };
            match conditional_squeezing_run(&p, &qubit::plus_x(), &solver, ModelKind::Effective, &opts) {
                Ok(run) => {
                    let s = run.series("squeezing_db").expect("recorded");
                    let diff: Vec<f64> = reference.iter().zip(s).map(|(a, b)| (a - b).abs()).collect();
                    let integral = times
                        .windows(2)
                        .zip(diff.windows(2))
                        .map(|(t, d)| 0.5 * (t[1] - t[0]) * (d[0] + d[1]))
                        .sum();
                    row.integrated_abs_diff = Some(integral);
                    row.max_abs_diff_db = Some(diff.iter().cloned().fold(0.0, f64::max));
                }
                Err(Error::TruncationInsufficient { .. }) => row.status = "truncated".into(),
                Err(e) => row.status = format!("error: {e}").replace(',', ";"),
            }
            row
        })
        .collect();
    let valid: Vec<(usize, f64)> = table
        .iter()
        .enumerate()
        .filter_map(|(k, r)| r.integrated_abs_diff.map(|v| (k, v)))
        .collect();
    let &(best_idx, _) = valid
        .iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or_else(|| Error::TruncationInsufficient {
            fock_dim: cfg.fock_dim,
            tail: SCAN_TRUNCATION_LIMIT,
        })?;
    let local_minima = (0..valid.len())
        .filter(|&i| {
            let v = valid[i].1;
            let left = i == 0 || valid[i - 1].1 > v;
            let right = i + 1 == valid.len() || valid[i + 1].1 > v;
            left && right
        })
        .count();
    let unimodal = local_minima == 1;
    if !unimodal {
        log::warn!("delta_eff scan is not unimodal ({local_minima} local minima); see the scan table");
    }
    let best = grid[best_idx];
    let optimum_at_window_edge = best_idx == 0 || best_idx == grid.len() - 1;
    if optimum_at_window_edge {
        log::warn!("delta_eff optimum lies on the scan window edge");
    }
    log::info!("calibrated delta_eff = {:.6} rad/ns ({:.3} MHz)", best, best / (2.0 * PI) * 1e3);
    Ok(CalibrationReport {
        analytic_rad_per_ns: analytic,
        best_rad_per_ns: best,
        best_mhz: best / (2.0 * PI) * 1e3,
        window_rad_per_ns: [grid[0], grid[grid.len() - 1]],
        step_rad_per_ns: step,
        fock_dim: cfg.fock_dim,
        reference_peak_db: reference.iter().cloned().fold(f64::MIN, f64::max),
        unimodal,
        optimum_at_window_edge,
        table,
        reference: None,
    })
}
