use nalgebra::DMatrix;
use serde::Serialize;

use super::config::{ScenarioConfig, ScenarioKind};
use super::runners;
use crate::error::Result;
use crate::model::PhysicalParams;
use crate::observables::wigner_on_axes;
use crate::qops::OperatorMatrix;

pub const DELTA_S_TOLERANCE_DB: f64 = 0.02;
/// Threshold on Wigner values and fidelities.
pub const STATE_DELTA_TOLERANCE: f64 = 1e-3;
/// Extra Fock levels of the comparison run.
pub const FOCK_INCREMENT: usize = 20;

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    pub applicable: bool,
    pub point: String,
    pub fock_dims: [usize; 2],
    pub max_delta_s_db: Option<f64>,
    pub max_wigner_delta: Option<f64>,
    pub max_fidelity_delta: Option<f64>,
    pub flagged: bool,
}

impl ConvergenceReport {
    pub fn not_applicable(reason: &str) -> Self {
        Self {
            applicable: false,
            point: reason.to_string(),
            fock_dims: [0, 0],
            max_delta_s_db: None,
            max_wigner_delta: None,
            max_fidelity_delta: None,
            flagged: false,
        }
    }
}

/// Quantities compared between truncations at the most demanding point of a scenario.
#[derive(Debug, Clone, Default)]
pub(crate) struct Probe {
    pub point: String,
    pub squeezing_db: Option<Vec<f64>>,
    pub wigner: Vec<WignerProbe>,
    pub fidelity: Option<Vec<f64>>,
}

/// A Wigner grid together with the state it was computed from, so a finer truncation can be
/// evaluated on the same axis.
#[derive(Debug, Clone)]
pub(crate) struct WignerProbe {
    pub axis: Vec<f64>,
    pub grid: DMatrix<f64>,
    pub rho: OperatorMatrix,
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Reruns the most demanding point of the configured scenario at `fock_dim` and
/// `fock_dim + 20` and compares squeezing, Wigner values and fidelities.
pub fn convergence_check(cfg: &ScenarioConfig) -> Result<ConvergenceReport> {
    let (params, _, _) = super::resolve_params(cfg)?;
    check_with(cfg, cfg.scenario, &params, None)
}

pub(crate) fn check_with(
    cfg: &ScenarioConfig,
    kind: ScenarioKind,
    params: &PhysicalParams,
    baseline: Option<Probe>,
) -> Result<ConvergenceReport> {
    if matches!(kind, ScenarioKind::CouplingMapA | ScenarioKind::CouplingMapB) {
        return Ok(ConvergenceReport::not_applicable("coupling maps have no Fock truncation"));
    }
    let n0 = cfg.fock_dim;
    let n1 = n0 + FOCK_INCREMENT;
    let base = match baseline {
        Some(b) => b,
        None => runners::probe(cfg, kind, params, n0)?,
    };
    let fine = runners::probe(cfg, kind, params, n1)?;
    let ds = match (&base.squeezing_db, &fine.squeezing_db) {
        (Some(a), Some(b)) => Some(max_abs_diff(a, b)),
        _ => None,
    };
    let dw = if base.wigner.is_empty() {
        None
    } else {
        let m = base
            .wigner
            .iter()
            .zip(&fine.wigner)
            .map(|(coarse, f)| {
                let on_axis = wigner_on_axes(&f.rho, &coarse.axis, &coarse.axis);
                (&coarse.grid - on_axis).amax()
            })
            .fold(0.0, f64::max);
        Some(m)
    };
    let df = match (&base.fidelity, &fine.fidelity) {
        (Some(a), Some(b)) => Some(max_abs_diff(a, b)),
        _ => None,
    };
    let flagged = ds.is_some_and(|v| !(v <= DELTA_S_TOLERANCE_DB))
        || dw.is_some_and(|v| !(v <= STATE_DELTA_TOLERANCE))
        || df.is_some_and(|v| !(v <= STATE_DELTA_TOLERANCE));
    Ok(ConvergenceReport {
        applicable: true,
        point: base.point,
        fock_dims: [n0, n1],
        max_delta_s_db: ds,
        max_wigner_delta: dw,
        max_fidelity_delta: df,
        flagged,
    })
}
