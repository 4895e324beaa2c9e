use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use super::config::{ScenarioConfig, ScenarioKind, SweepAxes, TimeGrid};
use super::convergence::{Probe, WignerProbe};
use super::output::OutputSet;
use crate::coupling::{coupling_map, CouplingSweep};
use crate::dynamics::{
    conditional_squeezing_run, postselected_states, ModelKind, QubitOutcome, RunOptions, SolverConfig,
    TrajectoryResult,
};
use crate::error::{Error, Result};
use crate::model::{self, PhysicalParams};
use crate::observables::{uhlmann_fidelity, wigner, WignerGrid};
use crate::qops::{qubit, StateDensity, C64};
use crate::states::{
    mean_number, off_support_population, superposition_pm, write_state_csv, Parity, QubitInit,
};

pub(crate) struct ScenarioResult {
    pub summary: serde_json::Value,
    pub baseline: Option<Probe>,
}

fn run_opts(cfg: &ScenarioConfig, fock_dim: usize) -> RunOptions {
    RunOptions {
        fock_dim,
        full_frame: cfg.full_frame,
        qubit_basis: cfg.qubit_basis,
        ..RunOptions::default()
    }
}

fn model_name(m: ModelKind) -> &'static str {
    match m {
        ModelKind::Full => "full",
        ModelKind::Effective => "effective",
    }
}

fn at_point<T>(point: String, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::SweepPoint {
        point,
        source: Box::new(e),
    })
}

/// Conditional squeezing run with the qubit prepared in |+x⟩ and post-selected on +x.
fn squeeze_run(
    cfg: &ScenarioConfig,
    params: &PhysicalParams,
    model: ModelKind,
    grid: TimeGrid,
    fock_dim: usize,
) -> Result<TrajectoryResult> {
    conditional_squeezing_run(
        params,
        &qubit::plus_x(),
        &cfg.solver_with(grid),
        model,
        &run_opts(cfg, fock_dim),
    )
}

fn series<'a>(r: &'a TrajectoryResult, name: &str) -> &'a [f64] {
    r.series(name).expect("conditional run records this series")
}

/// `(peak, time of peak, index)` of a series.
fn peak(times: &[f64], values: &[f64]) -> (f64, f64, usize) {
    let (i, v) = values
        .iter()
        .enumerate()
        .fold((0, f64::MIN), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
    (v, times[i], i)
}

const SERIES_HEADER: &str = "time_ns [ns],zeta_sq [1],squeezing_db [dB],mean_number [1],probability [1],angle [rad]";

fn write_series_rows(w: &mut Vec<u8>, prefix: &str, r: &TrajectoryResult) -> Result<()> {
    let z = series(r, "zeta_sq");
    let s = series(r, "squeezing_db");
    let n = series(r, "mean_number");
    let p = series(r, "probability");
    let a = series(r, "angle");
    for (k, t) in r.times.iter().enumerate() {
        writeln!(
            w,
            "{prefix}{t:.4},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e}",
            z[k], s[k], n[k], p[k], a[k]
        )?;
    }
    Ok(())
}

/// `full_reference` is a full-model run on the scenario grid that may be reused (the full
/// model's squeezing does not depend on Δ_eff).
pub(crate) fn run_scenario(
    cfg: &ScenarioConfig,
    kind: ScenarioKind,
    params: &PhysicalParams,
    full_reference: Option<&TrajectoryResult>,
    out: &mut OutputSet,
) -> Result<ScenarioResult> {
    match kind {
        ScenarioKind::CouplingMapA | ScenarioKind::CouplingMapB => coupling(cfg, kind, out),
        ScenarioKind::SqueezeCompare => squeeze_compare(cfg, params, full_reference, out),
        ScenarioKind::KappaSweep | ScenarioKind::TemperatureSweep => parameter_sweep(cfg, kind, params, out),
        ScenarioKind::MaxSqueezeHeatmap => heatmap(cfg, params, out),
        ScenarioKind::SuperpositionWigner => superposition_wigner(cfg, params, out),
        ScenarioKind::SuperpositionFidelity => superposition_fidelity(cfg, params, out),
        ScenarioKind::Custom => custom(cfg, params, out),
    }
}

fn coupling(cfg: &ScenarioConfig, kind: ScenarioKind, out: &mut OutputSet) -> Result<ScenarioResult> {
    let radius = cfg.sweep.get("radius")?.to_vec();
    let sweep = if kind == ScenarioKind::CouplingMapA {
        CouplingSweep::RadiusCurrent {
            radius_um: radius,
            current_ua: cfg.sweep.get("current")?.to_vec(),
        }
    } else {
        CouplingSweep::RadiusOffset {
            radius_um: radius,
            offset_um: cfg.sweep.get("offset")?.to_vec(),
        }
    };
    let map = coupling_map(&cfg.coupling.loop_geometry, &sweep, &cfg.coupling.material)?;
    let name = kind.name();
    out.write(&format!("{name}.csv"), |w| map.write_csv(w))?;
    let meta = map.metadata_json();
    out.write_json(&format!("{name}.json"), &meta)?;
    let (gmin, gmax) = map
        .rows
        .iter()
        .fold((f64::MAX, f64::MIN), |(a, b), r| (a.min(r.g_ghz), b.max(r.g_ghz)));
    Ok(ScenarioResult {
        summary: serde_json::json!({ "points": map.rows.len(), "g_min_ghz": gmin, "g_max_ghz": gmax }),
        baseline: None,
    })
}

fn squeeze_compare(
    cfg: &ScenarioConfig,
    params: &PhysicalParams,
    full_reference: Option<&TrajectoryResult>,
    out: &mut OutputSet,
) -> Result<ScenarioResult> {
    let (full, eff) = rayon::join(
        || match full_reference {
            Some(r) if r.times == cfg.time.samples() && r.metadata.fock_dim == cfg.fock_dim => Ok(r.clone()),
            _ => squeeze_run(cfg, params, ModelKind::Full, cfg.time, cfg.fock_dim),
        },
        || squeeze_run(cfg, params, ModelKind::Effective, cfg.time, cfg.fock_dim),
    );
    let full = at_point("model=full".into(), full)?;
    let eff = at_point("model=effective".into(), eff)?;
    out.write("squeeze_compare.csv", |w| {
        writeln!(w, "model,{SERIES_HEADER}")?;
        write_series_rows(w, "full,", &full)?;
        write_series_rows(w, "effective,", &eff)
    })?;
    let sf = series(&full, "squeezing_db");
    let se = series(&eff, "squeezing_db");
    let diff: Vec<f64> = sf.iter().zip(se).map(|(a, b)| (a - b).abs()).collect();
    let (pf, tf, _) = peak(&full.times, sf);
    let (pe, te, _) = peak(&eff.times, se);
    let later: Vec<f64> = diff.iter().skip(1).cloned().collect();
    let summary = serde_json::json!({
        "peak_full_db": pf,
        "peak_full_time_ns": tf,
        "peak_effective_db": pe,
        "peak_effective_time_ns": te,
        "max_abs_diff_db": diff.iter().cloned().fold(0.0, f64::max),
        "min_abs_diff_db_after_t0": later.iter().cloned().fold(f64::INFINITY, f64::min),
        "samples_below_0_02_db_after_t0": later.iter().filter(|&&d| d < 0.02).count(),
        "full_solver": full.metadata.stats,
        "effective_solver": eff.metadata.stats,
    });
    Ok(ScenarioResult {
        summary,
        baseline: Some(Probe {
            point: "full model at the configured parameters".into(),
            squeezing_db: Some(sf.to_vec()),
            ..Probe::default()
        }),
    })
}

/// Parameter set of sweep point `value` on the kappa (MHz) or temperature (mK) axis.
fn sweep_params(kind: ScenarioKind, base: &PhysicalParams, value: f64) -> PhysicalParams {
    let mut p = *base;
    match kind {
        ScenarioKind::KappaSweep => p.kappa_mhz = value,
        _ => p.temperature_mk = value,
    }
    p
}

fn sweep_axis_name(kind: ScenarioKind) -> &'static str {
    match kind {
        ScenarioKind::KappaSweep => "kappa",
        _ => "temperature",
    }
}

fn parameter_sweep(
    cfg: &ScenarioConfig,
    kind: ScenarioKind,
    params: &PhysicalParams,
    out: &mut OutputSet,
) -> Result<ScenarioResult> {
    let axis_name = sweep_axis_name(kind);
    let axis = cfg.sweep.get(axis_name)?;
    let unit = SweepAxes::unit(axis_name);
    let runs: Vec<TrajectoryResult> = axis
        .par_iter()
        .map(|&v| {
            let p = sweep_params(kind, params, v);
            at_point(format!("{axis_name}={v} {unit}"), squeeze_run(cfg, &p, cfg.model, cfg.time, cfg.fock_dim))
        })
        .collect::<Result<_>>()?;
    let name = kind.name();
    out.write(&format!("{name}.csv"), |w| {
        writeln!(w, "{axis_name} [{unit}],{SERIES_HEADER}")?;
        for (v, r) in axis.iter().zip(&runs) {
            write_series_rows(w, &format!("{v},"), r)?;
        }
        Ok(())
    })?;
    let peaks: Vec<(f64, f64, f64)> = axis
        .iter()
        .zip(&runs)
        .map(|(&v, r)| {
            let (s, t, _) = peak(&r.times, series(r, "squeezing_db"));
            (v, s, t)
        })
        .collect();
    out.write(&format!("{name}_peaks.csv"), |w| {
        writeln!(w, "{axis_name} [{unit}],peak_squeezing_db [dB],peak_time_ns [ns]")?;
        for (v, s, t) in &peaks {
            writeln!(w, "{v},{s:.10e},{t:.4}")?;
        }
        Ok(())
    })?;
    let least = axis
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .expect("axis non-empty");
    Ok(ScenarioResult {
        summary: serde_json::json!({
            "model": model_name(cfg.model),
            "axis": axis_name,
            "unit": unit,
            "peaks": peaks.iter().map(|(v, s, t)| serde_json::json!({"value": v, "peak_db": s, "time_ns": t})).collect::<Vec<_>>(),
        }),
        baseline: Some(Probe {
            point: format!("{axis_name}={} {unit}", axis[least]),
            squeezing_db: Some(series(&runs[least], "squeezing_db").to_vec()),
            ..Probe::default()
        }),
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
struct HeatmapCell {
    kappa_mhz: f64,
    gamma_khz: f64,
    max_squeezing_db: f64,
    time_ns: f64,
    angle: f64,
}

fn heatmap(cfg: &ScenarioConfig, params: &PhysicalParams, out: &mut OutputSet) -> Result<ScenarioResult> {
    let kappas = cfg.sweep.get("heatmap_kappa")?;
    let gammas = cfg.sweep.get("heatmap_gamma")?;
    let points: Vec<(f64, f64)> = kappas
        .iter()
        .flat_map(|&k| gammas.iter().map(move |&g| (k, g)))
        .collect();
    let cells: Vec<HeatmapCell> = points
        .par_iter()
        .map(|&(k, g)| {
            let mut p = *params;
            p.kappa_mhz = k;
            p.gamma_khz = g;
            let r = at_point(
                format!("kappa={k} MHz, gamma={g} kHz"),
                squeeze_run(cfg, &p, cfg.model, cfg.time, cfg.fock_dim),
            )?;
            let (s, t, i) = peak(&r.times, series(&r, "squeezing_db"));
            Ok(HeatmapCell {
                kappa_mhz: k,
                gamma_khz: g,
                max_squeezing_db: s,
                time_ns: t,
                angle: series(&r, "angle")[i],
            })
        })
        .collect::<Result<_>>()?;
    out.write("max_squeeze_heatmap.csv", |w| {
        writeln!(
            w,
            "kappa_mhz [MHz],gamma_khz [kHz],max_squeezing_db [dB],time_at_max_ns [ns],angle_at_max [rad]"
        )?;
        for c in &cells {
            writeln!(
                w,
                "{},{},{:.10e},{:.4},{:.10e}",
                c.kappa_mhz, c.gamma_khz, c.max_squeezing_db, c.time_ns, c.angle
            )?;
        }
        Ok(())
    })?;
    let best = cells
        .iter()
        .max_by(|a, b| a.max_squeezing_db.total_cmp(&b.max_squeezing_db))
        .expect("non-empty grid");
    Ok(ScenarioResult {
        summary: serde_json::json!({
            "model": model_name(cfg.model),
            "shape": [kappas.len(), gammas.len()],
            "best_cell": best,
        }),
        baseline: None,
    })
}

/// Post-selected ψ± states (qubit prepared in |g⟩, outcome g ↦ ψ₊ and e ↦ ψ₋) for the ideal
/// (dissipation-free) and the dissipative evolution, sampled at `times`.
fn superposition_states(
    cfg: &ScenarioConfig,
    params: &PhysicalParams,
    times: Vec<f64>,
    fock_dim: usize,
) -> Result<[(Vec<f64>, Vec<StateDensity>); 4]> {
    let solver: SolverConfig = cfg.solver.clone().with_samples(times);
    let ideal_params = params.without_dissipation();
    let init = QubitInit::PlusPlusMinus.ket();
    let outcomes = [QubitOutcome::G, QubitOutcome::E];
    let opts = run_opts(cfg, fock_dim);
    let (ideal, diss) = rayon::join(
        || postselected_states(&ideal_params, &init, &solver, cfg.model, &opts, &outcomes),
        || postselected_states(params, &init, &solver, cfg.model, &opts, &outcomes),
    );
    let (ideal, _) = at_point("ideal evolution".into(), ideal)?;
    let (diss, _) = at_point("dissipative evolution".into(), diss)?;
    let mut it = ideal.into_iter().chain(diss).map(|s| (s.probabilities, s.states));
    Ok([
        it.next().expect("4 series"),
        it.next().expect("4 series"),
        it.next().expect("4 series"),
        it.next().expect("4 series"),
    ])
}

/// Order of [`superposition_states`]: ideal ψ₊, ideal ψ₋, dissipative ψ₊, dissipative ψ₋.
const SUPERPOSITION_LABELS: [(&str, &str); 4] = [
    ("plus", "ideal"),
    ("minus", "ideal"),
    ("plus", "dissipative"),
    ("minus", "dissipative"),
];

fn wigner_grids(cfg: &ScenarioConfig, params: &PhysicalParams, fock_dim: usize) -> Result<Vec<(f64, StateDensity, WignerGrid)>> {
    let states = superposition_states(cfg, params, vec![cfg.wigner.time_ns], fock_dim)?;
    states
        .into_par_iter()
        .map(|(p, s)| {
            let rho = s.into_iter().next().expect("one sample");
            let grid = wigner(&rho, &cfg.wigner.grid)?;
            Ok((p[0], rho, grid))
        })
        .collect()
}

fn superposition_wigner(cfg: &ScenarioConfig, params: &PhysicalParams, out: &mut OutputSet) -> Result<ScenarioResult> {
    let grids = wigner_grids(cfg, params, cfg.fock_dim)?;
    let mut entries = Vec::new();
    for ((parity, kind), (p, _, grid)) in SUPERPOSITION_LABELS.iter().zip(&grids) {
        let stem = format!("wigner_psi_{parity}_{kind}");
        out.write(&format!("{stem}.csv"), |w| grid.write_csv(w))?;
        let desc = grid.descriptor();
        out.write_json(&format!("{stem}.json"), &desc)?;
        entries.push(serde_json::json!({
            "state": format!("psi_{parity}"),
            "evolution": kind,
            "probability": p,
            "descriptor": desc,
        }));
    }
    let fid_plus = uhlmann_fidelity(&grids[0].1.matrix, &grids[2].1.matrix)?;
    let fid_minus = uhlmann_fidelity(&grids[1].1.matrix, &grids[3].1.matrix)?;
    Ok(ScenarioResult {
        summary: serde_json::json!({
            "time_ns": cfg.wigner.time_ns,
            "model": model_name(cfg.model),
            "outcome_assignment": "g -> psi_plus, e -> psi_minus (qubit prepared in g)",
            "grids": entries,
            "fidelity_plus": fid_plus,
            "fidelity_minus": fid_minus,
        }),
        baseline: Some(wigner_probe(&grids)),
    })
}

fn wigner_probe(grids: &[(f64, StateDensity, WignerGrid)]) -> Probe {
    Probe {
        point: "dissipative psi_plus and psi_minus at the Wigner time".into(),
        wigner: grids[2..]
            .iter()
            .map(|(_, rho, g)| WignerProbe {
                axis: g.re_axis.clone(),
                grid: g.values.clone(),
                rho: rho.matrix.clone(),
            })
            .collect(),
        ..Probe::default()
    }
}

/// `(times, F₊, F₋, P_g, P_e)` with the probabilities of the dissipative run.
type FidelitySeries = (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>);

fn fidelity_series(cfg: &ScenarioConfig, params: &PhysicalParams, fock_dim: usize) -> Result<FidelitySeries> {
    // ψ₋ is undefined at t = 0, so the grid starts one step in.
    let times: Vec<f64> = cfg.fidelity_time.samples().into_iter().skip(1).collect();
    let [ip, im, dp, dm] = superposition_states(cfg, params, times.clone(), fock_dim)?;
    let fid = |a: &[StateDensity], b: &[StateDensity]| -> Result<Vec<f64>> {
        a.par_iter()
            .zip(b)
            .map(|(x, y)| uhlmann_fidelity(&x.matrix, &y.matrix))
            .collect()
    };
    Ok((times, fid(&ip.1, &dp.1)?, fid(&im.1, &dm.1)?, dp.0, dm.0))
}

fn superposition_fidelity(cfg: &ScenarioConfig, params: &PhysicalParams, out: &mut OutputSet) -> Result<ScenarioResult> {
    let (times, fp, fm, pg, pe) = fidelity_series(cfg, params, cfg.fock_dim)?;
    out.write("superposition_fidelity.csv", |w| {
        writeln!(
            w,
            "time_ns [ns],fidelity_plus [1],fidelity_minus [1],probability_g [1],probability_e [1]"
        )?;
        for k in 0..times.len() {
            writeln!(
                w,
                "{:.4},{:.12e},{:.12e},{:.10e},{:.10e}",
                times[k], fp[k], fm[k], pg[k], pe[k]
            )?;
        }
        Ok(())
    })?;
    let min = |v: &[f64]| v.iter().cloned().fold(f64::INFINITY, f64::min);
    let minus_above = fp.iter().zip(&fm).filter(|(p, m)| m > p).count();
    let mut combined = fp.clone();
    combined.extend_from_slice(&fm);
    Ok(ScenarioResult {
        summary: serde_json::json!({
            "model": model_name(cfg.model),
            "min_fidelity_plus": min(&fp),
            "min_fidelity_minus": min(&fm),
            "samples_with_minus_above_plus": minus_above,
            "samples": times.len(),
        }),
        baseline: Some(Probe {
            point: "psi_plus and psi_minus fidelity series".into(),
            fidelity: Some(combined),
            ..Probe::default()
        }),
    })
}

fn custom(cfg: &ScenarioConfig, params: &PhysicalParams, out: &mut OutputSet) -> Result<ScenarioResult> {
    let r = squeeze_run(cfg, params, cfg.model, cfg.time, cfg.fock_dim)?;
    out.write("custom.csv", |w| {
        writeln!(w, "{SERIES_HEADER}")?;
        write_series_rows(w, "", &r)
    })?;
    let s = series(&r, "squeezing_db");
    let (pk, t, _) = peak(&r.times, s);
    Ok(ScenarioResult {
        summary: serde_json::json!({
            "model": model_name(cfg.model),
            "peak_db": pk,
            "peak_time_ns": t,
            "solver": r.metadata.stats,
        }),
        baseline: Some(Probe {
            point: "configured parameters".into(),
            squeezing_db: Some(s.to_vec()),
            ..Probe::default()
        }),
    })
}

/// Most demanding point of each scenario, evaluated at `fock_dim`.
pub(crate) fn probe(cfg: &ScenarioConfig, kind: ScenarioKind, params: &PhysicalParams, fock_dim: usize) -> Result<Probe> {
    let s_probe = |point: String, p: &PhysicalParams, model: ModelKind| -> Result<Probe> {
        let r = squeeze_run(cfg, p, model, cfg.time, fock_dim)?;
        Ok(Probe {
            point,
            squeezing_db: Some(series(&r, "squeezing_db").to_vec()),
            ..Probe::default()
        })
    };
    let min_of = |name: &str| -> Result<f64> {
        Ok(cfg.sweep.get(name)?.iter().cloned().fold(f64::INFINITY, f64::min))
    };
    match kind {
        ScenarioKind::CouplingMapA | ScenarioKind::CouplingMapB => Ok(Probe::default()),
        ScenarioKind::SqueezeCompare => s_probe("full model at the configured parameters".into(), params, ModelKind::Full),
        ScenarioKind::KappaSweep | ScenarioKind::TemperatureSweep => {
            let name = sweep_axis_name(kind);
            let v = min_of(name)?;
            let p = sweep_params(kind, params, v);
            s_probe(format!("{name}={v} {}", SweepAxes::unit(name)), &p, cfg.model)
        }
        ScenarioKind::MaxSqueezeHeatmap => {
            let mut p = *params;
            p.kappa_mhz = min_of("heatmap_kappa")?;
            p.gamma_khz = min_of("heatmap_gamma")?;
            s_probe(
                format!("kappa={} MHz, gamma={} kHz", p.kappa_mhz, p.gamma_khz),
                &p,
                cfg.model,
            )
        }
        ScenarioKind::Custom => s_probe("configured parameters".into(), params, cfg.model),
        ScenarioKind::SuperpositionWigner => Ok(wigner_probe(&wigner_grids(cfg, params, fock_dim)?)),
        ScenarioKind::SuperpositionFidelity => {
            let (_, mut fp, fm, _, _) = fidelity_series(cfg, params, fock_dim)?;
            fp.extend_from_slice(&fm);
            Ok(Probe {
                point: "psi_plus and psi_minus fidelity series".into(),
                fidelity: Some(fp),
                ..Probe::default()
            })
        }
    }
}

#[derive(Debug, Clone, Serialize)]
struct SuperpositionReport {
    parity: &'static str,
    norm_numeric: f64,
    norm_formula_negative_exponent: f64,
    norm_formula_positive_exponent: f64,
    off_support_population: f64,
    mean_number: f64,
}

/// Analytic ψ± kets at `r` (from config, or |ξ(t)| at the Wigner time) with norm diagnostics.
pub(crate) fn superpose(cfg: &ScenarioConfig, params: &PhysicalParams, out: &mut OutputSet) -> Result<serde_json::Value> {
    let xi = match cfg.wigner.squeeze_r {
        Some(r) => C64::from(r),
        None => model::squeezing_parameter(&model::derive(params)?, cfg.wigner.time_ns),
    };
    let mut reports = Vec::new();
    for (parity, name, residue) in [(Parity::Plus, "plus", 0), (Parity::Minus, "minus", 2)] {
        let s = superposition_pm(xi, parity, cfg.fock_dim)?;
        out.write(&format!("psi_{name}.csv"), |w| write_state_csv(&s.ket, w))?;
        reports.push(SuperpositionReport {
            parity: name,
            norm_numeric: s.norm_numeric,
            norm_formula_negative_exponent: s.norm_formula,
            norm_formula_positive_exponent: s.norm_formula_positive_exponent,
            off_support_population: off_support_population(&s.ket, 4, residue),
            mean_number: mean_number(&s.ket),
        });
    }
    let value = serde_json::json!({
        "r": xi.norm(),
        "xi": [xi.re, xi.im],
        "states": reports,
    });
    out.write_json("superposition_norms.json", &value)?;
    Ok(value)
}
