//! TOML scenario configuration with strict units and `MAGSQ_` environment overrides.
//!
//! Every physical quantity is a string carrying its unit (`kappa = "0.5 MHz"`). Dimensionless
//! settings (tolerances, counts, spin) are plain numbers. Environment variables named
//! `MAGSQ_<SECTION>__<KEY>` (double underscore between levels, case-insensitive) replace the
//! corresponding key before validation; `MAGSQ_FOCK_DIM=100` sets a top-level key.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;
use toml::{Table, Value};

use super::units::{parse_quantity, Dimension};
use crate::coupling::{LoopGeometry, MaterialSpec};
use crate::dynamics::{FullFrame, Method, ModelKind, QubitDissipatorBasis, SolverConfig};
use crate::error::{Error, Result};
use crate::model::PhysicalParams;
use crate::observables::WignerSpec;

pub const ENV_PREFIX: &str = "MAGSQ_";
pub const MIN_FOCK_DIM: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    CouplingMapA,
    CouplingMapB,
    SqueezeCompare,
    KappaSweep,
    TemperatureSweep,
    MaxSqueezeHeatmap,
    SuperpositionWigner,
    SuperpositionFidelity,
    Custom,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 9] = [
        ScenarioKind::CouplingMapA,
        ScenarioKind::CouplingMapB,
        ScenarioKind::SqueezeCompare,
        ScenarioKind::KappaSweep,
        ScenarioKind::TemperatureSweep,
        ScenarioKind::MaxSqueezeHeatmap,
        ScenarioKind::SuperpositionWigner,
        ScenarioKind::SuperpositionFidelity,
        ScenarioKind::Custom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::CouplingMapA => "coupling_map_a",
            ScenarioKind::CouplingMapB => "coupling_map_b",
            ScenarioKind::SqueezeCompare => "squeeze_compare",
            ScenarioKind::KappaSweep => "kappa_sweep",
            ScenarioKind::TemperatureSweep => "temperature_sweep",
            ScenarioKind::MaxSqueezeHeatmap => "max_squeeze_heatmap",
            ScenarioKind::SuperpositionWigner => "superposition_wigner",
            ScenarioKind::SuperpositionFidelity => "superposition_fidelity",
            ScenarioKind::Custom => "custom",
        }
    }

    /// Sweep axes the scenario reads.
    pub fn required_axes(self) -> &'static [&'static str] {
        match self {
            ScenarioKind::CouplingMapA => &["radius", "current"],
            ScenarioKind::CouplingMapB => &["radius", "offset"],
            ScenarioKind::KappaSweep => &["kappa"],
            ScenarioKind::TemperatureSweep => &["temperature"],
            ScenarioKind::MaxSqueezeHeatmap => &["heatmap_kappa", "heatmap_gamma"],
            _ => &[],
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().replace('-', "_");
        ScenarioKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::config("scenario", format!("unknown scenario `{s}`")))
    }
}

/// How the renormalized detuning of the effective model is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaEffChoice {
    /// Δ_m minus the static second-order shift.
    Analytic,
    /// Run the full-vs-effective scan first and use its optimum.
    Calibrate,
    /// Fixed angular value (rad/ns).
    Fixed(f64),
}

/// Unit, storage scale and dimension of each named sweep axis.
fn axis_dimension(name: &str) -> Option<(Dimension, f64, &'static str)> {
    // (dimension, factor from canonical parse units to stored units, stored unit label)
    Some(match name {
        "kappa" | "heatmap_kappa" => (Dimension::Frequency, 1e3, "MHz"),
        "heatmap_gamma" => (Dimension::Frequency, 1e6, "kHz"),
        "temperature" => (Dimension::Temperature, 1.0, "mK"),
        "radius" | "offset" => (Dimension::Length, 1.0, "um"),
        "current" => (Dimension::Current, 1.0, "uA"),
        _ => return None,
    })
}

/// Named sweep ranges, stored in the unit reported by [`SweepAxes::unit`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepAxes(pub BTreeMap<String, Vec<f64>>);

impl SweepAxes {
    pub fn get(&self, name: &str) -> Result<&[f64]> {
        self.0
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::config(format!("sweep.{name}"), "required axis missing"))
    }

    pub fn unit(name: &str) -> &'static str {
        axis_dimension(name).map(|x| x.2).unwrap_or("1")
    }
}

fn linspace(start: f64, end: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![start];
    }
    (0..n)
        // Rounded so axis values print as typed (0.12, not 0.12000000000000001).
        .map(|k| ((start + (end - start) * k as f64 / (n - 1) as f64) * 1e12).round() / 1e12)
        .collect()
}

impl Default for SweepAxes {
    fn default() -> Self {
        let mut m = BTreeMap::new();
        m.insert("kappa".into(), vec![0.5, 1.0, 2.0, 4.0]);
        m.insert("temperature".into(), vec![10.0, 50.0, 100.0, 200.0, 300.0]);
        m.insert("heatmap_kappa".into(), linspace(0.1, 4.1, 21));
        m.insert("heatmap_gamma".into(), linspace(3.0, 1003.0, 21));
        m.insert("radius".into(), linspace(0.05, 1.05, 21));
        m.insert("current".into(), linspace(0.1, 0.5, 21));
        m.insert("offset".into(), linspace(-4.0, 4.0, 21));
        SweepAxes(m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeGrid {
    pub end_ns: f64,
    pub step_ns: f64,
}

impl TimeGrid {
    pub fn samples(&self) -> Vec<f64> {
        SolverConfig::uniform_samples(self.end_ns, self.step_ns)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CouplingConfig {
    pub loop_geometry: LoopGeometry,
    pub material: MaterialSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WignerConfig {
    pub time_ns: f64,
    pub grid: WignerSpec,
    /// Squeezing magnitude for the analytic ψ± export; taken from ξ(time) when absent.
    pub squeeze_r: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CalibrationConfig {
    /// Half-width of the scan around the analytic default (rad/ns).
    pub half_window: f64,
    /// Scan spacing (rad/ns).
    pub step: f64,
}

/// Highest-precedence settings, typically from command-line flags.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub scenario: Option<ScenarioKind>,
    pub default_scenario: Option<ScenarioKind>,
    pub fock_dim: Option<usize>,
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioConfig {
    pub scenario: ScenarioKind,
    pub params: PhysicalParams,
    pub delta_eff: DeltaEffChoice,
    /// Model used by single-model scenarios.
    pub model: ModelKind,
    pub full_frame: FullFrame,
    pub qubit_basis: QubitDissipatorBasis,
    pub time: TimeGrid,
    /// Time window of the fidelity scenario.
    pub fidelity_time: TimeGrid,
    pub solver: SolverConfig,
    pub fock_dim: usize,
    pub sweep: SweepAxes,
    pub coupling: CouplingConfig,
    pub wigner: WignerConfig,
    pub calibration: CalibrationConfig,
    pub output_dir: PathBuf,
}

impl ScenarioConfig {
    /// Defaults for `scenario`: the squeezing working point, 0–150 ns at 0.5 ns, 21×21 heatmap.
    pub fn new(scenario: ScenarioKind) -> Self {
        Self {
            scenario,
            params: PhysicalParams::working_point(),
            delta_eff: DeltaEffChoice::Calibrate,
            model: ModelKind::Effective,
            full_frame: FullFrame::Rotating {
                counter_rotating: false,
            },
            qubit_basis: QubitDissipatorBasis::Dressed,
            time: TimeGrid {
                end_ns: 150.0,
                step_ns: 0.5,
            },
            fidelity_time: TimeGrid {
                end_ns: 40.0,
                step_ns: 0.5,
            },
            solver: SolverConfig::default(),
            fock_dim: 80,
            sweep: SweepAxes::default(),
            coupling: CouplingConfig {
                loop_geometry: LoopGeometry::new(10.0, 0.4).expect("valid default loop"),
                material: MaterialSpec::yig(),
            },
            wigner: WignerConfig {
                time_ns: 29.0,
                grid: WignerSpec::default(),
                squeeze_r: None,
            },
            calibration: CalibrationConfig {
                half_window: 2.0 * PI * 0.020,
                step: 2.0 * PI * 0.0005,
            },
            output_dir: PathBuf::from("out"),
        }
    }

    /// Reads a file and applies overrides from the process environment.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
        Self::from_toml_str(&text, std::env::vars())
    }

    /// Parses `text` after applying the `MAGSQ_*` entries of `env`.
    pub fn from_toml_str(text: &str, env: impl IntoIterator<Item = (String, String)>) -> Result<Self> {
        let mut table: Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::config("<file>", e.message().to_string()))?;
        apply_env_overrides(&mut table, env)?;
        Self::from_table(table)
    }

    /// Layered construction: optional file text, then `MAGSQ_*` entries of `env`, then
    /// command-line overrides. `default_scenario` applies when no layer names a scenario.
    pub fn from_layers(
        text: Option<&str>,
        env: impl IntoIterator<Item = (String, String)>,
        overrides: &Overrides,
    ) -> Result<Self> {
        let mut table: Table = match text {
            Some(t) => t
                .parse()
                .map_err(|e: toml::de::Error| Error::config("<file>", e.message().to_string()))?,
            None => Table::new(),
        };
        apply_env_overrides(&mut table, env)?;
        if let Some(k) = overrides.scenario {
            table.insert("scenario".into(), Value::String(k.name().into()));
        }
        if !table.contains_key("scenario") {
            if let Some(k) = overrides.default_scenario {
                table.insert("scenario".into(), Value::String(k.name().into()));
            }
        }
        if let Some(n) = overrides.fock_dim {
            table.insert("fock_dim".into(), Value::Integer(n as i64));
        }
        if let Some(dir) = &overrides.output_dir {
            table.insert("output_dir".into(), Value::String(dir.display().to_string()));
        }
        Self::from_table(table)
    }

    fn from_table(table: Table) -> Result<Self> {
        let mut root = Reader::new("", table);
        let scenario: ScenarioKind = match root.take_str("scenario")? {
            Some(s) => s.parse()?,
            None => return Err(Error::config("scenario", "missing")),
        };
        let mut cfg = ScenarioConfig::new(scenario);
        if let Some(n) = root.take_usize("fock_dim")? {
            cfg.fock_dim = n;
        }
        if let Some(s) = root.take_str("output_dir")? {
            cfg.output_dir = PathBuf::from(s);
        }
        if let Some(s) = root.take_str("model")? {
            cfg.model = match s.as_str() {
                "full" => ModelKind::Full,
                "effective" => ModelKind::Effective,
                _ => return Err(Error::config("model", format!("expected `full` or `effective`, got `{s}`"))),
            };
        }
        if let Some(s) = root.take_str("full_frame")? {
            cfg.full_frame = match s.as_str() {
                "lab" => FullFrame::Lab,
                "rotating" => FullFrame::Rotating {
                    counter_rotating: false,
                },
                "rotating_counter_rotating" => FullFrame::Rotating { counter_rotating: true },
                _ => {
                    return Err(Error::config(
                        "full_frame",
                        format!("expected `lab`, `rotating` or `rotating_counter_rotating`, got `{s}`"),
                    ))
                }
            };
        }
        if let Some(s) = root.take_str("qubit_basis")? {
            cfg.qubit_basis = match s.as_str() {
                "dressed" => QubitDissipatorBasis::Dressed,
                "persistent_current" => QubitDissipatorBasis::PersistentCurrent,
                _ => return Err(Error::config("qubit_basis", format!("unknown basis `{s}`"))),
            };
        }
        if let Some(t) = root.take_table("params")? {
            read_params(t, &mut cfg)?;
        }
        if let Some(t) = root.take_table("time")? {
            cfg.time = read_time(t, cfg.time)?;
        }
        if let Some(t) = root.take_table("fidelity")? {
            cfg.fidelity_time = read_time(t, cfg.fidelity_time)?;
        }
        if let Some(t) = root.take_table("solver")? {
            read_solver(t, &mut cfg.solver)?;
        }
        if let Some(t) = root.take_table("sweep")? {
            read_sweep(t, &mut cfg.sweep)?;
        }
        if let Some(t) = root.take_table("coupling")? {
            read_coupling(t, &mut cfg.coupling)?;
        }
        if let Some(t) = root.take_table("wigner")? {
            let mut r = t;
            if let Some(v) = r.take_quantity("time", Dimension::Time)? {
                cfg.wigner.time_ns = v;
            }
            if let Some(v) = r.take_f64("half_width")? {
                cfg.wigner.grid.half_width = v;
            }
            if let Some(v) = r.take_usize("points")? {
                cfg.wigner.grid.points = v;
            }
            if let Some(v) = r.take_usize("max_extensions")? {
                cfg.wigner.grid.max_extensions = v;
            }
            if let Some(v) = r.take_f64("r")? {
                cfg.wigner.squeeze_r = Some(v);
            }
            r.finish()?;
        }
        if let Some(t) = root.take_table("calibration")? {
            let mut r = t;
            if let Some(v) = r.take_quantity("half_window", Dimension::Frequency)? {
                cfg.calibration.half_window = 2.0 * PI * v;
            }
            if let Some(v) = r.take_quantity("step", Dimension::Frequency)? {
                cfg.calibration.step = 2.0 * PI * v;
            }
            r.finish()?;
        }
        root.finish()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.fock_dim < MIN_FOCK_DIM {
            return Err(Error::config(
                "fock_dim",
                format!("must be >= {MIN_FOCK_DIM}, got {}", self.fock_dim),
            ));
        }
        self.params
            .validate()
            .map_err(|e| Error::config("params", e.to_string()))?;
        for (path, g) in [("time", self.time), ("fidelity", self.fidelity_time)] {
            if !(g.end_ns > 0.0 && g.step_ns > 0.0 && g.step_ns <= g.end_ns) {
                return Err(Error::config(path, "need 0 < step <= end"));
            }
        }
        let mut s = self.solver.clone();
        s.sample_times = self.time.samples();
        s.validate(0.0).map_err(|e| Error::config("solver", e.to_string()))?;
        for name in self.scenario.required_axes() {
            let axis = self.sweep.get(name)?;
            if axis.is_empty() {
                return Err(Error::config(format!("sweep.{name}"), "axis is empty"));
            }
        }
        for (name, axis) in &self.sweep.0 {
            let ok = match name.as_str() {
                "offset" => axis.iter().all(|x| x.is_finite()),
                "kappa" | "heatmap_kappa" | "heatmap_gamma" | "temperature" => axis.iter().all(|&x| x >= 0.0),
                _ => axis.iter().all(|&x| x > 0.0),
            };
            if !ok {
                return Err(Error::config(format!("sweep.{name}"), "value out of range"));
            }
        }
        if !(self.wigner.time_ns > 0.0) {
            return Err(Error::config("wigner.time", "must be > 0"));
        }
        if let Some(r) = self.wigner.squeeze_r {
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::config("wigner.r", "must be > 0"));
            }
        }
        if self.wigner.grid.points < 2 || !(self.wigner.grid.half_width > 0.0) {
            return Err(Error::config("wigner", "need points >= 2 and half_width > 0"));
        }
        if !(self.calibration.step > 0.0 && self.calibration.half_window >= 0.0) {
            return Err(Error::config("calibration", "need step > 0 and half_window >= 0"));
        }
        if let DeltaEffChoice::Fixed(v) = self.delta_eff {
            if !v.is_finite() {
                return Err(Error::config("params.delta_eff", "must be finite"));
            }
        }
        Ok(())
    }

    /// Solver settings with the scenario time grid attached.
    pub fn solver_with(&self, grid: TimeGrid) -> SolverConfig {
        self.solver.clone().with_samples(grid.samples())
    }

    /// JSON echo of the resolved configuration.
    pub fn echo(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(solver) = v.get_mut("solver").and_then(|s| s.as_object_mut()) {
            solver.remove("sample_times");
        }
        v
    }
}

fn read_params(mut r: Reader, cfg: &mut ScenarioConfig) -> Result<()> {
    let p = &mut cfg.params;
    let ghz: [(&str, &mut f64, f64); 5] = [
        ("omega_m", &mut p.omega_m_ghz, 1.0),
        ("nu", &mut p.nu_ghz, 1.0),
        ("omega_p", &mut p.omega_p_ghz, 1.0),
        ("drive", &mut p.drive_ghz, 1.0),
        ("g", &mut p.g_ghz, 1.0),
    ];
    for (key, slot, scale) in ghz {
        if let Some(v) = r.take_quantity(key, Dimension::Frequency)? {
            *slot = v * scale;
        }
    }
    if let Some(v) = r.take_quantity("kappa", Dimension::Frequency)? {
        p.kappa_mhz = v * 1e3;
    }
    if let Some(v) = r.take_quantity("gamma", Dimension::Frequency)? {
        p.gamma_khz = v * 1e6;
    }
    if let Some(v) = r.take_quantity("gamma_phi", Dimension::Frequency)? {
        p.gamma_phi_khz = v * 1e6;
    }
    if let Some(v) = r.take_quantity("phi", Dimension::Angle)? {
        p.phi = v;
    }
    if let Some(v) = r.take_quantity("theta", Dimension::Angle)? {
        p.theta = v;
    }
    if let Some(v) = r.take_quantity("temperature", Dimension::Temperature)? {
        p.temperature_mk = v;
    }
    let path = r.path("delta_eff");
    if let Some(s) = r.take_str("delta_eff")? {
        cfg.delta_eff = match s.trim() {
            "analytic" => DeltaEffChoice::Analytic,
            "calibrate" => DeltaEffChoice::Calibrate,
            q => DeltaEffChoice::Fixed(2.0 * PI * parse_quantity(&path, q, Dimension::Frequency)?),
        };
    }
    r.finish()
}

fn read_time(mut r: Reader, mut grid: TimeGrid) -> Result<TimeGrid> {
    if let Some(v) = r.take_quantity("end", Dimension::Time)? {
        grid.end_ns = v;
    }
    if let Some(v) = r.take_quantity("step", Dimension::Time)? {
        grid.step_ns = v;
    }
    r.finish()?;
    Ok(grid)
}

fn read_solver(mut r: Reader, s: &mut SolverConfig) -> Result<()> {
    if let Some(m) = r.take_str("method")? {
        s.method = match m.as_str() {
            "adaptive_rk" => Method::AdaptiveRk,
            "fixed_rk4" => Method::FixedRk4,
            _ => return Err(Error::config(r.path("method"), format!("unknown method `{m}`"))),
        };
    }
    if let Some(v) = r.take_f64("rel_tol")? {
        s.rel_tol = v;
    }
    if let Some(v) = r.take_f64("abs_tol")? {
        s.abs_tol = v;
    }
    if let Some(v) = r.take_quantity("max_step", Dimension::Time)? {
        s.max_step = v;
    }
    if let Some(v) = r.take_quantity("min_step", Dimension::Time)? {
        s.min_step = v;
    }
    if let Some(v) = r.take_f64("positivity_tol")? {
        s.positivity_tol = v;
    }
    if let Some(v) = r.take_usize("positivity_stride")? {
        s.positivity_stride = v;
    }
    r.finish()
}

fn read_sweep(r: Reader, axes: &mut SweepAxes) -> Result<()> {
    let Reader { path, table } = r;
    for (key, value) in table {
        let p = join(&path, &key);
        let Some((dim, scale, _)) = axis_dimension(&key) else {
            return Err(Error::config(p, "unknown sweep axis"));
        };
        let values = match value {
            Value::Array(items) => items
                .iter()
                .enumerate()
                .map(|(k, v)| {
                    let ip = format!("{p}[{k}]");
                    match v {
                        Value::String(s) => parse_quantity(&ip, s, dim).map(|x| x * scale),
                        _ => Err(Error::config(ip, "expected a quantity string with a unit")),
                    }
                })
                .collect::<Result<Vec<_>>>()?,
            Value::Table(t) => {
                let mut sub = Reader::new(&p, t);
                let start = sub.take_quantity("start", dim)?;
                let end = sub.take_quantity("end", dim)?;
                let points = sub.take_usize("points")?;
                sub.finish()?;
                match (start, end, points) {
                    (Some(a), Some(b), Some(n)) if n >= 1 => linspace(a * scale, b * scale, n),
                    _ => return Err(Error::config(p, "range needs start, end and points >= 1")),
                }
            }
            _ => return Err(Error::config(p, "expected an array of quantities or {start, end, points}")),
        };
        axes.0.insert(key, values);
    }
    Ok(())
}

fn read_coupling(mut r: Reader, c: &mut CouplingConfig) -> Result<()> {
    let mut side = c.loop_geometry.side_length_um;
    let mut current = c.loop_geometry.current_ua;
    if let Some(v) = r.take_quantity("side_length", Dimension::Length)? {
        side = v;
    }
    if let Some(v) = r.take_quantity("current", Dimension::Current)? {
        current = v;
    }
    c.loop_geometry = LoopGeometry::new(side, current).map_err(|e| Error::config(r.path("side_length"), e.to_string()))?;
    if let Some(v) = r.take_quantity("spin_density", Dimension::Density)? {
        c.material.spin_density_cm3 = v;
    }
    if let Some(v) = r.take_f64("spin")? {
        c.material.spin = v;
    }
    if let Some(v) = r.take_f64("g_factor")? {
        c.material.g_e = v;
    }
    c.material
        .validate()
        .map_err(|e| Error::config(r.path("material"), e.to_string()))?;
    r.finish()
}

fn join(prefix: &str, key: &str) -> String {
    if prefix.is_empty() {
        key.to_string()
    } else {
        format!("{prefix}.{key}")
    }
}

/// Consumes keys from a table and reports leftovers as unknown.
struct Reader {
    path: String,
    table: Table,
}

impl Reader {
    fn new(path: &str, table: Table) -> Self {
        Self {
            path: path.to_string(),
            table,
        }
    }

    fn path(&self, key: &str) -> String {
        join(&self.path, key)
    }

    fn take_str(&mut self, key: &str) -> Result<Option<String>> {
        match self.table.remove(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s)),
            Some(_) => Err(Error::config(self.path(key), "expected a string")),
        }
    }

    fn take_quantity(&mut self, key: &str, dim: Dimension) -> Result<Option<f64>> {
        let path = self.path(key);
        match self.table.remove(key) {
            None => Ok(None),
            Some(Value::String(s)) => parse_quantity(&path, &s, dim).map(Some),
            Some(Value::Integer(_)) | Some(Value::Float(_)) => Err(Error::config(
                path,
                "bare number; physical quantities need a unit, e.g. \"0.5 MHz\"",
            )),
            Some(_) => Err(Error::config(path, "expected a quantity string with a unit")),
        }
    }

    fn take_f64(&mut self, key: &str) -> Result<Option<f64>> {
        match self.table.remove(key) {
            None => Ok(None),
            Some(Value::Float(x)) => Ok(Some(x)),
            Some(Value::Integer(i)) => Ok(Some(i as f64)),
            Some(_) => Err(Error::config(self.path(key), "expected a number")),
        }
    }

    fn take_usize(&mut self, key: &str) -> Result<Option<usize>> {
        match self.table.remove(key) {
            None => Ok(None),
            Some(Value::Integer(i)) if i >= 0 => Ok(Some(i as usize)),
            Some(_) => Err(Error::config(self.path(key), "expected a non-negative integer")),
        }
    }

    fn take_table(&mut self, key: &str) -> Result<Option<Reader>> {
        let path = self.path(key);
        match self.table.remove(key) {
            None => Ok(None),
            Some(Value::Table(t)) => Ok(Some(Reader::new(&path, t))),
            Some(_) => Err(Error::config(path, "expected a table")),
        }
    }

    fn finish(self) -> Result<()> {
        match self.table.keys().next() {
            None => Ok(()),
            Some(k) => Err(Error::config(join(&self.path, k), "unknown key")),
        }
    }
}

/// Applies `MAGSQ_A__B=value` as `a.b = value`. Values that parse as TOML (numbers,
/// arrays, inline tables, quoted strings) are used as such; anything else is a string.
pub fn apply_env_overrides(table: &mut Table, env: impl IntoIterator<Item = (String, String)>) -> Result<()> {
    let mut vars: Vec<(String, String)> = env
        .into_iter()
        .filter(|(k, _)| k.starts_with(ENV_PREFIX))
        .collect();
    vars.sort();
    for (key, raw) in vars {
        let segments: Vec<String> = key[ENV_PREFIX.len()..]
            .split("__")
            .map(|s| s.to_ascii_lowercase())
            .collect();
        if segments.iter().any(|s| s.is_empty()) {
            return Err(Error::config(key, "malformed override variable"));
        }
        let value = format!("v = {raw}")
            .parse::<Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or(Value::String(raw.clone()));
        let mut cursor = &mut *table;
        for seg in &segments[..segments.len() - 1] {
            let entry = cursor
                .entry(seg.clone())
                .or_insert_with(|| Value::Table(Table::new()));
            cursor = match entry {
                Value::Table(t) => t,
                _ => return Err(Error::config(segments.join("."), "override path crosses a non-table value")),
            };
        }
        cursor.insert(segments[segments.len() - 1].clone(), value);
    }
    Ok(())
}
