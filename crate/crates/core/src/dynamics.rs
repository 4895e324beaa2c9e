//! Lindblad master-equation evolution, projective qubit measurement and the conditional
//! squeezing protocol.
//!
//! Dissipators follow `D[o]ρ = 2oρo† − o†oρ − ρo†o`; each channel stores the prefactor
//! multiplying `D[o]`, so a single loss channel at rate κ has prefactor κ/2.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{self, DerivedParams, PhysicalParams, TimeDependentOperator};
use crate::observables::{min_quadrature_variance_of, squeezing_db};
use crate::qops::{
    self, kron, qubit, Frame, HilbertSpace, OperatorMatrix, SparseOperator, Space, StateDensity,
    StateVector, C64, I, ONE, ZERO,
};

#[derive(Debug, Clone)]
pub struct Dissipator {
    pub label: String,
    pub operator: OperatorMatrix,
    /// Coefficient multiplying `D[operator]`.
    pub prefactor: f64,
}

#[derive(Debug, Clone, Default)]
pub struct LindbladSpec {
    pub dissipators: Vec<Dissipator>,
}

impl LindbladSpec {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, label: &str, operator: OperatorMatrix, prefactor: f64) -> Result<&mut Self> {
        if !(prefactor >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "dissipator {label} has negative prefactor {prefactor}"
            )));
        }
        self.dissipators.push(Dissipator {
            label: label.to_string(),
            operator,
            prefactor,
        });
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.dissipators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dissipators.is_empty()
    }

    /// Σ p D[o]ρ evaluated densely.
    pub fn apply(&self, rho: &OperatorMatrix) -> OperatorMatrix {
        let mut out = OperatorMatrix::zeros(rho.nrows(), rho.ncols());
        for d in &self.dissipators {
            let o = &d.operator;
            let od = o.adjoint();
            let odo = &od * o;
            out += (o * rho * &od * C64::from(2.0) - &odo * rho - rho * &odo) * C64::from(d.prefactor);
        }
        out
    }

    pub fn prefactor(&self, label: &str) -> Option<f64> {
        self.dissipators.iter().find(|d| d.label == label).map(|d| d.prefactor)
    }
}

/// Basis in which the qubit raising/lowering and dephasing operators of the full model act.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QubitDissipatorBasis {
    /// Qubit energy eigenbasis {|g⟩, |e⟩}.
    #[default]
    Dressed,
    /// Persistent-current basis, expressed in dressed coordinates through the flux angle.
    PersistentCurrent,
}

/// Thermal magnon pair, thermal qubit relaxation pair and qubit dephasing.
pub fn build_dissipators_full(
    d: &DerivedParams,
    space: &HilbertSpace,
    basis: QubitDissipatorBasis,
) -> Result<LindbladSpec> {
    let a = space.annihilation();
    let (sm, sp, sz) = match basis {
        QubitDissipatorBasis::Dressed => (qubit::sm(), qubit::sp(), qubit::sz()),
        QubitDissipatorBasis::PersistentCurrent => {
            // Persistent-current operators seen from the dressed basis.
            let (s, c) = (d.theta / 2.0).sin_cos();
            let t = OperatorMatrix::from_row_slice(2, 2, &[C64::from(c), C64::from(s), C64::from(-s), C64::from(c)]);
            let map = |o: OperatorMatrix| &t * o * t.adjoint();
            // Lowering in the persistent-current basis is |↻⟩⟨↺| with the 2×2 Pauli
            // convention σ_z|↻⟩ = |↻⟩.
            let lower = OperatorMatrix::from_row_slice(2, 2, &[ZERO, ONE, ZERO, ZERO]);
            (map(lower.clone()), map(lower.adjoint()), map(qubit::pauli_z()))
        }
    };
    let mut spec = LindbladSpec::new();
    spec.push("magnon_loss", a.clone(), d.kappa * (d.n_bar_m + 1.0) / 2.0)?
        .push("magnon_gain", a.adjoint(), d.kappa * d.n_bar_m / 2.0)?
        .push("qubit_relaxation", space.qubit_op(&sm), d.gamma * (d.n_bar_q + 1.0) / 2.0)?
        .push("qubit_excitation", space.qubit_op(&sp), d.gamma * d.n_bar_q / 2.0)?
        .push("qubit_dephasing", space.qubit_op(&sz), d.gamma_phi / 4.0)?;
    Ok(spec)
}

/// Thermal magnon pair plus σ̄_x dephasing at γ(2n̄_q + 1)/8.
pub fn build_dissipators_effective(d: &DerivedParams, space: &HilbertSpace) -> Result<LindbladSpec> {
    let a = space.annihilation();
    let mut spec = LindbladSpec::new();
    spec.push("magnon_loss", a.clone(), d.kappa * (d.n_bar_m + 1.0) / 2.0)?
        .push("magnon_gain", a.adjoint(), d.kappa * d.n_bar_m / 2.0)?
        .push("qubit_sx", space.qubit_op(&qubit::sx()), d.gamma * (2.0 * d.n_bar_q + 1.0) / 8.0)?;
    Ok(spec)
}

/// Right-hand side of the master equation in sparse form:
/// `dρ/dt = A + A† + Σ 2p LρL†` with `A = −i K(t) ρ` and `K = H − i Σ p L†L`.
#[derive(Debug, Clone)]
pub struct Liouvillian {
    dim: usize,
    /// `−i K` restricted to its time-independent part.
    static_part: SparseOperator,
    /// `(−i · amplitude · op, ω)` for every oscillating Hamiltonian term.
    oscillating: Vec<(SparseOperator, f64)>,
    /// `(L, 2p)`.
    jumps: Vec<(SparseOperator, f64)>,
}

impl Liouvillian {
    pub fn new(h: &TimeDependentOperator, diss: &LindbladSpec) -> Result<Self> {
        let dim = h.dim;
        let mut static_k = OperatorMatrix::zeros(dim, dim);
        let mut by_freq: Vec<(f64, OperatorMatrix)> = Vec::new();
        for term in &h.terms {
            if term.op.nrows() != dim {
                return Err(Error::DimensionMismatch {
                    left: term.op.nrows(),
                    right: dim,
                });
            }
            if term.omega == 0.0 {
                static_k += &term.op * term.amplitude;
            } else if let Some((_, m)) = by_freq.iter_mut().find(|(w, _)| *w == term.omega) {
                *m += &term.op * term.amplitude;
            } else {
                by_freq.push((term.omega, &term.op * term.amplitude));
            }
        }
        let mut jumps = Vec::new();
        for d in &diss.dissipators {
            if d.operator.nrows() != dim {
                return Err(Error::DimensionMismatch {
                    left: d.operator.nrows(),
                    right: dim,
                });
            }
            if d.prefactor == 0.0 {
                continue;
            }
            static_k -= d.operator.adjoint() * &d.operator * C64::new(0.0, d.prefactor);
            jumps.push((SparseOperator::from_dense(&d.operator), 2.0 * d.prefactor));
        }
        let minus_i = -I;
        Ok(Self {
            dim,
            static_part: SparseOperator::from_dense(&(static_k * minus_i)),
            oscillating: by_freq
                .into_iter()
                .map(|(w, m)| (SparseOperator::from_dense(&(m * minus_i)), w))
                .collect(),
            jumps,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Evaluates `dρ/dt` into `out`. Buffers are column-major `dim × dim`; `scratch` must
    /// have the same length.
    pub fn apply(&self, t: f64, rho: &[C64], out: &mut [C64], scratch: &mut [C64]) {
        let d = self.dim;
        scratch.fill(ZERO);
        self.static_part.mul_dense_acc(ONE, rho, scratch);
        for (op, w) in &self.oscillating {
            op.mul_dense_acc((I * w * t).exp(), rho, scratch);
        }
        // out = A + A†
        for j in 0..d {
            for i in 0..d {
                out[j * d + i] = scratch[j * d + i] + scratch[i * d + j].conj();
            }
        }
        for (l, c) in &self.jumps {
            scratch.fill(ZERO);
            l.mul_dense_acc(ONE, rho, scratch);
            // scratch ← (Lρ)† = ρL†, transposed in place.
            for j in 0..d {
                scratch[j * d + j] = scratch[j * d + j].conj();
                for i in (j + 1)..d {
                    let a = scratch[j * d + i];
                    let b = scratch[i * d + j];
                    scratch[j * d + i] = b.conj();
                    scratch[i * d + j] = a.conj();
                }
            }
            l.mul_dense_acc(C64::from(*c), scratch, out);
        }
    }

    pub fn apply_dense(&self, t: f64, rho: &OperatorMatrix) -> OperatorMatrix {
        let mut out = vec![ZERO; self.dim * self.dim];
        let mut scratch = vec![ZERO; self.dim * self.dim];
        self.apply(t, rho.as_slice(), &mut out, &mut scratch);
        OperatorMatrix::from_vec(self.dim, self.dim, out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Embedded Dormand–Prince 5(4) pair with step-size control.
    AdaptiveRk,
    /// Classical fourth-order Runge–Kutta with step `max_step`.
    FixedRk4,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverConfig {
    pub method: Method,
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Largest step (ns); also the fixed step for [`Method::FixedRk4`].
    pub max_step: f64,
    pub sample_times: Vec<f64>,
    /// Abort when an eigenvalue of a sampled state falls below minus this value.
    pub positivity_tol: f64,
    /// Positivity is checked on every `positivity_stride`-th sample (0 disables it).
    pub positivity_stride: usize,
    /// Steps below this size (ns) are reported as stiffness.
    pub min_step: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            method: Method::AdaptiveRk,
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            max_step: 0.5,
            sample_times: Vec::new(),
            positivity_tol: 1e-6,
            positivity_stride: 1,
            min_step: 1e-10,
        }
    }
}

impl SolverConfig {
    pub fn with_samples(mut self, times: Vec<f64>) -> Self {
        self.sample_times = times;
        self
    }

    /// `0, dt, 2dt, …` up to and including `t_end`.
    pub fn uniform_samples(t_end: f64, dt: f64) -> Vec<f64> {
        let n = (t_end / dt + 1e-9).floor() as usize;
        (0..=n).map(|k| k as f64 * dt).collect()
    }

    pub fn validate(&self, t0: f64) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(Error::InvalidParameter("solver tolerances must be > 0".into()));
        }
        if !(self.max_step > 0.0) {
            return Err(Error::InvalidParameter("max_step must be > 0".into()));
        }
        if self.sample_times.is_empty() {
            return Err(Error::InvalidParameter("no sample times".into()));
        }
        if self.sample_times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter("sample times must be strictly increasing".into()));
        }
        if self.sample_times[0] < t0 - 1e-12 {
            return Err(Error::InvalidParameter("sample times precede the initial state".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct SolverStats {
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub rhs_evaluations: usize,
    pub smallest_step: f64,
    pub largest_step: f64,
    pub max_trace_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrajectoryMetadata {
    pub frame: Frame,
    pub fock_dim: usize,
    pub model: String,
    pub params: Option<DerivedParams>,
    pub stats: SolverStats,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrajectoryResult {
    pub times: Vec<f64>,
    #[serde(skip)]
    pub states: Option<Vec<StateDensity>>,
    pub observables: BTreeMap<String, Vec<f64>>,
    pub metadata: TrajectoryMetadata,
}

impl TrajectoryResult {
    pub fn series(&self, name: &str) -> Option<&[f64]> {
        self.observables.get(name).map(|v| v.as_slice())
    }
}

// Dormand–Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// Fifth- minus fourth-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

struct Workspace {
    k: [Vec<C64>; 7],
    y_stage: Vec<C64>,
    y_new: Vec<C64>,
    scratch: Vec<C64>,
}

impl Workspace {
    fn new(n: usize) -> Self {
        let z = || vec![ZERO; n];
        Self {
            k: [z(), z(), z(), z(), z(), z(), z()],
            y_stage: z(),
            y_new: z(),
            scratch: z(),
        }
    }
}

fn stage(y: &[C64], h: f64, terms: &[(f64, &[C64])], out: &mut [C64]) {
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = ZERO;
        for (c, k) in terms {
            acc += k[i] * *c;
        }
        *o = y[i] + acc * h;
    }
}

/// Integrates the master equation and hands every sampled state to `observer`. Sampled
/// states are symmetrized and checked for positivity before being observed.
pub fn evolve_master_with<F>(
    h: &TimeDependentOperator,
    diss: &LindbladSpec,
    rho0: &StateDensity,
    cfg: &SolverConfig,
    mut observer: F,
) -> Result<SolverStats>
where
    F: FnMut(&StateDensity) -> Result<()>,
{
    cfg.validate(rho0.time)?;
    if rho0.dim() != h.dim {
        return Err(Error::DimensionMismatch {
            left: rho0.dim(),
            right: h.dim,
        });
    }
    let lv = Liouvillian::new(h, diss)?;
    let n = rho0.dim() * rho0.dim();
    let mut ws = Workspace::new(n);
    let mut y: Vec<C64> = rho0.matrix.as_slice().to_vec();
    let mut t = rho0.time;
    let mut stats = SolverStats {
        smallest_step: f64::INFINITY,
        ..SolverStats::default()
    };
    let mut h_step = cfg.max_step.min(0.01);
    let mut fsal_valid = false;

    for (sample_index, &t_sample) in cfg.sample_times.iter().enumerate() {
        while t_sample - t > 1e-12 * t_sample.abs().max(1.0) {
            let remaining = t_sample - t;
            match cfg.method {
                Method::FixedRk4 => {
                    let step = cfg.max_step.min(remaining);
                    rk4_step(&lv, t, step, &mut y, &mut ws);
                    stats.rhs_evaluations += 4;
                    stats.accepted_steps += 1;
                    stats.smallest_step = stats.smallest_step.min(step);
                    stats.largest_step = stats.largest_step.max(step);
                    t += step;
                }
                Method::AdaptiveRk => {
                    if !fsal_valid {
                        lv.apply(t, &y, &mut ws.k[0], &mut ws.scratch);
                        stats.rhs_evaluations += 1;
                        fsal_valid = true;
                    }
                    let landing = h_step >= remaining;
                    let step = if landing { remaining } else { h_step.min(cfg.max_step) };
                    let err = dp_step(&lv, t, step, &y, &mut ws, cfg);
                    stats.rhs_evaluations += 6;
                    let factor = if err == 0.0 {
                        5.0
                    } else {
                        (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                    };
                    if err <= 1.0 {
                        t = if landing { t_sample } else { t + step };
                        std::mem::swap(&mut y, &mut ws.y_new);
                        ws.k.swap(0, 6);
                        stats.accepted_steps += 1;
                        stats.smallest_step = stats.smallest_step.min(step);
                        stats.largest_step = stats.largest_step.max(step);
                        // A landing step may be artificially short; keep the previous proposal.
                        let proposal = (step * factor).min(cfg.max_step);
                        h_step = if landing { h_step.max(proposal) } else { proposal };
                    } else {
                        stats.rejected_steps += 1;
                        h_step = step * factor.min(1.0);
                        if h_step < cfg.min_step {
                            return Err(Error::Stiffness { t, h: h_step });
                        }
                    }
                    if !y.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
                        return Err(Error::Stiffness { t, h: step });
                    }
                }
            }
        }
        t = t_sample;
        let mut state = StateDensity::new(
            rho0.space,
            OperatorMatrix::from_column_slice(rho0.dim(), rho0.dim(), &y),
            rho0.frame,
            t,
        )?;
        state.symmetrize();
        y.copy_from_slice(state.matrix.as_slice());
        fsal_valid = false;
        stats.max_trace_error = stats.max_trace_error.max((state.trace() - ONE).norm());
        if cfg.positivity_stride > 0 && sample_index % cfg.positivity_stride == 0 {
            check_positivity(&state, cfg.positivity_tol)?;
        }
        observer(&state)?;
    }
    if stats.smallest_step == f64::INFINITY {
        stats.smallest_step = 0.0;
    }
    Ok(stats)
}

/// Cheap positivity test by Cholesky of `ρ + tol·1`, with an eigenvalue diagnosis on failure.
fn check_positivity(state: &StateDensity, tol: f64) -> Result<()> {
    let shifted = &state.matrix + qops::identity(state.dim()) * C64::from(tol);
    if shifted.cholesky().is_some() {
        return Ok(());
    }
    let (vals, _) = qops::herm_eig(&state.matrix)?;
    let min = vals.first().copied().unwrap_or(0.0);
    if min < -tol {
        return Err(Error::Positivity {
            t: state.time,
            min_eigenvalue: min,
        });
    }
    Ok(())
}

fn rk4_step(lv: &Liouvillian, t: f64, h: f64, y: &mut [C64], ws: &mut Workspace) {
    let [k1, k2, k3, k4, ..] = &mut ws.k;
    lv.apply(t, y, k1, &mut ws.scratch);
    stage(y, h, &[(0.5, k1)], &mut ws.y_stage);
    lv.apply(t + h / 2.0, &ws.y_stage, k2, &mut ws.scratch);
    stage(y, h, &[(0.5, k2)], &mut ws.y_stage);
    lv.apply(t + h / 2.0, &ws.y_stage, k3, &mut ws.scratch);
    stage(y, h, &[(1.0, k3)], &mut ws.y_stage);
    lv.apply(t + h, &ws.y_stage, k4, &mut ws.scratch);
    for i in 0..y.len() {
        y[i] += (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * (h / 6.0);
    }
}

/// One Dormand–Prince step from `(t, y)` assuming `ws.k[0] = f(t, y)`. Leaves the
/// candidate in `ws.y_new`, its derivative in `ws.k[6]`, and returns the scaled error norm.
fn dp_step(lv: &Liouvillian, t: f64, h: f64, y: &[C64], ws: &mut Workspace, cfg: &SolverConfig) -> f64 {
    let [k1, k2, k3, k4, k5, k6, k7] = &mut ws.k;
    stage(y, h, &[(A21, k1)], &mut ws.y_stage);
    lv.apply(t + C2 * h, &ws.y_stage, k2, &mut ws.scratch);
    stage(y, h, &[(A31, k1), (A32, k2)], &mut ws.y_stage);
    lv.apply(t + C3 * h, &ws.y_stage, k3, &mut ws.scratch);
    stage(y, h, &[(A41, k1), (A42, k2), (A43, k3)], &mut ws.y_stage);
    lv.apply(t + C4 * h, &ws.y_stage, k4, &mut ws.scratch);
    stage(y, h, &[(A51, k1), (A52, k2), (A53, k3), (A54, k4)], &mut ws.y_stage);
    lv.apply(t + C5 * h, &ws.y_stage, k5, &mut ws.scratch);
    stage(y, h, &[(A61, k1), (A62, k2), (A63, k3), (A64, k4), (A65, k5)], &mut ws.y_stage);
    lv.apply(t + h, &ws.y_stage, k6, &mut ws.scratch);
    stage(y, h, &[(B1, k1), (B3, k3), (B4, k4), (B5, k5), (B6, k6)], &mut ws.y_new);
    lv.apply(t + h, &ws.y_new, k7, &mut ws.scratch);
    let mut acc = 0.0;
    for i in 0..y.len() {
        let e = (k1[i] * E1 + k3[i] * E3 + k4[i] * E4 + k5[i] * E5 + k6[i] * E6 + k7[i] * E7) * h;
        let sc = cfg.abs_tol + cfg.rel_tol * y[i].norm().max(ws.y_new[i].norm());
        acc += (e.norm() / sc).powi(2);
    }
    (acc / y.len() as f64).sqrt()
}

/// Integrates the master equation and returns every sampled state.
pub fn evolve_master(
    h: &TimeDependentOperator,
    diss: &LindbladSpec,
    rho0: &StateDensity,
    cfg: &SolverConfig,
) -> Result<TrajectoryResult> {
    let mut states = Vec::with_capacity(cfg.sample_times.len());
    let stats = evolve_master_with(h, diss, rho0, cfg, |s| {
        states.push(s.clone());
        Ok(())
    })?;
    let number = if let Space::Joint(hs) = rho0.space {
        hs.number()
    } else {
        qops::number(rho0.dim())
    };
    let mean: Vec<f64> = states
        .iter()
        .map(|s| qops::expectation(&s.matrix, &number).map(|z| z.re))
        .collect::<Result<_>>()?;
    let mut observables = BTreeMap::new();
    observables.insert("mean_number".to_string(), mean);
    Ok(TrajectoryResult {
        times: cfg.sample_times.clone(),
        states: Some(states),
        observables,
        metadata: TrajectoryMetadata {
            frame: rho0.frame,
            fock_dim: rho0.space.fock_dim(),
            model: "custom".into(),
            params: None,
            stats,
        },
    })
}

/// Projective qubit measurement outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QubitOutcome {
    /// σ̄_x = +1, i.e. (|g⟩ + |e⟩)/√2.
    PlusX,
    MinusX,
    G,
    E,
}

impl QubitOutcome {
    pub fn ket(self) -> StateVector {
        match self {
            QubitOutcome::PlusX => qubit::plus_x(),
            QubitOutcome::MinusX => qubit::minus_x(),
            QubitOutcome::G => qubit::ground(),
            QubitOutcome::E => qubit::excited(),
        }
    }
}

pub const MIN_POSTSELECTION_PROBABILITY: f64 = 1e-12;

/// Returns `(p, ρ_m)` with `p = Tr[Πρ]` and `ρ_m = Tr_q[ΠρΠ]/p` for the rank-one qubit
/// projector Π of `outcome`.
pub fn postselect_qubit(state: &StateDensity, outcome: QubitOutcome) -> Result<(f64, StateDensity)> {
    let Space::Joint(hs) = state.space else {
        return Err(Error::WrongSpace { expected: "joint" });
    };
    let v = outcome.ket();
    let nf = hs.fock_dim();
    let mut out = OperatorMatrix::zeros(nf, nf);
    for k in 0..nf {
        for n in 0..nf {
            let mut acc = ZERO;
            for q in 0..2 {
                for qp in 0..2 {
                    acc += v[q].conj() * state.matrix[(2 * n + q, 2 * k + qp)] * v[qp];
                }
            }
            out[(n, k)] = acc;
        }
    }
    let p = out.trace().re;
    if !(p > MIN_POSTSELECTION_PROBABILITY) {
        return Err(Error::ZeroProbability(p));
    }
    out /= C64::from(p);
    let mut rho = StateDensity::new(Space::Magnon { fock_dim: nf }, out, state.frame, state.time)?;
    rho.symmetrize();
    Ok((p, rho))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Driven qubit–magnon Hamiltonian with the full dissipator set.
    Full,
    /// Conditional squeezing Hamiltonian with the effective dissipators.
    Effective,
}

/// Frame in which the full model is integrated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FullFrame {
    /// Non-rotating dressed-basis Hamiltonian with the exact drive.
    Lab,
    /// Frame rotating at half the pump frequency, optionally keeping the 2ω_p drive terms.
    Rotating { counter_rotating: bool },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RunOptions {
    pub fock_dim: usize,
    pub full_frame: FullFrame,
    pub qubit_basis: QubitDissipatorBasis,
    pub outcome: QubitOutcome,
    /// Keep the post-selected magnon states in the result.
    pub store_states: bool,
    /// Abort with a truncation error once the top Fock level of the post-selected state
    /// holds more than this population.
    pub truncation_abort: Option<f64>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            fock_dim: 80,
            full_frame: FullFrame::Rotating {
                counter_rotating: false,
            },
            qubit_basis: QubitDissipatorBasis::Dressed,
            outcome: QubitOutcome::PlusX,
            store_states: false,
            truncation_abort: None,
        }
    }
}

/// Prepares `|0⟩ ⊗ qubit_init`, evolves under the chosen model, and at every sample moves
/// the state into the frame of the conditional squeezing Hamiltonian, post-selects the
/// qubit and records `zeta_sq`, `squeezing_db`, `mean_number`, `probability` and `angle`.
/// Post-selected magnon states are tagged with the drive-interaction frame; for the full
/// model the magnon is additionally rotated by `e^{iΔ_eff t m†m}` so both models share the
/// same reference.
pub fn conditional_squeezing_run(
    params: &PhysicalParams,
    qubit_init: &StateVector,
    solver: &SolverConfig,
    model_kind: ModelKind,
    opts: &RunOptions,
) -> Result<TrajectoryResult> {
    let setup = RunSetup::new(params, qubit_init, solver, model_kind, opts)?;
    let mut series: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut states = Vec::new();
    let nf = opts.fock_dim;
    let stats = evolve_master_with(&setup.h, &setup.diss, &setup.rho0, solver, |s| {
        let aligned = setup.align(s)?;
        let (p, magnon) = setup.postselect(&aligned, opts.outcome)?;
        let q = min_quadrature_variance_of(&magnon.matrix);
        let push = |series: &mut BTreeMap<String, Vec<f64>>, k: &str, v: f64| {
            series.entry(k.to_string()).or_default().push(v)
        };
        push(&mut series, "zeta_sq", q.zeta_sq);
        push(&mut series, "squeezing_db", squeezing_db(q.zeta_sq)?);
        push(&mut series, "mean_number", q.mean_number);
        push(&mut series, "probability", p);
        push(&mut series, "angle", q.angle);
        let top = magnon.matrix[(nf - 1, nf - 1)].re;
        push(&mut series, "top_level_population", top);
        if let Some(limit) = opts.truncation_abort {
            if top > limit {
                return Err(Error::TruncationInsufficient { fock_dim: nf, tail: top });
            }
        }
        if opts.store_states {
            states.push(magnon);
        }
        Ok(())
    })?;
    Ok(TrajectoryResult {
        times: solver.sample_times.clone(),
        states: opts.store_states.then_some(states),
        observables: series,
        metadata: setup.metadata(stats),
    })
}

/// Post-selected magnon states for several outcomes of one evolution.
#[derive(Debug, Clone)]
pub struct PostselectedSeries {
    pub outcome: QubitOutcome,
    pub probabilities: Vec<f64>,
    pub states: Vec<StateDensity>,
}

/// Same evolution as [`conditional_squeezing_run`]; at every sample the qubit is projected
/// on each of `outcomes` (the `outcome` field of `opts` is ignored).
pub fn postselected_states(
    params: &PhysicalParams,
    qubit_init: &StateVector,
    solver: &SolverConfig,
    model_kind: ModelKind,
    opts: &RunOptions,
    outcomes: &[QubitOutcome],
) -> Result<(Vec<PostselectedSeries>, TrajectoryMetadata)> {
    let setup = RunSetup::new(params, qubit_init, solver, model_kind, opts)?;
    let mut out: Vec<PostselectedSeries> = outcomes
        .iter()
        .map(|&outcome| PostselectedSeries {
            outcome,
            probabilities: Vec::new(),
            states: Vec::new(),
        })
        .collect();
    let stats = evolve_master_with(&setup.h, &setup.diss, &setup.rho0, solver, |s| {
        let aligned = setup.align(s)?;
        for series in out.iter_mut() {
            let (p, magnon) = setup.postselect(&aligned, series.outcome)?;
            series.probabilities.push(p);
            series.states.push(magnon);
        }
        Ok(())
    })?;
    Ok((out, setup.metadata(stats)))
}

struct RunSetup {
    d: DerivedParams,
    model_kind: ModelKind,
    fock_dim: usize,
    h: TimeDependentOperator,
    diss: LindbladSpec,
    rho0: StateDensity,
}

impl RunSetup {
    fn new(
        params: &PhysicalParams,
        qubit_init: &StateVector,
        solver: &SolverConfig,
        model_kind: ModelKind,
        opts: &RunOptions,
    ) -> Result<Self> {
        let d = model::derive(params)?;
        let hs = HilbertSpace::new(opts.fock_dim)?;
        let ket = qops::kron_vec(&qops::fock_ket(opts.fock_dim, 0), qubit_init);
        let (h, diss, frame) = match model_kind {
            ModelKind::Effective => (
                model::cs_hamiltonian(&d, &hs),
                build_dissipators_effective(&d, &hs)?,
                Frame::DriveInteraction,
            ),
            ModelKind::Full => {
                let diss = build_dissipators_full(&d, &hs, opts.qubit_basis)?;
                match opts.full_frame {
                    FullFrame::Lab => (model::tot_hamiltonian(&d, &hs), diss, Frame::Lab),
                    FullFrame::Rotating { counter_rotating } => (
                        model::rot_hamiltonian(&d, &hs, counter_rotating),
                        diss,
                        Frame::RotatingHalfPump,
                    ),
                }
            }
        };
        let t0 = solver.sample_times.first().copied().unwrap_or(0.0).min(0.0);
        let rho0 = StateDensity::pure(Space::Joint(hs), &ket, frame, t0)?;
        Ok(Self {
            d,
            model_kind,
            fock_dim: opts.fock_dim,
            h,
            diss,
            rho0,
        })
    }

    /// Moves a sampled state into the drive-interaction frame.
    fn align(&self, s: &StateDensity) -> Result<StateDensity> {
        let mut aligned = s.clone();
        if aligned.frame == Frame::Lab {
            aligned = model::frame_transform(&aligned, Frame::RotatingHalfPump, &self.d)?;
        }
        if aligned.frame == Frame::RotatingHalfPump {
            aligned = model::frame_transform(&aligned, Frame::DriveInteraction, &self.d)?;
        }
        Ok(aligned)
    }

    fn postselect(&self, aligned: &StateDensity, outcome: QubitOutcome) -> Result<(f64, StateDensity)> {
        let (p, mut magnon) = postselect_qubit(aligned, outcome)?;
        if self.model_kind == ModelKind::Full {
            rotate_magnon(&mut magnon.matrix, self.d.delta_eff * magnon.time);
        }
        Ok((p, magnon))
    }

    fn metadata(&self, stats: SolverStats) -> TrajectoryMetadata {
        TrajectoryMetadata {
            frame: Frame::DriveInteraction,
            fock_dim: self.fock_dim,
            model: match self.model_kind {
                ModelKind::Full => "full".into(),
                ModelKind::Effective => "effective".into(),
            },
            params: Some(self.d),
            stats,
        }
    }
}

/// `ρ ← e^{iφ m†m} ρ e^{−iφ m†m}` on a magnon-only matrix.
pub fn rotate_magnon(rho: &mut OperatorMatrix, phi: f64) {
    let n = rho.nrows();
    for k in 0..n {
        for j in 0..n {
            rho[(j, k)] *= (I * (j as f64 - k as f64) * phi).exp();
        }
    }
}

/// Static Hamiltonian helper used by tests and scenarios.
pub fn static_operator(h: OperatorMatrix, frame: Frame) -> TimeDependentOperator {
    let mut op = TimeDependentOperator::new(h.nrows(), frame);
    op.push(h, ONE, 0.0);
    op
}

/// `ρ_m ⊗ |v⟩⟨v|`.
pub fn product_state(rho_m: &OperatorMatrix, v: &StateVector) -> OperatorMatrix {
    kron(rho_m, &(v * v.adjoint()))
}
