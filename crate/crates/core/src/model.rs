//! Hamiltonians of the driven flux-qubit / Kittel-mode system in each frame, the
//! second-order effective-Hamiltonian construction, and the analytic conditional
//! squeezing propagator.
//!
//! Internally every frequency is angular (rad/ns) and every time is in ns.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use serde::{Deserialize, Serialize};

use crate::constants::bose_occupation;
use crate::error::{Error, Result};
use crate::qops::{
    self, commutator, expm_anti_hermitian, identity, kron, qubit, Frame, HilbertSpace,
    OperatorMatrix, Space, StateDensity, C64, I, ONE, ZERO,
};

pub use crate::qops::Frame as FrameTag;

const TWO_PI: f64 = 2.0 * PI;

/// Below this |Δ_eff| (rad/ns) the squeezing parameter uses its resonant limit.
pub const RESONANT_DETUNING_THRESHOLD: f64 = 1e-9;

/// Experimental knobs, in the units named by each field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    /// Kittel-mode frequency ω_m/2π (GHz).
    pub omega_m_ghz: f64,
    /// Qubit splitting ν/2π (GHz).
    pub nu_ghz: f64,
    /// Drive frequency ω_p/2π (GHz).
    pub omega_p_ghz: f64,
    /// Drive amplitude Ω/2π (GHz).
    pub drive_ghz: f64,
    /// Drive phase φ (rad).
    pub phi: f64,
    /// Bare coupling g/2π (GHz).
    pub g_ghz: f64,
    /// Flux angle θ (rad).
    pub theta: f64,
    /// Magnon relaxation κ/2π (MHz).
    pub kappa_mhz: f64,
    /// Qubit relaxation γ/2π (kHz).
    pub gamma_khz: f64,
    /// Qubit pure dephasing γ_φ/2π (kHz).
    pub gamma_phi_khz: f64,
    /// Bath temperature (mK).
    pub temperature_mk: f64,
    /// Optional override of the renormalized detuning Δ_eff (rad/ns).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_eff_override: Option<f64>,
}

impl PhysicalParams {
    /// The working point used for the squeezing figures.
    pub fn working_point() -> Self {
        Self {
            omega_m_ghz: 1.513,
            nu_ghz: 3.0,
            omega_p_ghz: 3.002,
            drive_ghz: 0.5,
            phi: PI,
            g_ghz: 0.15,
            theta: PI / 4.0,
            kappa_mhz: 0.5,
            gamma_khz: 3.0,
            gamma_phi_khz: 3.0,
            temperature_mk: 10.0,
            delta_eff_override: None,
        }
    }

    /// Same parameters with every dissipation channel switched off.
    pub fn without_dissipation(mut self) -> Self {
        self.kappa_mhz = 0.0;
        self.gamma_khz = 0.0;
        self.gamma_phi_khz = 0.0;
        self
    }

    pub fn with_delta_eff(mut self, delta_eff: f64) -> Self {
        self.delta_eff_override = Some(delta_eff);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let rates = [
            ("kappa", self.kappa_mhz),
            ("gamma", self.gamma_khz),
            ("gamma_phi", self.gamma_phi_khz),
        ];
        for (name, r) in rates {
            if !(r >= 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be >= 0, got {r}")));
            }
        }
        if !(self.omega_p_ghz > 0.0) {
            return Err(Error::InvalidParameter("omega_p must be > 0".into()));
        }
        if !(self.theta > 0.0 && self.theta < PI / 2.0) {
            return Err(Error::InvalidParameter(format!(
                "theta must lie in (0, pi/2), got {}",
                self.theta
            )));
        }
        let finite = [
            self.omega_m_ghz,
            self.nu_ghz,
            self.drive_ghz,
            self.phi,
            self.g_ghz,
            self.temperature_mk,
        ];
        if finite.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("non-finite parameter".into()));
        }
        Ok(())
    }
}

/// Angular-frequency quantities derived from [`PhysicalParams`], all in rad/ns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedParams {
    pub omega_m: f64,
    pub nu: f64,
    pub omega_p: f64,
    pub drive: f64,
    pub phi: f64,
    pub g: f64,
    pub theta: f64,
    pub g_x: f64,
    pub g_z: f64,
    pub delta_m: f64,
    pub delta_nu: f64,
    /// Conditional squeezing strength −2 g_x g_z / ω_p.
    pub g_cs: f64,
    pub delta_eff: f64,
    pub n_bar_m: f64,
    pub n_bar_q: f64,
    pub kappa: f64,
    pub gamma: f64,
    pub gamma_phi: f64,
    /// Set when the temperature was non-positive and occupations were forced to zero.
    pub temperature_warning: bool,
}

/// Static shift 8 g_x² / (3 ω_p) on the first line of the second-order Hamiltonian.
pub fn static_shift(g_x: f64, omega_p: f64) -> f64 {
    8.0 * g_x * g_x / (3.0 * omega_p)
}

pub fn derive(p: &PhysicalParams) -> Result<DerivedParams> {
    p.validate()?;
    let ang = |ghz: f64| TWO_PI * ghz;
    let omega_m = ang(p.omega_m_ghz);
    let nu = ang(p.nu_ghz);
    let omega_p = ang(p.omega_p_ghz);
    let g = ang(p.g_ghz);
    let g_x = g * p.theta.sin();
    let g_z = g * p.theta.cos();
    let delta_m = omega_m - omega_p / 2.0;
    let g_cs = -2.0 * g_x * g_z / omega_p;
    let delta_eff = p
        .delta_eff_override
        .unwrap_or(delta_m - static_shift(g_x, omega_p));
    let temperature_warning = p.temperature_mk <= 0.0;
    if temperature_warning {
        log::warn!("non-positive temperature {} mK; thermal occupations set to zero", p.temperature_mk);
    }
    let t_k = p.temperature_mk * 1e-3;
    Ok(DerivedParams {
        omega_m,
        nu,
        omega_p,
        drive: ang(p.drive_ghz),
        phi: p.phi,
        g,
        theta: p.theta,
        g_x,
        g_z,
        delta_m,
        delta_nu: nu - omega_p,
        g_cs,
        delta_eff,
        n_bar_m: bose_occupation(p.omega_m_ghz * 1e9, t_k),
        n_bar_q: bose_occupation(p.nu_ghz * 1e9, t_k),
        kappa: TWO_PI * p.kappa_mhz * 1e-3,
        gamma: TWO_PI * p.gamma_khz * 1e-6,
        gamma_phi: TWO_PI * p.gamma_phi_khz * 1e-6,
        temperature_warning,
    })
}

/// One term `amplitude · e^{i ω t} · op` of a time-dependent operator.
#[derive(Debug, Clone)]
pub struct OperatorTerm {
    pub op: OperatorMatrix,
    pub amplitude: C64,
    /// Angular frequency ω (rad/ns); zero for static terms.
    pub omega: f64,
}

impl OperatorTerm {
    pub fn coefficient(&self, t: f64) -> C64 {
        if self.omega == 0.0 {
            self.amplitude
        } else {
            self.amplitude * (I * self.omega * t).exp()
        }
    }
}

/// Operator-valued function of time built from harmonically modulated terms.
#[derive(Debug, Clone)]
pub struct TimeDependentOperator {
    pub dim: usize,
    pub frame: Frame,
    pub terms: Vec<OperatorTerm>,
}

impl TimeDependentOperator {
    pub fn new(dim: usize, frame: Frame) -> Self {
        Self {
            dim,
            frame,
            terms: Vec::new(),
        }
    }

    pub fn push_static(&mut self, op: OperatorMatrix, amplitude: f64) -> &mut Self {
        self.push(op, C64::from(amplitude), 0.0)
    }

    pub fn push(&mut self, op: OperatorMatrix, amplitude: C64, omega: f64) -> &mut Self {
        debug_assert_eq!(op.nrows(), self.dim);
        if amplitude != ZERO {
            self.terms.push(OperatorTerm {
                op,
                amplitude,
                omega,
            });
        }
        self
    }

    /// `amplitude · e^{iωt} op + h.c.`
    pub fn push_with_conjugate(&mut self, op: OperatorMatrix, amplitude: C64, omega: f64) -> &mut Self {
        let adj = op.adjoint();
        self.push(op, amplitude, omega);
        self.push(adj, amplitude.conj(), -omega)
    }

    pub fn at(&self, t: f64) -> OperatorMatrix {
        let mut out = OperatorMatrix::zeros(self.dim, self.dim);
        for term in &self.terms {
            out += &term.op * term.coefficient(t);
        }
        out
    }

    pub fn is_time_independent(&self) -> bool {
        self.terms.iter().all(|t| t.omega == 0.0)
    }

    /// Largest |ω| among the terms.
    pub fn max_frequency(&self) -> f64 {
        self.terms.iter().fold(0.0, |m, t| m.max(t.omega.abs()))
    }
}

/// Lab-frame Hamiltonian in the persistent-current qubit basis, including the drive
/// `Ω cos(ω_p t + φ)(σ_x − σ_z)/√2`.
pub fn lab_hamiltonian(d: &DerivedParams, space: &HilbertSpace) -> TimeDependentOperator {
    let mut h = TimeDependentOperator::new(space.dim(), Frame::Lab);
    let a = space.annihilation();
    let x = &a + a.adjoint();
    let sz = space.qubit_op(&qubit::pauli_z());
    let sx = space.qubit_op(&qubit::pauli_x());
    let eps_z = d.nu * d.theta.cos();
    let eps_x = d.nu * d.theta.sin();
    h.push_static(space.number(), d.omega_m)
        .push_static(sz.clone(), -eps_z / 2.0)
        .push_static(sx.clone(), -eps_x / 2.0)
        .push_static(&x * &sz, d.g);
    let drive_op = (&sx - &sz) * C64::from(FRAC_1_SQRT_2);
    // Ω cos(ω_p t + φ) = (Ω/2) e^{iφ} e^{iω_p t} + c.c.
    h.push_with_conjugate(drive_op, C64::from_polar(d.drive / 2.0, d.phi), d.omega_p);
    h
}

pub fn build_h_lab(d: &DerivedParams, space: &HilbertSpace, t: f64) -> OperatorMatrix {
    lab_hamiltonian(d, space).at(t)
}

/// Unitary mapping persistent-current-basis operators to the dressed basis:
/// `O_dressed = W O_pc W†`. It combines the qubit rotation by θ with magnon parity, the
/// combination under which the coupling and drive take the dressed-basis form.
pub fn dressed_rotation(space: &HilbertSpace, theta: f64) -> OperatorMatrix {
    let (s, c) = (theta / 2.0).sin_cos();
    let t = OperatorMatrix::from_row_slice(2, 2, &[C64::from(c), C64::from(s), C64::from(-s), C64::from(c)]);
    kron(&qops::parity_operator(space.fock_dim()), &t)
}

/// Dressed-basis lab-frame Hamiltonian
/// `ω_m m†m + (ν/2)σ̄_z + g_x(m+m†)σ̄_x + g_z(m+m†)σ̄_z + Ω cos(ω_p t + φ)σ̄_x`.
/// At φ = π the drive reads −Ω cos(ω_p t)σ̄_x.
pub fn tot_hamiltonian(d: &DerivedParams, space: &HilbertSpace) -> TimeDependentOperator {
    let mut h = TimeDependentOperator::new(space.dim(), Frame::Lab);
    let a = space.annihilation();
    let x = &a + a.adjoint();
    let sx = space.qubit_op(&qubit::sx());
    let sz = space.qubit_op(&qubit::sz());
    h.push_static(space.number(), d.omega_m)
        .push_static(sz.clone(), d.nu / 2.0)
        .push_static(&x * &sx, d.g_x)
        .push_static(&x * &sz, d.g_z);
    h.push_with_conjugate(sx, C64::from_polar(d.drive / 2.0, d.phi), d.omega_p);
    h
}

pub fn build_h_tot(d: &DerivedParams, space: &HilbertSpace, t: f64) -> OperatorMatrix {
    tot_hamiltonian(d, space).at(t)
}

/// Hamiltonian in the frame rotating at ω_p/2 (magnon) and ω_p (qubit). With
/// `keep_counter_rotating` the drive components at ±2ω_p are retained and the result is
/// exactly equivalent to [`tot_hamiltonian`]; without it the drive reduces to the resonant
/// −(Ω/2)σ̄_x (for φ = π).
pub fn rot_hamiltonian(
    d: &DerivedParams,
    space: &HilbertSpace,
    keep_counter_rotating: bool,
) -> TimeDependentOperator {
    let mut h = TimeDependentOperator::new(space.dim(), Frame::RotatingHalfPump);
    let a = space.annihilation();
    let sp = space.qubit_op(&qubit::sp());
    let sm = space.qubit_op(&qubit::sm());
    let sz = space.qubit_op(&qubit::sz());
    let wp = d.omega_p;
    h.push_static(space.number(), d.delta_m)
        .push_static(sz.clone(), d.delta_nu / 2.0);
    // g_x (m σ̄₋ e^{−3iω_p t/2} + m σ̄₊ e^{iω_p t/2} + h.c.)
    h.push_with_conjugate(&a * &sm, C64::from(d.g_x), -1.5 * wp);
    h.push_with_conjugate(&a * &sp, C64::from(d.g_x), 0.5 * wp);
    // g_z (m e^{−iω_p t/2} + h.c.) σ̄_z
    h.push_with_conjugate(&a * &sz, C64::from(d.g_z), -0.5 * wp);
    // Drive: Ω cos(ω_p t + φ)(σ̄₊ e^{iω_p t} + σ̄₋ e^{−iω_p t}).
    h.push_with_conjugate(sm.clone(), C64::from_polar(d.drive / 2.0, d.phi), 0.0);
    if keep_counter_rotating {
        h.push_with_conjugate(sp, C64::from_polar(d.drive / 2.0, d.phi), 2.0 * wp);
    }
    h
}

pub fn build_h_rot(d: &DerivedParams, space: &HilbertSpace, t: f64) -> OperatorMatrix {
    rot_hamiltonian(d, space, false).at(t)
}

/// Output of [`james_effective`].
#[derive(Debug, Clone)]
pub struct EffectiveHamiltonian {
    /// Σ_m [h†_m, h_m] / δ_m.
    pub static_part: OperatorMatrix,
    /// Cross terms `(op, ω)` standing for `op · e^{iωt}`: for each pair m < n,
    /// `[h†_m, h_n]/δ̄_mn` at ω = δ_m − δ_n together with its adjoint at −ω.
    pub oscillating: Vec<(OperatorMatrix, f64)>,
}

impl EffectiveHamiltonian {
    /// Static part plus every cross term whose frequency is below `tol`.
    pub fn secular(&self, tol: f64) -> OperatorMatrix {
        let mut out = self.static_part.clone();
        for (op, w) in &self.oscillating {
            if w.abs() < tol {
                out += op;
            }
        }
        out
    }

    pub fn as_time_dependent(&self, frame: Frame) -> TimeDependentOperator {
        let mut h = TimeDependentOperator::new(self.static_part.nrows(), frame);
        h.push(self.static_part.clone(), ONE, 0.0);
        for (op, w) in &self.oscillating {
            h.push(op.clone(), ONE, *w);
        }
        h
    }
}

/// Second-order time-averaged Hamiltonian for `H(t) = Σ_m (h†_m e^{iδ_m t} + h.c.)`.
/// Each input pair is `(h†_m, δ_m)`.
pub fn james_effective(terms: &[(OperatorMatrix, f64)]) -> Result<EffectiveHamiltonian> {
    let dim = terms
        .first()
        .map(|(op, _)| op.nrows())
        .ok_or_else(|| Error::InvalidParameter("no terms".into()))?;
    for (k, (op, delta)) in terms.iter().enumerate() {
        if *delta == 0.0 || !delta.is_finite() {
            return Err(Error::SingularDetuning { index: k });
        }
        if op.nrows() != dim {
            return Err(Error::DimensionMismatch {
                left: op.nrows(),
                right: dim,
            });
        }
    }
    let mut static_part = OperatorMatrix::zeros(dim, dim);
    for (hd, delta) in terms {
        let h = hd.adjoint();
        static_part += commutator(hd, &h) / C64::from(*delta);
    }
    let mut oscillating = Vec::new();
    for m in 0..terms.len() {
        for n in (m + 1)..terms.len() {
            let (hd_m, d_m) = (&terms[m].0, terms[m].1);
            let (hd_n, d_n) = (&terms[n].0, terms[n].1);
            let mean = 0.5 * (d_m + d_n);
            if mean == 0.0 {
                return Err(Error::SingularDetuning { index: n });
            }
            let op = commutator(hd_m, &hd_n.adjoint()) / C64::from(mean);
            let adj = op.adjoint();
            oscillating.push((op, d_m - d_n));
            oscillating.push((adj, d_n - d_m));
        }
    }
    Ok(EffectiveHamiltonian {
        static_part,
        oscillating,
    })
}

/// The three off-resonant terms `(h†_m, δ_m)` of the rotating-frame Hamiltonian:
/// g_x m σ̄₊ at ω_p/2, g_x m† σ̄₊ at 3ω_p/2 and g_z m† σ̄_z at ω_p/2.
pub fn off_resonant_terms(d: &DerivedParams, space: &HilbertSpace) -> Vec<(OperatorMatrix, f64)> {
    let a = space.annihilation();
    let ad = a.adjoint();
    let sp = space.qubit_op(&qubit::sp());
    let sz = space.qubit_op(&qubit::sz());
    vec![
        ((&a * &sp) * C64::from(d.g_x), d.omega_p / 2.0),
        ((&ad * &sp) * C64::from(d.g_x), 1.5 * d.omega_p),
        ((&ad * &sz) * C64::from(d.g_z), d.omega_p / 2.0),
    ]
}

/// Effective static Hamiltonian in the rotating frame:
/// `(Δ_m − s) m†m + (Δ_ν/2)σ̄_z + s(2m†m + 1)|e⟩⟨e| − (4g_xg_z/ω_p)(m†²σ̄₋ + m²σ̄₊) − (Ω/2)σ̄_x`
/// with `s = 8g_x²/(3ω_p)`. The drive term carries the phase φ (−(Ω/2)σ̄_x at φ = π).
pub fn build_h_eff(d: &DerivedParams, space: &HilbertSpace) -> OperatorMatrix {
    let a = space.annihilation();
    let ad = a.adjoint();
    let n = space.number();
    let e = space.qubit_op(&qubit::excited_projector());
    let sp = space.qubit_op(&qubit::sp());
    let sm = space.qubit_op(&qubit::sm());
    let sz = space.qubit_op(&qubit::sz());
    let shift = static_shift(d.g_x, d.omega_p);
    let two_magnon = -4.0 * d.g_x * d.g_z / d.omega_p;
    let id = identity(space.dim());
    let drive = C64::from_polar(d.drive / 2.0, d.phi);
    &n * C64::from(d.delta_m - shift)
        + &sz * C64::from(d.delta_nu / 2.0)
        + (&n * C64::from(2.0) + id) * &e * C64::from(shift)
        + (&ad * &ad * &sm + &a * &a * &sp) * C64::from(two_magnon)
        + &sm * drive
        + &sp * drive.conj()
}

/// Conditional squeezing Hamiltonian in the drive and Δ_eff interaction pictures:
/// `g_cs (m² e^{−2iΔ_eff t} + m†² e^{2iΔ_eff t}) σ̄_x`.
pub fn cs_hamiltonian(d: &DerivedParams, space: &HilbertSpace) -> TimeDependentOperator {
    let mut h = TimeDependentOperator::new(space.dim(), Frame::DriveInteraction);
    let a = space.annihilation();
    let sx = space.qubit_op(&qubit::sx());
    h.push_with_conjugate(&a * &a * &sx, C64::from(d.g_cs), -2.0 * d.delta_eff);
    h
}

pub fn build_h_cs(d: &DerivedParams, space: &HilbertSpace, t: f64) -> OperatorMatrix {
    cs_hamiltonian(d, space).at(t)
}

/// Squeezing parameter of the first-order propagator of [`cs_hamiltonian`] on the σ̄_x = +1
/// branch, `ξ(t) = g_cs (e^{2iΔ_eff t} − 1)/Δ_eff`, with the resonant limit `2i g_cs t` for
/// |Δ_eff| below [`RESONANT_DETUNING_THRESHOLD`]. At resonance `S(ξ(t))` is exact; for
/// Δ_eff ≠ 0 the neglected higher Magnus terms are of order g_cs²/Δ_eff.
pub fn squeezing_parameter(d: &DerivedParams, t: f64) -> C64 {
    squeezing_parameter_for(d.g_cs, d.delta_eff, t)
}

pub fn squeezing_parameter_for(g_cs: f64, delta_eff: f64, t: f64) -> C64 {
    if delta_eff.abs() < RESONANT_DETUNING_THRESHOLD {
        return 2.0 * I * g_cs * t;
    }
    let phase = 2.0 * delta_eff * t;
    // e^{iφ} − 1 = 2i sin(φ/2) e^{iφ/2}, which avoids cancellation for small φ.
    let num = 2.0 * I * (phase / 2.0).sin() * (I * phase / 2.0).exp();
    num * g_cs / delta_eff
}

/// `S(ξ) = exp[(ξ* m² − ξ m†²)/2]` on the truncated magnon space.
pub fn squeeze_operator(xi: C64, fock_dim: usize) -> Result<OperatorMatrix> {
    let a = qops::annihilation(fock_dim)?;
    let a2 = &a * &a;
    let gen = (&a2 * xi.conj() - a2.adjoint() * xi) * C64::from(0.5);
    expm_anti_hermitian(&gen)
}

#[derive(Debug, Clone)]
pub struct Propagator {
    pub matrix: OperatorMatrix,
    pub xi: C64,
    pub truncation_warning: bool,
}

/// `U(t) = |+⟩⟨+| ⊗ S(ξ(t)) + |−⟩⟨−| ⊗ S(−ξ(t))` in magnon ⊗ qubit order.
pub fn analytic_propagator(d: &DerivedParams, space: &HilbertSpace, t: f64) -> Result<Propagator> {
    let xi = squeezing_parameter(d, t);
    let nf = space.fock_dim();
    let plus = qubit::plus_x();
    let minus = qubit::minus_x();
    let p_plus = &plus * plus.adjoint();
    let p_minus = &minus * minus.adjoint();
    let matrix = kron(&squeeze_operator(xi, nf)?, &p_plus) + kron(&squeeze_operator(-xi, nf)?, &p_minus);
    let warn = xi.norm().sinh().powi(2) > nf as f64 / 6.0;
    if warn {
        log::warn!("squeezing |xi| = {:.3} is large for fock_dim {nf}", xi.norm());
    }
    Ok(Propagator {
        matrix,
        xi,
        truncation_warning: warn,
    })
}

/// Unitary `W` with `ρ_to = W ρ_from W†` for one of the supported frame steps:
/// lab ↔ rotating_half_pump and rotating_half_pump ↔ drive_interaction.
pub fn frame_unitary(
    from: Frame,
    to: Frame,
    t: f64,
    d: &DerivedParams,
    space: &Space,
) -> Result<OperatorMatrix> {
    use Frame::*;
    let dim = space.dim();
    let forward = match (from, to) {
        (a, b) if a == b => return Ok(identity(dim)),
        (Lab, RotatingHalfPump) | (RotatingHalfPump, Lab) => half_pump_rotation(t, d, space),
        (RotatingHalfPump, DriveInteraction) | (DriveInteraction, RotatingHalfPump) => {
            drive_rotation(t, d, space)
        }
        _ => return Err(Error::UnsupportedFrame { from, to }),
    };
    let inverse = matches!((from, to), (RotatingHalfPump, Lab) | (DriveInteraction, RotatingHalfPump));
    Ok(if inverse { forward.adjoint() } else { forward })
}

/// `exp[+i(m†m + σ̄_z) ω_p t/2]`, which takes lab-frame states to the rotating frame.
fn half_pump_rotation(t: f64, d: &DerivedParams, space: &Space) -> OperatorMatrix {
    let phase = d.omega_p * t / 2.0;
    let dim = space.dim();
    let mut u = OperatorMatrix::zeros(dim, dim);
    match space {
        Space::Joint(_) => {
            for i in 0..dim {
                let n = (i / 2) as f64;
                let z = if i % 2 == 0 { -1.0 } else { 1.0 };
                u[(i, i)] = (I * (n + z) * phase).exp();
            }
        }
        Space::Magnon { .. } => {
            for i in 0..dim {
                u[(i, i)] = (I * i as f64 * phase).exp();
            }
        }
    }
    u
}

/// `exp[−i(Ω/2)σ̄_x t]`, which takes rotating-frame states to the drive interaction picture.
fn drive_rotation(t: f64, d: &DerivedParams, space: &Space) -> OperatorMatrix {
    match space {
        Space::Joint(h) => {
            let (s, c) = (d.drive * t / 2.0).sin_cos();
            let q = qops::identity(2) * C64::from(c) - qubit::sx() * (I * s);
            h.qubit_op(&q)
        }
        Space::Magnon { fock_dim } => identity(*fock_dim),
    }
}

/// Re-express a state in another frame at its own time stamp.
pub fn frame_transform(state: &StateDensity, to: Frame, d: &DerivedParams) -> Result<StateDensity> {
    let u = frame_unitary(state.frame, to, state.time, d, &state.space)?;
    StateDensity::new(state.space, &u * &state.matrix * u.adjoint(), to, state.time)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qops::{hermiticity_error, max_abs, max_abs_diff};

    fn working() -> DerivedParams {
        derive(&PhysicalParams::working_point()).unwrap()
    }

    #[test]
    fn derived_working_point_numbers() {
        let d = working();
        assert!((d.delta_m / TWO_PI - 0.012).abs() < 1e-12, "Δ_m/2π = {}", d.delta_m / TWO_PI);
        assert!((d.g_x - d.g / 2f64.sqrt()).abs() < 1e-14);
        assert!((d.g_x - d.g_z).abs() < 1e-14);
        // g_cs/2π = −2 (g/√2)² / ω_p in GHz.
        let g_cs_mhz = d.g_cs / TWO_PI * 1e3;
        assert!((g_cs_mhz + 7.495).abs() < 0.01, "g_cs/2π = {g_cs_mhz} MHz");
        assert!((d.n_bar_m - 7.0e-4).abs() < 0.1e-4);
        assert!((d.n_bar_q - 5.6e-7).abs() < 0.1e-7);
        // Δ_eff default ≈ 2π × 2.0 MHz.
        assert!((d.delta_eff / TWO_PI * 1e3 - 2.0).abs() < 0.05);
        assert!(!d.temperature_warning);
    }

    #[test]
    fn zero_temperature_warns_and_zeroes_occupations() {
        let mut p = PhysicalParams::working_point();
        p.temperature_mk = 0.0;
        let d = derive(&p).unwrap();
        assert!(d.temperature_warning);
        assert_eq!(d.n_bar_m, 0.0);
        assert_eq!(d.n_bar_q, 0.0);
    }

    #[test]
    fn invalid_params_rejected() {
        let mut p = PhysicalParams::working_point();
        p.kappa_mhz = -1.0;
        assert!(derive(&p).is_err());
        let mut p = PhysicalParams::working_point();
        p.theta = PI / 2.0;
        assert!(derive(&p).is_err());
        let mut p = PhysicalParams::working_point();
        p.omega_p_ghz = 0.0;
        assert!(derive(&p).is_err());
    }

    #[test]
    fn all_builders_hermitian() {
        let d = working();
        let h = HilbertSpace::new(8).unwrap();
        for &t in &[0.0, 0.173, 1.9, 12.7] {
            for m in [
                build_h_lab(&d, &h, t),
                build_h_tot(&d, &h, t),
                build_h_rot(&d, &h, t),
                rot_hamiltonian(&d, &h, true).at(t),
                build_h_cs(&d, &h, t),
                build_h_eff(&d, &h),
            ] {
                assert!(hermiticity_error(&m) < 1e-12 * max_abs(&m).max(1.0));
            }
        }
    }

    #[test]
    fn decoupled_lab_spectrum() {
        let mut p = PhysicalParams::working_point();
        p.g_ghz = 0.0;
        p.drive_ghz = 0.0;
        let d = derive(&p).unwrap();
        let h = HilbertSpace::new(4).unwrap();
        let (vals, _) = qops::herm_eig(&build_h_lab(&d, &h, 0.3)).unwrap();
        let mut want: Vec<f64> = (0..4)
            .flat_map(|n| [n as f64 * d.omega_m - d.nu / 2.0, n as f64 * d.omega_m + d.nu / 2.0])
            .collect();
        want.sort_by(f64::total_cmp);
        for (a, b) in vals.iter().zip(&want) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn drive_sign_identity_at_phi_pi() {
        let d = working();
        let h = HilbertSpace::new(3).unwrap();
        let t = 0.37;
        let mut undriven = d;
        undriven.drive = 0.0;
        let drive = build_h_lab(&d, &h, t) - build_h_lab(&undriven, &h, t);
        let sx = h.qubit_op(&qubit::pauli_x());
        let sz = h.qubit_op(&qubit::pauli_z());
        let want = (sz - sx) * C64::from(d.drive * (d.omega_p * t).cos() / std::f64::consts::SQRT_2);
        assert!(max_abs_diff(&drive, &want) < 1e-12);
    }

    #[test]
    fn dressed_basis_identity_at_optimal_point() {
        let h = HilbertSpace::new(3).unwrap();
        let w = dressed_rotation(&h, PI / 4.0);
        let q = (h.qubit_op(&qubit::pauli_x()) - h.qubit_op(&qubit::pauli_z())) * C64::from(FRAC_1_SQRT_2);
        let mapped = &w * q * w.adjoint();
        assert!(max_abs_diff(&mapped, &h.qubit_op(&qubit::sx())) < 1e-14);
    }

    #[test]
    fn lab_hamiltonian_in_dressed_basis_matches_tot() {
        let d = working();
        let h = HilbertSpace::new(7).unwrap();
        let w = dressed_rotation(&h, d.theta);
        for &t in &[0.0, 0.41, 3.3, 17.05] {
            let lab = build_h_lab(&d, &h, t);
            let mapped = &w * lab * w.adjoint();
            let tot = build_h_tot(&d, &h, t);
            assert!(max_abs_diff(&mapped, &tot) < 1e-12, "t = {t}");
        }
    }

    #[test]
    fn tot_structure() {
        let d = working();
        let h = HilbertSpace::new(4).unwrap();
        let mut static_only = d;
        static_only.drive = 0.0;
        let drive = build_h_tot(&d, &h, 0.0) - build_h_tot(&static_only, &h, 0.0);
        let want = h.qubit_op(&qubit::sx()) * C64::from(-d.drive);
        assert!(max_abs_diff(&drive, &want) < 1e-12);

        let mut p = PhysicalParams::working_point();
        p.theta = PI / 2.0 - 1e-12;
        let dd = derive(&p).unwrap();
        assert!(dd.g_z.abs() < 1e-11);
    }

    #[test]
    fn rot_with_counter_rotating_terms_is_exact_frame_change() {
        // H_rot = V H_tot V† + i V̇ V† with V = exp[i(m†m + σ̄_z)ω_p t/2].
        let d = working();
        let h = HilbertSpace::new(6).unwrap();
        let space = Space::Joint(h);
        let k = (h.number() + h.qubit_op(&qubit::sz())) * C64::from(d.omega_p / 2.0);
        for &t in &[0.0, 0.29, 5.71] {
            let v = frame_unitary(Frame::Lab, Frame::RotatingHalfPump, t, &d, &space).unwrap();
            let mapped = &v * build_h_tot(&d, &h, t) * v.adjoint() - &k;
            let exact = rot_hamiltonian(&d, &h, true).at(t);
            assert!(max_abs_diff(&mapped, &exact) < 1e-11, "t = {t}");
            // Dropping only the e^{±2iω_p t} drive terms gives the RWA form.
            let rwa = build_h_rot(&d, &h, t);
            let sp = h.qubit_op(&qubit::sp());
            let cr = &sp * C64::from_polar(d.drive / 2.0, d.phi + 2.0 * d.omega_p * t);
            let cr = &cr + cr.adjoint();
            assert!(max_abs_diff(&(exact - cr), &rwa) < 1e-11);
        }
    }

    #[test]
    fn rot_static_part_and_decoupled_limit() {
        let mut p = PhysicalParams::working_point();
        p.g_ghz = 0.0;
        let d = derive(&p).unwrap();
        let h = HilbertSpace::new(5).unwrap();
        let want = h.number() * C64::from(d.delta_m)
            + h.qubit_op(&qubit::sz()) * C64::from(d.delta_nu / 2.0)
            - h.qubit_op(&qubit::sx()) * C64::from(d.drive / 2.0);
        assert!(max_abs_diff(&build_h_rot(&d, &h, 1.234), &want) < 1e-12);
    }

    /// Second-order expansion written out term by term.
    fn second_order_reference(d: &DerivedParams, h: &HilbertSpace) -> TimeDependentOperator {
        let a = h.annihilation();
        let ad = a.adjoint();
        let n = h.number();
        let e = h.qubit_op(&qubit::excited_projector());
        let sz = h.qubit_op(&qubit::sz());
        let sp = h.qubit_op(&qubit::sp());
        let sm = h.qubit_op(&qubit::sm());
        let wp = d.omega_p;
        let (gx, gz) = (d.g_x, d.g_z);
        let id = identity(h.dim());
        let mut r = TimeDependentOperator::new(h.dim(), Frame::RotatingHalfPump);
        let line1 = (&n * C64::from(2.0) * &e + &e - &n) * C64::from(static_shift(gx, wp));
        // c-number offset −2g_x²/(3ω_p) − 2g_z²/ω_p that the printed form omits.
        let offset = id.clone() * C64::from(-2.0 * gx * gx / (3.0 * wp) - 2.0 * gz * gz / wp);
        r.push(line1 + offset, ONE, 0.0);
        r.push(&a * &a * &sz * C64::from(gx * gx / wp), ONE, -wp);
        r.push(&ad * &ad * &sz * C64::from(gx * gx / wp), ONE, wp);
        let one_plus_2n = &id + &n * C64::from(2.0);
        r.push(&one_plus_2n * &sp * C64::from(-gx * gz / wp), ONE, wp);
        r.push(&one_plus_2n * &sm * C64::from(-gx * gz / wp), ONE, -wp);
        r.push((&ad * &ad * &sm + &a * &a * &sp) * C64::from(-4.0 * gx * gz / wp), ONE, 0.0);
        r
    }

    /// Entrywise comparison restricted to Fock indices below the top level.
    fn max_diff_below_edge(a: &OperatorMatrix, b: &OperatorMatrix, fock_dim: usize) -> f64 {
        let keep = 2 * (fock_dim - 1);
        let mut worst = 0.0_f64;
        for i in 0..keep {
            for j in 0..keep {
                worst = worst.max((a[(i, j)] - b[(i, j)]).norm());
            }
        }
        worst
    }

    #[test]
    fn james_reproduces_second_order_coefficients() {
        let d = working();
        let h = HilbertSpace::new(20).unwrap();
        let eff = james_effective(&off_resonant_terms(&d, &h)).unwrap();
        let got = eff.as_time_dependent(Frame::RotatingHalfPump);
        let want = second_order_reference(&d, &h);
        for &t in &[0.0, 0.11, 0.2503, 1.7] {
            let diff = max_diff_below_edge(&got.at(t), &want.at(t), h.fock_dim());
            assert!(diff < 1e-12, "t = {t}: {diff:e}");
        }
        // Frequencies present: 0 and ±ω_p only.
        for (_, w) in &eff.oscillating {
            assert!(w.abs() < 1e-12 || (w.abs() - d.omega_p).abs() < 1e-12);
        }
    }

    #[test]
    fn james_edge_cases() {
        let h = HilbertSpace::new(4).unwrap();
        let sz = h.qubit_op(&qubit::sz());
        // [σ̄_z, σ̄_z] = 0.
        let eff = james_effective(&[(sz.clone(), 1.3)]).unwrap();
        assert!(max_abs(&eff.static_part) < 1e-15);
        assert!(eff.oscillating.is_empty());
        assert!(matches!(
            james_effective(&[(sz.clone(), 0.0)]),
            Err(Error::SingularDetuning { index: 0 })
        ));
        // Two commuting terms: only the oscillating cross term [h†₁, h₂]/δ̄ appears.
        let n = h.number();
        let eff = james_effective(&[(n.clone(), 1.0), (sz.clone(), 3.0)]).unwrap();
        assert!(max_abs(&eff.static_part) < 1e-15);
        assert_eq!(eff.oscillating.len(), 2);
        assert!(eff.oscillating.iter().all(|(op, _)| max_abs(op) < 1e-15));
    }

    #[test]
    fn effective_hamiltonian_composition() {
        let d = working();
        let h = HilbertSpace::new(12).unwrap();
        let eff = james_effective(&off_resonant_terms(&d, &h)).unwrap();
        let offset = -2.0 * d.g_x * d.g_x / (3.0 * d.omega_p) - 2.0 * d.g_z * d.g_z / d.omega_p;
        let slow = h.number() * C64::from(d.delta_m) + h.qubit_op(&qubit::sz()) * C64::from(d.delta_nu / 2.0)
            - h.qubit_op(&qubit::sx()) * C64::from(d.drive / 2.0);
        let composed = slow + eff.secular(1e-9) - identity(h.dim()) * C64::from(offset);
        assert!(max_diff_below_edge(&composed, &build_h_eff(&d, &h), h.fock_dim()) < 1e-12);

        // g_x = 0 leaves only the slow terms.
        let mut p = PhysicalParams::working_point();
        p.theta = 1e-300;
        let dz = derive(&p).unwrap();
        let want = h.number() * C64::from(dz.delta_m) + h.qubit_op(&qubit::sz()) * C64::from(dz.delta_nu / 2.0)
            - h.qubit_op(&qubit::sx()) * C64::from(dz.drive / 2.0);
        assert!(max_abs_diff(&build_h_eff(&dz, &h), &want) < 1e-12);
    }

    #[test]
    fn cs_hamiltonian_structure() {
        let d = working().clone();
        let h = HilbertSpace::new(10).unwrap();
        let sx = h.qubit_op(&qubit::sx());
        for &t in &[0.0, 3.0, 11.0] {
            let hcs = build_h_cs(&d, &h, t);
            assert!(max_abs(&commutator(&hcs, &sx)) < 1e-14);
        }
        let mut res = d;
        res.delta_eff = 0.0;
        let a = h.annihilation();
        let want = (&a * &a + (&a * &a).adjoint()) * &sx * C64::from(d.g_cs);
        assert!(max_abs_diff(&build_h_cs(&res, &h, 7.0), &want) < 1e-14);
        // At t = π/(2Δ_eff) the m² coefficient is −g_cs.
        let t = PI / (2.0 * d.delta_eff);
        let term = cs_hamiltonian(&d, &h).terms[0].coefficient(t);
        assert!((term - C64::from(-d.g_cs)).norm() < 1e-12);
    }

    #[test]
    fn squeezing_parameter_limits() {
        let d = working();
        assert_eq!(squeezing_parameter(&d, 0.0), ZERO);
        let xi = squeezing_parameter_for(d.g_cs, 0.0, 29.0);
        assert!((xi - (2.0 * I * d.g_cs * 29.0)).norm() < 1e-15);
        assert!((xi.norm() - 2.731).abs() < 0.005, "|ξ| = {}", xi.norm());
        // Full revival at 2Δ t = 2π.
        let t = PI / d.delta_eff;
        assert!(squeezing_parameter(&d, t).norm() < 1e-12);
        // Continuity across the resonant switch.
        let near = squeezing_parameter_for(d.g_cs, 2e-9, 29.0);
        assert!((near - xi).norm() < 1e-6);
    }

    #[test]
    fn frame_transforms_round_trip_and_preserve_number() {
        let d = working();
        let h = HilbertSpace::new(6).unwrap();
        let ket = qops::kron_vec(
            &(qops::fock_ket(6, 1) + qops::fock_ket(6, 2) * C64::new(0.0, 0.5)),
            &qubit::plus_x(),
        );
        let rho = StateDensity::pure(Space::Joint(h), &ket, Frame::Lab, 3.7).unwrap();
        let n = h.number();
        let n0 = qops::expectation(&rho.matrix, &n).unwrap();
        let rot = frame_transform(&rho, Frame::RotatingHalfPump, &d).unwrap();
        let drv = frame_transform(&rot, Frame::DriveInteraction, &d).unwrap();
        for s in [&rot, &drv] {
            let v = qops::expectation(&s.matrix, &n).unwrap();
            assert!((v - n0).norm() < 1e-12);
            assert!((s.trace() - ONE).norm() < 1e-12);
        }
        let back = frame_transform(&frame_transform(&drv, Frame::RotatingHalfPump, &d).unwrap(), Frame::Lab, &d).unwrap();
        assert!(max_abs_diff(&back.matrix, &rho.matrix) < 1e-12);
        assert_eq!(back.frame, Frame::Lab);

        let mut at0 = rho.clone();
        at0.time = 0.0;
        let r0 = frame_transform(&at0, Frame::RotatingHalfPump, &d).unwrap();
        assert!(max_abs_diff(&r0.matrix, &at0.matrix) < 1e-14);
        assert!(matches!(
            frame_transform(&rho, Frame::DriveInteraction, &d),
            Err(Error::UnsupportedFrame { .. })
        ));
    }

    #[test]
    fn squeeze_operator_at_zero_is_identity() {
        let s = squeeze_operator(ZERO, 8).unwrap();
        assert!(max_abs_diff(&s, &identity(8)) < 1e-13);
        let p = analytic_propagator(&working(), &HilbertSpace::new(8).unwrap(), 0.0).unwrap();
        assert!(max_abs_diff(&p.matrix, &identity(16)) < 1e-13);
    }
}
