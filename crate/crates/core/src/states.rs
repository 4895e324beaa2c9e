//! Analytic Fock-basis constructions: squeezed vacua, their symmetric and antisymmetric
//! superpositions, the fourfold-symmetric codewords and joint initial states.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qops::{fock_ket, kron_vec, qubit, Frame, HilbertSpace, Space, StateDensity, StateVector, C64, ZERO};

/// Largest tolerated probability beyond the Fock truncation.
pub const TAIL_TOLERANCE: f64 = 1e-10;

/// Squeezing amplitude `ξ = r e^{iφ}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SqueezeParam {
    pub r: f64,
    pub varphi: f64,
}

impl SqueezeParam {
    pub fn new(r: f64, varphi: f64) -> Result<Self> {
        if !(r >= 0.0) {
            return Err(Error::InvalidParameter(format!("squeezing magnitude must be >= 0, got {r}")));
        }
        Ok(Self { r, varphi })
    }

    pub fn from_complex(xi: C64) -> Self {
        Self {
            r: xi.norm(),
            varphi: xi.arg(),
        }
    }

    pub fn xi(&self) -> C64 {
        C64::from_polar(self.r, self.varphi)
    }
}

/// `S(ξ)|0⟩` from `c₀ = 1/√cosh r` and
/// `c_{2m+2}/c_{2m} = −e^{iφ} tanh r · √((2m+1)/(2m+2))`.
pub fn squeezed_vacuum_fock(xi: C64, fock_dim: usize) -> Result<StateVector> {
    if fock_dim < 1 {
        return Err(Error::InvalidDimension("fock_dim must be positive".into()));
    }
    let r = xi.norm();
    let ratio = -C64::from_polar(r.tanh(), xi.arg());
    let mut v = StateVector::zeros(fock_dim);
    let mut c = C64::from(1.0 / r.cosh().sqrt());
    let mut kept = 0.0;
    let mut n = 0;
    while n < fock_dim {
        v[n] = c;
        kept += c.norm_sqr();
        let m = (n / 2) as f64;
        c *= ratio * ((2.0 * m + 1.0) / (2.0 * m + 2.0)).sqrt();
        n += 2;
    }
    let tail = (1.0 - kept).max(0.0);
    if tail > TAIL_TOLERANCE {
        return Err(Error::TruncationInsufficient { fock_dim, tail });
    }
    let norm = v.norm();
    Ok(v / C64::from(norm))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parity {
    Plus,
    Minus,
}

impl Parity {
    fn sign(self) -> f64 {
        match self {
            Parity::Plus => 1.0,
            Parity::Minus => -1.0,
        }
    }
}

/// `⟨ξ|−ξ⟩ = cosh^{−1/2}(2r)`.
pub fn squeezed_overlap(r: f64) -> f64 {
    1.0 / (2.0 * r).cosh().sqrt()
}

/// `2[1 ± cosh^{−1/2}(2r)]`, the squared norm of `|ξ⟩ ± |−ξ⟩`.
pub fn superposition_norm(r: f64, parity: Parity) -> f64 {
    2.0 * (1.0 + parity.sign() * squeezed_overlap(r))
}

/// `2[1 ± cosh^{1/2}(2r)]`, the alternative form with the opposite exponent. It is negative
/// for the minus sign at any r > 0, so it cannot be a squared norm.
pub fn superposition_norm_positive_exponent(r: f64, parity: Parity) -> f64 {
    2.0 * (1.0 + parity.sign() * (2.0 * r).cosh().sqrt())
}

#[derive(Debug, Clone)]
pub struct Superposition {
    pub ket: StateVector,
    /// `‖|ξ⟩ ± |−ξ⟩‖²` from the Fock sum.
    pub norm_numeric: f64,
    /// [`superposition_norm`].
    pub norm_formula: f64,
    /// [`superposition_norm_positive_exponent`].
    pub norm_formula_positive_exponent: f64,
}

/// `ψ± = (|ξ⟩ ± |−ξ⟩)/√N±`.
pub fn superposition_pm(xi: C64, parity: Parity, fock_dim: usize) -> Result<Superposition> {
    let r = xi.norm();
    if parity == Parity::Minus && r == 0.0 {
        return Err(Error::DegenerateState("antisymmetric superposition at zero squeezing".into()));
    }
    let a = squeezed_vacuum_fock(xi, fock_dim)?;
    let b = squeezed_vacuum_fock(-xi, fock_dim)?;
    let raw = a + b * C64::from(parity.sign());
    let norm_numeric = raw.norm_squared();
    if norm_numeric < 1e-24 {
        return Err(Error::DegenerateState("superposition has zero norm".into()));
    }
    Ok(Superposition {
        ket: &raw / C64::from(norm_numeric.sqrt()),
        norm_numeric,
        norm_formula: superposition_norm(r, parity),
        norm_formula_positive_exponent: superposition_norm_positive_exponent(r, parity),
    })
}

/// Codewords `(S(r) ± S(−r))|0⟩/√N±` supported on Fock numbers 0 and 2 (mod 4).
pub fn logical_codewords(r: f64, fock_dim: usize) -> Result<(StateVector, StateVector)> {
    let xi = C64::from(r);
    let zero = superposition_pm(xi, Parity::Plus, fock_dim)?.ket;
    let one = superposition_pm(xi, Parity::Minus, fock_dim)?.ket;
    Ok((zero, one))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MagnonInit {
    #[default]
    Vacuum,
}

/// Initial qubit state. `|±⟩ = (|g⟩ ± |e⟩)/√2`, so `PlusPlusMinus` equals `|g⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QubitInit {
    PlusX,
    MinusX,
    /// `(|+⟩ + |−⟩)/√2`.
    PlusPlusMinus,
}

impl QubitInit {
    pub fn ket(self) -> StateVector {
        match self {
            QubitInit::PlusX => qubit::plus_x(),
            QubitInit::MinusX => qubit::minus_x(),
            QubitInit::PlusPlusMinus => (qubit::plus_x() + qubit::minus_x()) / C64::from(2f64.sqrt()),
        }
    }
}

/// Phase convention recorded next to every output that depends on it.
pub const PLUS_MINUS_CONVENTION: &str = "|±> = (|g> ± |e>)/sqrt(2), sigma_z|g> = -|g>";

pub fn joint_initial_state(magnon: MagnonInit, qubit_init: QubitInit, fock_dim: usize) -> Result<StateDensity> {
    let hs = HilbertSpace::new(fock_dim)?;
    let m = match magnon {
        MagnonInit::Vacuum => fock_ket(fock_dim, 0),
    };
    StateDensity::pure(Space::Joint(hs), &kron_vec(&m, &qubit_init.ket()), Frame::Lab, 0.0)
}

/// CSV with columns `index,re,im`.
pub fn write_state_csv(ket: &StateVector, w: &mut impl Write) -> Result<()> {
    writeln!(w, "index [1],re [1],im [1]")?;
    for (k, c) in ket.iter().enumerate() {
        writeln!(w, "{k},{:.15e},{:.15e}", c.re, c.im)?;
    }
    Ok(())
}

/// Populations whose Fock index is not congruent to `residue` modulo `modulus`.
pub fn off_support_population(ket: &StateVector, modulus: usize, residue: usize) -> f64 {
    ket.iter()
        .enumerate()
        .filter(|(k, _)| k % modulus != residue)
        .map(|(_, c)| c.norm_sqr())
        .sum()
}

/// `⟨ψ|m†m|ψ⟩`.
pub fn mean_number(ket: &StateVector) -> f64 {
    ket.iter().enumerate().map(|(k, c)| k as f64 * c.norm_sqr()).sum()
}

/// `m|ψ⟩` on the truncated space.
pub fn apply_annihilation(ket: &StateVector) -> StateVector {
    let n = ket.len();
    let mut out = StateVector::from_element(n, ZERO);
    for k in 1..n {
        out[k - 1] = ket[k] * (k as f64).sqrt();
    }
    out
}
