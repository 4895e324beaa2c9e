//! Truncated-Fock and qubit operator algebra on the joint magnon ⊗ qubit space.
//!
//! Operators are dense complex matrices. The joint space is ordered magnon ⊗ qubit, so
//! the basis index of `|n⟩ ⊗ |q⟩` is `2 n + q`. The qubit basis is the dressed basis
//! with `q = 0 ↔ |g⟩` and `q = 1 ↔ |e⟩`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type OperatorMatrix = DMatrix<C64>;
pub type StateVector = DVector<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Tensor ordering of the joint space. Only magnon-first is used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ordering {
    MagnonFirst,
}

/// Truncated joint Hilbert space of one bosonic mode and one qubit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HilbertSpace {
    fock_dim: usize,
    ordering: Ordering,
}

impl HilbertSpace {
    pub fn new(fock_dim: usize) -> Result<Self> {
        if fock_dim < 2 {
            return Err(Error::InvalidDimension(format!(
                "fock_dim must be at least 2, got {fock_dim}"
            )));
        }
        Ok(Self {
            fock_dim,
            ordering: Ordering::MagnonFirst,
        })
    }

    pub fn fock_dim(&self) -> usize {
        self.fock_dim
    }

    pub fn qubit_dim(&self) -> usize {
        2
    }

    pub fn dim(&self) -> usize {
        2 * self.fock_dim
    }

    pub fn ordering(&self) -> Ordering {
        self.ordering
    }

    pub fn index(&self, n: usize, q: usize) -> usize {
        2 * n + q
    }

    /// Lift a magnon operator to the joint space (`A ⊗ I₂`).
    pub fn magnon_op(&self, a: &OperatorMatrix) -> OperatorMatrix {
        debug_assert_eq!(a.nrows(), self.fock_dim);
        kron(a, &identity(2))
    }

    /// Lift a qubit operator to the joint space (`I ⊗ B`).
    pub fn qubit_op(&self, b: &OperatorMatrix) -> OperatorMatrix {
        debug_assert_eq!(b.nrows(), 2);
        kron(&identity(self.fock_dim), b)
    }

    pub fn annihilation(&self) -> OperatorMatrix {
        self.magnon_op(&ladder(self.fock_dim))
    }

    pub fn number(&self) -> OperatorMatrix {
        self.magnon_op(&number(self.fock_dim))
    }
}

/// Frame in which a density operator is expressed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    /// Non-rotating frame of the dressed-basis Hamiltonian.
    Lab,
    /// Frame rotating at ω_p/2 for the magnon and ω_p for the qubit.
    RotatingHalfPump,
    /// Additional interaction picture of the resonant drive −(Ω/2)σ̄_x.
    DriveInteraction,
}

/// Which Hilbert space a density operator lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Space {
    Joint(HilbertSpace),
    Magnon { fock_dim: usize },
}

impl Space {
    pub fn dim(&self) -> usize {
        match self {
            Space::Joint(h) => h.dim(),
            Space::Magnon { fock_dim } => *fock_dim,
        }
    }

    pub fn fock_dim(&self) -> usize {
        match self {
            Space::Joint(h) => h.fock_dim(),
            Space::Magnon { fock_dim } => *fock_dim,
        }
    }
}

/// A density operator tagged with its space, frame and time (ns).
#[derive(Debug, Clone, PartialEq)]
pub struct StateDensity {
    pub space: Space,
    pub matrix: OperatorMatrix,
    pub frame: Frame,
    pub time: f64,
}

/// Summary of how well a matrix satisfies the density-operator constraints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateDiagnostics {
    pub trace_error: f64,
    pub hermiticity_error: f64,
    pub min_eigenvalue: f64,
}

impl StateDensity {
    pub fn new(space: Space, matrix: OperatorMatrix, frame: Frame, time: f64) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::InvalidDimension("density matrix must be square".into()));
        }
        if matrix.nrows() != space.dim() {
            return Err(Error::DimensionMismatch {
                left: matrix.nrows(),
                right: space.dim(),
            });
        }
        Ok(Self {
            space,
            matrix,
            frame,
            time,
        })
    }

    /// Pure state `|ψ⟩⟨ψ|`; the ket is normalized first.
    pub fn pure(space: Space, ket: &StateVector, frame: Frame, time: f64) -> Result<Self> {
        let norm = ket.norm();
        if norm == 0.0 {
            return Err(Error::DegenerateState("zero ket".into()));
        }
        let k = ket / C64::from(norm);
        Self::new(space, &k * k.adjoint(), frame, time)
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> C64 {
        self.matrix.trace()
    }

    pub fn diagnostics(&self) -> Result<StateDiagnostics> {
        let herm = hermiticity_error(&self.matrix);
        let (evals, _) = herm_eig(&hermitian_part(&self.matrix))?;
        Ok(StateDiagnostics {
            trace_error: (self.trace() - ONE).norm(),
            hermiticity_error: herm,
            min_eigenvalue: evals.first().copied().unwrap_or(0.0),
        })
    }

    /// Checks trace, Hermiticity and positivity against the state tolerances.
    pub fn validate(&self) -> Result<()> {
        let d = self.diagnostics()?;
        if d.trace_error > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "trace deviates from 1 by {:e}",
                d.trace_error
            )));
        }
        if d.hermiticity_error > 1e-10 {
            return Err(Error::NotHermitian(d.hermiticity_error));
        }
        if d.min_eigenvalue < -1e-9 {
            return Err(Error::NotPsd(d.min_eigenvalue));
        }
        Ok(())
    }

    /// Replace the matrix with its Hermitian part.
    pub fn symmetrize(&mut self) {
        self.matrix = hermitian_part(&self.matrix);
    }
}

pub fn identity(d: usize) -> OperatorMatrix {
    OperatorMatrix::identity(d, d)
}

fn ladder(fock_dim: usize) -> OperatorMatrix {
    let mut a = OperatorMatrix::zeros(fock_dim, fock_dim);
    for n in 1..fock_dim {
        a[(n - 1, n)] = C64::from((n as f64).sqrt());
    }
    a
}

/// Truncated magnon annihilation operator: `a[n-1, n] = √n`.
pub fn annihilation(fock_dim: usize) -> Result<OperatorMatrix> {
    if fock_dim < 2 {
        return Err(Error::InvalidDimension(format!(
            "fock_dim must be at least 2, got {fock_dim}"
        )));
    }
    Ok(ladder(fock_dim))
}

pub fn number(fock_dim: usize) -> OperatorMatrix {
    OperatorMatrix::from_diagonal(&DVector::from_fn(fock_dim, |n, _| C64::from(n as f64)))
}

/// Fock basis ket `|n⟩`.
pub fn fock_ket(fock_dim: usize, n: usize) -> StateVector {
    let mut v = StateVector::zeros(fock_dim);
    v[n] = ONE;
    v
}

/// Kronecker product `A ⊗ B`.
pub fn kron(a: &OperatorMatrix, b: &OperatorMatrix) -> OperatorMatrix {
    a.kronecker(b)
}

pub fn kron_vec(a: &StateVector, b: &StateVector) -> StateVector {
    a.kronecker(b)
}

pub fn commutator(a: &OperatorMatrix, b: &OperatorMatrix) -> OperatorMatrix {
    a * b - b * a
}

/// Qubit operators in the dressed basis `(|g⟩, |e⟩)`.
pub mod qubit {
    use super::*;

    fn m2(a: [[C64; 2]; 2]) -> OperatorMatrix {
        OperatorMatrix::from_row_slice(2, 2, &[a[0][0], a[0][1], a[1][0], a[1][1]])
    }

    /// σ̄_x = |e⟩⟨g| + |g⟩⟨e|.
    pub fn sx() -> OperatorMatrix {
        m2([[ZERO, ONE], [ONE, ZERO]])
    }

    /// σ̄_y = i(|g⟩⟨e| − |e⟩⟨g|), so that [σ̄_z, σ̄_x] = 2iσ̄_y.
    pub fn sy() -> OperatorMatrix {
        m2([[ZERO, I], [-I, ZERO]])
    }

    /// σ̄_z = |e⟩⟨e| − |g⟩⟨g|.
    pub fn sz() -> OperatorMatrix {
        m2([[-ONE, ZERO], [ZERO, ONE]])
    }

    /// σ̄_+ = |e⟩⟨g|.
    pub fn sp() -> OperatorMatrix {
        m2([[ZERO, ZERO], [ONE, ZERO]])
    }

    /// σ̄_− = |g⟩⟨e|.
    pub fn sm() -> OperatorMatrix {
        m2([[ZERO, ONE], [ZERO, ZERO]])
    }

    /// |e⟩⟨e|.
    pub fn excited_projector() -> OperatorMatrix {
        m2([[ZERO, ZERO], [ZERO, ONE]])
    }

    pub fn ground() -> StateVector {
        StateVector::from_vec(vec![ONE, ZERO])
    }

    pub fn excited() -> StateVector {
        StateVector::from_vec(vec![ZERO, ONE])
    }

    /// |±⟩ = (|g⟩ ± |e⟩)/√2, the σ̄_x eigenstates.
    pub fn plus_x() -> StateVector {
        let s = C64::from(std::f64::consts::FRAC_1_SQRT_2);
        StateVector::from_vec(vec![s, s])
    }

    pub fn minus_x() -> StateVector {
        let s = C64::from(std::f64::consts::FRAC_1_SQRT_2);
        StateVector::from_vec(vec![s, -s])
    }

    /// Persistent-current Pauli operators, basis (|↻⟩, |↺⟩).
    pub fn pauli_x() -> OperatorMatrix {
        sx()
    }

    pub fn pauli_z() -> OperatorMatrix {
        m2([[ONE, ZERO], [ZERO, -ONE]])
    }
}

pub fn hermitian_part(a: &OperatorMatrix) -> OperatorMatrix {
    (a + a.adjoint()) * C64::from(0.5)
}

/// Largest entry of |A − A†|.
pub fn hermiticity_error(a: &OperatorMatrix) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0_f64;
    for j in 0..n {
        for i in 0..=j {
            worst = worst.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn max_abs(a: &OperatorMatrix) -> f64 {
    a.iter().fold(0.0_f64, |m, z| m.max(z.norm()))
}

/// Largest entrywise difference of two equally-shaped matrices.
pub fn max_abs_diff(a: &OperatorMatrix, b: &OperatorMatrix) -> f64 {
    a.iter()
        .zip(b.iter())
        .fold(0.0_f64, |m, (x, y)| m.max((x - y).norm()))
}

/// Eigendecomposition of a Hermitian matrix. Eigenvalues are ascending and the columns of
/// the returned matrix are the matching orthonormal eigenvectors.
pub fn herm_eig(a: &OperatorMatrix) -> Result<(Vec<f64>, OperatorMatrix)> {
    if a.nrows() != a.ncols() {
        return Err(Error::InvalidDimension("matrix must be square".into()));
    }
    let scale = max_abs(a).max(1.0);
    let dev = hermiticity_error(a);
    if dev > 1e-9 * scale {
        return Err(Error::NotHermitian(dev));
    }
    let eig = nalgebra::SymmetricEigen::new(hermitian_part(a));
    let mut order: Vec<usize> = (0..a.nrows()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = OperatorMatrix::from_columns(
        &order
            .iter()
            .map(|&i| eig.eigenvectors.column(i).into_owned())
            .collect::<Vec<_>>(),
    );
    Ok((values, vectors))
}

/// `V f(Λ) V†` for a Hermitian matrix with eigenpairs `(values, vectors)`.
pub fn spectral_apply(values: &[f64], vectors: &OperatorMatrix, f: impl Fn(f64) -> C64) -> OperatorMatrix {
    let mut scaled = vectors.clone();
    for (j, &lam) in values.iter().enumerate() {
        let c = f(lam);
        scaled.column_mut(j).iter_mut().for_each(|z| *z *= c);
    }
    scaled * vectors.adjoint()
}

/// Square root of a positive semidefinite Hermitian matrix. Eigenvalues down to −1e−6 are
/// clamped to zero; anything more negative is rejected.
pub fn matrix_sqrt_psd(a: &OperatorMatrix) -> Result<OperatorMatrix> {
    let (values, vectors) = herm_eig(a)?;
    if let Some(&min) = values.first() {
        if min < -1e-6 {
            return Err(Error::NotPsd(min));
        }
    }
    Ok(hermitian_part(&spectral_apply(&values, &vectors, |l| {
        C64::from(l.max(0.0).sqrt())
    })))
}

/// `exp(−i H t)` for Hermitian `H`.
pub fn unitary_propagator(h: &OperatorMatrix, t: f64) -> Result<OperatorMatrix> {
    let (values, vectors) = herm_eig(h)?;
    Ok(spectral_apply(&values, &vectors, |l| (-I * l * t).exp()))
}

/// `exp(G)` for anti-Hermitian `G`, through the Hermitian matrix `iG`.
pub fn expm_anti_hermitian(g: &OperatorMatrix) -> Result<OperatorMatrix> {
    unitary_propagator(&(g * I), 1.0)
}

/// Truncated displacement operator with a flag raised when |α|² exceeds a quarter of the
/// truncation.
#[derive(Debug, Clone)]
pub struct Displacement {
    pub matrix: OperatorMatrix,
    pub truncation_warning: bool,
}

/// `D(α) = exp(α m† − α* m)` on the truncated space.
pub fn displacement_operator(alpha: C64, fock_dim: usize) -> Result<Displacement> {
    let a = annihilation(fock_dim)?;
    let g = a.adjoint() * alpha - &a * alpha.conj();
    Ok(Displacement {
        matrix: expm_anti_hermitian(&g)?,
        truncation_warning: alpha.norm_sqr() > fock_dim as f64 / 4.0,
    })
}

/// Reusable factorization for displacements of many amplitudes on one truncation:
/// `D(s e^{iφ}) = R(φ) exp(s (m† − m)) R(φ)†` with `R(φ) = e^{iφ m†m}`.
#[derive(Debug, Clone)]
pub struct DisplacementFactory {
    fock_dim: usize,
    values: Vec<f64>,
    vectors: OperatorMatrix,
}

impl DisplacementFactory {
    pub fn new(fock_dim: usize) -> Result<Self> {
        let a = annihilation(fock_dim)?;
        // i (m† − m) is Hermitian; exp(s (m† − m)) = exp(−i s · i(m† − m)).
        let gen = (a.adjoint() - &a) * I;
        let (values, vectors) = herm_eig(&gen)?;
        Ok(Self {
            fock_dim,
            values,
            vectors,
        })
    }

    pub fn fock_dim(&self) -> usize {
        self.fock_dim
    }

    pub fn displacement(&self, alpha: C64) -> OperatorMatrix {
        let s = alpha.norm();
        let phi = alpha.arg();
        let mut d = spectral_apply(&self.values, &self.vectors, |l| (-I * l * s).exp());
        for i in 0..self.fock_dim {
            for j in 0..self.fock_dim {
                d[(i, j)] *= (I * phi * (i as f64 - j as f64)).exp();
            }
        }
        d
    }
}

/// Magnon parity `(−1)^{m†m}`.
pub fn parity_operator(fock_dim: usize) -> OperatorMatrix {
    OperatorMatrix::from_diagonal(&DVector::from_fn(fock_dim, |n, _| {
        if n % 2 == 0 {
            ONE
        } else {
            -ONE
        }
    }))
}

/// `Tr[ρ O]`.
pub fn expectation(rho: &OperatorMatrix, o: &OperatorMatrix) -> Result<C64> {
    if rho.nrows() != o.nrows() || rho.ncols() != o.ncols() {
        return Err(Error::DimensionMismatch {
            left: rho.nrows(),
            right: o.nrows(),
        });
    }
    let n = rho.nrows();
    let mut acc = ZERO;
    for i in 0..n {
        for j in 0..n {
            acc += rho[(i, j)] * o[(j, i)];
        }
    }
    Ok(acc)
}

/// Reduced magnon state `Tr_q ρ`.
pub fn partial_trace_qubit(state: &StateDensity) -> Result<StateDensity> {
    let Space::Joint(h) = state.space else {
        return Err(Error::WrongSpace { expected: "joint" });
    };
    let nf = h.fock_dim();
    let mut out = OperatorMatrix::zeros(nf, nf);
    for n in 0..nf {
        for k in 0..nf {
            out[(n, k)] = state.matrix[(2 * n, 2 * k)] + state.matrix[(2 * n + 1, 2 * k + 1)];
        }
    }
    StateDensity::new(Space::Magnon { fock_dim: nf }, out, state.frame, state.time)
}

/// Coordinate list of the nonzero entries of a dense operator. The master-equation kernel
/// multiplies through this form; the operators built here are banded in the Fock index.
#[derive(Debug, Clone)]
pub struct SparseOperator {
    dim: usize,
    entries: Vec<(usize, usize, C64)>,
}

impl SparseOperator {
    pub fn from_dense(a: &OperatorMatrix) -> Self {
        let mut entries = Vec::new();
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                let z = a[(i, j)];
                if z != ZERO {
                    entries.push((i, j, z));
                }
            }
        }
        Self {
            dim: a.nrows(),
            entries,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn adjoint(&self) -> Self {
        Self {
            dim: self.dim,
            entries: self.entries.iter().map(|&(i, j, z)| (j, i, z.conj())).collect(),
        }
    }

    pub fn scaled(&self, c: C64) -> Self {
        Self {
            dim: self.dim,
            entries: self.entries.iter().map(|&(i, j, z)| (i, j, z * c)).collect(),
        }
    }

    pub fn to_dense(&self) -> OperatorMatrix {
        let mut out = OperatorMatrix::zeros(self.dim, self.dim);
        for &(i, j, z) in &self.entries {
            out[(i, j)] += z;
        }
        out
    }

    /// `out += c · S · X` where `X` and `out` are column-major `dim × dim` buffers.
    pub fn mul_dense_acc(&self, c: C64, x: &[C64], out: &mut [C64]) {
        let d = self.dim;
        for col in 0..d {
            let xc = &x[col * d..(col + 1) * d];
            let oc = &mut out[col * d..(col + 1) * d];
            for &(i, j, z) in &self.entries {
                oc[i] += c * z * xc[j];
            }
        }
    }
}
