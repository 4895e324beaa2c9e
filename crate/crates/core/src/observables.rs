//! Magnon observables: quadrature variance, squeezing degree, Wigner function, fidelity
//! and Fock statistics.

use std::f64::consts::{FRAC_2_PI, PI};
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::qops::{herm_eig, matrix_sqrt_psd, OperatorMatrix, Space, StateDensity, C64, ZERO};

/// Minimum quadrature variance of a magnon state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadratureVariance {
    /// Vacuum-normalized minimum variance (vacuum → 1).
    pub zeta_sq: f64,
    /// Quadrature angle at which the minimum is attained (rad).
    pub angle: f64,
    /// Variance of the quadrature (m e^{-iθ} + m† e^{iθ})/√2 itself, ζ²/2.
    pub raw_variance: f64,
    pub mean_number: f64,
}

/// `(⟨m⟩, ⟨m²⟩, ⟨m†m⟩)` read off the Fock-basis density matrix.
pub fn magnon_moments(rho: &OperatorMatrix) -> (C64, C64, f64) {
    let n = rho.nrows();
    let mut a = ZERO;
    let mut a2 = ZERO;
    let mut num = 0.0;
    for k in 0..n {
        num += k as f64 * rho[(k, k)].re;
        if k >= 1 {
            a += rho[(k, k - 1)] * (k as f64).sqrt();
        }
        if k >= 2 {
            a2 += rho[(k, k - 2)] * ((k * (k - 1)) as f64).sqrt();
        }
    }
    (a, a2, num)
}

fn require_magnon(state: &StateDensity) -> Result<()> {
    match state.space {
        Space::Magnon { .. } => Ok(()),
        Space::Joint(_) => Err(Error::WrongSpace { expected: "magnon-only" }),
    }
}

pub fn min_quadrature_variance(state: &StateDensity) -> Result<QuadratureVariance> {
    require_magnon(state)?;
    Ok(min_quadrature_variance_of(&state.matrix))
}

/// Same as [`min_quadrature_variance`] on a bare Fock-basis matrix.
pub fn min_quadrature_variance_of(rho: &OperatorMatrix) -> QuadratureVariance {
    let (a, a2, n) = magnon_moments(rho);
    let c = a2 - a * a;
    let zeta_sq = 1.0 + 2.0 * (n - a.norm_sqr()) - 2.0 * c.norm();
    QuadratureVariance {
        zeta_sq,
        angle: c.arg() / 2.0 + PI / 2.0,
        raw_variance: zeta_sq / 2.0,
        mean_number: n,
    }
}

/// `S = −10 log₁₀ ζ²` in dB.
pub fn squeezing_db(zeta_sq: f64) -> Result<f64> {
    if !(zeta_sq > 0.0) {
        return Err(Error::NonPositive(zeta_sq));
    }
    Ok(-10.0 * zeta_sq.log10())
}

pub fn fock_populations(state: &StateDensity) -> Result<Vec<f64>> {
    require_magnon(state)?;
    Ok((0..state.dim()).map(|k| state.matrix[(k, k)].re).collect())
}

/// Uhlmann fidelity `Tr √(√ρ₁ ρ₂ √ρ₁)` (not squared).
pub fn uhlmann_fidelity(rho1: &OperatorMatrix, rho2: &OperatorMatrix) -> Result<f64> {
    if rho1.shape() != rho2.shape() {
        return Err(Error::DimensionMismatch {
            left: rho1.nrows(),
            right: rho2.nrows(),
        });
    }
    let s1 = matrix_sqrt_psd(rho1)?;
    // Reject invalid second argument with the same tolerance as the first.
    matrix_sqrt_psd(rho2)?;
    let m = &s1 * rho2 * &s1;
    let m = (&m + m.adjoint()) * C64::from(0.5);
    let (vals, _) = herm_eig(&m)?;
    let scale = vals.iter().fold(1.0_f64, |acc, v| acc.max(v.abs()));
    if let Some(&lo) = vals.first() {
        if lo < -1e-6 * scale {
            return Err(Error::NotPsd(lo));
        }
    }
    Ok(vals.iter().map(|v| v.max(0.0).sqrt()).sum())
}

/// Grid request for [`wigner`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WignerSpec {
    pub half_width: f64,
    pub points: usize,
    /// Grow the grid (keeping the spacing) while the boundary value exceeds
    /// [`WIGNER_BOUNDARY_TOL`], at most this many times.
    pub max_extensions: usize,
}

impl Default for WignerSpec {
    fn default() -> Self {
        Self {
            half_width: 5.0,
            points: 201,
            max_extensions: 3,
        }
    }
}

pub const WIGNER_BOUNDARY_TOL: f64 = 1e-4;

/// Wigner function sampled on a uniform square grid. `values[(i, j)]` holds
/// `W(re_axis[j] + i·im_axis[i])`.
#[derive(Debug, Clone)]
pub struct WignerGrid {
    pub re_axis: Vec<f64>,
    pub im_axis: Vec<f64>,
    pub values: nalgebra::DMatrix<f64>,
    pub boundary_max: f64,
    pub truncation_warning: bool,
    pub extensions: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct WignerDescriptor {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
    pub re_points: usize,
    pub im_points: usize,
    pub spacing: f64,
    pub normalization: f64,
    pub negativity_volume: f64,
    pub value_at_origin: Option<f64>,
    pub boundary_max: f64,
    pub truncation_warning: bool,
    pub extensions: usize,
}

impl WignerGrid {
    pub fn spacing(&self) -> f64 {
        if self.re_axis.len() < 2 {
            return 0.0;
        }
        self.re_axis[1] - self.re_axis[0]
    }

    pub fn cell_area(&self) -> f64 {
        self.spacing().powi(2)
    }

    /// Σ W ΔA.
    pub fn normalization(&self) -> f64 {
        self.values.sum() * self.cell_area()
    }

    /// W at the grid point closest to the origin, if the origin lies on the grid.
    pub fn value_at_origin(&self) -> Option<f64> {
        let find = |axis: &[f64]| axis.iter().position(|x| x.abs() < 1e-12);
        Some(self.values[(find(&self.im_axis)?, find(&self.re_axis)?)])
    }

    pub fn max_value(&self) -> f64 {
        self.values.max()
    }

    pub fn descriptor(&self) -> WignerDescriptor {
        WignerDescriptor {
            re_min: self.re_axis[0],
            re_max: *self.re_axis.last().unwrap(),
            im_min: self.im_axis[0],
            im_max: *self.im_axis.last().unwrap(),
            re_points: self.re_axis.len(),
            im_points: self.im_axis.len(),
            spacing: self.spacing(),
            normalization: self.normalization(),
            negativity_volume: wigner_negativity_volume(self),
            value_at_origin: self.value_at_origin(),
            boundary_max: self.boundary_max,
            truncation_warning: self.truncation_warning,
            extensions: self.extensions,
        }
    }

    /// Long-form CSV with columns `re_alpha,im_alpha,wigner`.
    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "re_alpha [1],im_alpha [1],wigner [1]")?;
        for (i, y) in self.im_axis.iter().enumerate() {
            for (j, x) in self.re_axis.iter().enumerate() {
                writeln!(w, "{x:.6},{y:.6},{:.12e}", self.values[(i, j)])?;
            }
        }
        Ok(())
    }

    pub fn write_files(&self, csv: &Path, json: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(csv)?);
        self.write_csv(&mut f)?;
        f.flush()?;
        let mut text = serde_json::to_string_pretty(&self.descriptor())?;
        text.push('\n');
        std::fs::write(json, text)?;
        Ok(())
    }
}

/// Σ max(−W, 0) ΔA.
pub fn wigner_negativity_volume(grid: &WignerGrid) -> f64 {
    grid.values.iter().map(|w| (-w).max(0.0)).sum::<f64>() * grid.cell_area()
}

/// Fock-basis matrix elements `⟨j|D(β)|k⟩` for `j, k < dim`, exact in the untruncated
/// space. With `x = |β|²` and `a = j − k ≥ 0`,
/// `D_{jk} = e^{iaθ} f_k^{(a)}` and `D_{kj} = (−e^{−iθ})^a f_k^{(a)}`, where
/// `f_n^{(a)} = √(n!/(n+a)!) e^{−x/2} x^{a/2} L_n^{(a)}(x)` is bounded by one. The Laguerre
/// recurrence is run on `f` directly so nothing overflows; the recurrence in the Fock index
/// itself loses all accuracy once |β| exceeds a few units.
pub fn displacement_elements(beta: C64, dim: usize, out: &mut OperatorMatrix) {
    debug_assert_eq!(out.shape(), (dim, dim));
    let x = beta.norm_sqr();
    let theta = beta.arg();
    let mut ln_fact = vec![0.0; dim + 1];
    for k in 1..=dim {
        ln_fact[k] = ln_fact[k - 1] + (k as f64).ln();
    }
    for a in 0..dim {
        let af = a as f64;
        let f0 = if a == 0 {
            (-x / 2.0).exp()
        } else if x == 0.0 {
            0.0
        } else {
            (-x / 2.0 + 0.5 * af * x.ln() - 0.5 * ln_fact[a]).exp()
        };
        let below = C64::from_polar(1.0, af * theta);
        let above = C64::from_polar(if a % 2 == 0 { 1.0 } else { -1.0 }, -af * theta);
        let (mut prev, mut cur) = (0.0, f0);
        for n in 0..dim - a {
            out[(n + a, n)] = below * cur;
            out[(n, n + a)] = above * cur;
            let nf = n as f64;
            let next = ((2.0 * nf + 1.0 + af - x) * cur - (nf * (nf + af)).sqrt() * prev)
                / ((nf + 1.0) * (nf + 1.0 + af)).sqrt();
            prev = cur;
            cur = next;
        }
    }
}

/// Wigner function by displaced parity, `W(α) = (2/π) Tr[ρ D(2α) P]` with `P = (−1)^{m†m}`,
/// which equals `(2/π) Tr[P D†(α) ρ D(α)]`. Displacement matrix elements are evaluated
/// exactly, so no padding of the truncated space is needed.
pub fn wigner(state: &StateDensity, spec: &WignerSpec) -> Result<WignerGrid> {
    require_magnon(state)?;
    if spec.points < 2 || !(spec.half_width > 0.0) {
        return Err(Error::InvalidParameter("wigner grid needs >= 2 points and positive width".into()));
    }
    let h = 2.0 * spec.half_width / (spec.points - 1) as f64;
    let mut half = (spec.points - 1) / 2;
    let odd = spec.points % 2 == 1;
    let mut extensions = 0;
    loop {
        let axis: Vec<f64> = if odd {
            (0..=2 * half).map(|i| (i as f64 - half as f64) * h).collect()
        } else {
            (0..2 * (half + 1)).map(|i| (i as f64 - half as f64 - 0.5) * h).collect()
        };
        let values = wigner_on_axes(&state.matrix, &axis, &axis);
        let boundary_max = boundary_abs_max(&values);
        if boundary_max <= WIGNER_BOUNDARY_TOL || extensions >= spec.max_extensions {
            let truncation_warning = boundary_max > WIGNER_BOUNDARY_TOL;
            if truncation_warning {
                log::warn!("Wigner grid boundary value {boundary_max:.2e} exceeds {WIGNER_BOUNDARY_TOL:e}");
            }
            return Ok(WignerGrid {
                re_axis: axis.clone(),
                im_axis: axis,
                values,
                boundary_max,
                truncation_warning,
                extensions,
            });
        }
        half += half / 2 + 1;
        extensions += 1;
    }
}

fn boundary_abs_max(v: &nalgebra::DMatrix<f64>) -> f64 {
    let (r, c) = v.shape();
    let mut m = 0.0_f64;
    for i in 0..r {
        m = m.max(v[(i, 0)].abs()).max(v[(i, c - 1)].abs());
    }
    for j in 0..c {
        m = m.max(v[(0, j)].abs()).max(v[(r - 1, j)].abs());
    }
    m
}

/// Wigner values at `x + iy` for every pair of axis entries. Rows follow `im_axis`.
pub fn wigner_on_axes(rho: &OperatorMatrix, re_axis: &[f64], im_axis: &[f64]) -> nalgebra::DMatrix<f64> {
    let dim = rho.nrows();
    // Tr[ρ D P] = Σ_{j,k} ρ_{k j} D_{j k} (−1)^k; keep only the nonzero ρ entries.
    let mut entries = Vec::new();
    let mut scale = 0.0_f64;
    for j in 0..dim {
        for k in 0..dim {
            scale = scale.max(rho[(k, j)].norm());
        }
    }
    for j in 0..dim {
        for k in 0..dim {
            let r = rho[(k, j)];
            if r.norm() > 1e-16 * scale {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                entries.push((j, k, r * sign));
            }
        }
    }
    let rows: Vec<Vec<f64>> = im_axis
        .par_iter()
        .map(|&y| {
            let mut d = OperatorMatrix::zeros(dim, dim);
            re_axis
                .iter()
                .map(|&x| {
                    displacement_elements(C64::new(2.0 * x, 2.0 * y), dim, &mut d);
                    let tr: C64 = entries.iter().map(|&(j, k, r)| r * d[(j, k)]).sum();
                    FRAC_2_PI * tr.re
                })
                .collect()
        })
        .collect();
    nalgebra::DMatrix::from_fn(im_axis.len(), re_axis.len(), |i, j| rows[i][j])
}
