//! Qubit–magnon coupling from the Biot–Savart field of a square current loop.
//!
//! Lengths are in µm, currents in µA and fields in tesla. The loop lies in the y–z plane,
//! centred at the origin, with the current circulating counterclockwise about +x̂.

use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::{G_ELECTRON, MU_0, MU_B, PLANCK};
use crate::error::{Error, Result};

pub type Vec3 = [f64; 3];

fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

/// Distance from `r` to the closed segment `p1 p2`.
pub fn distance_to_segment(p1: Vec3, p2: Vec3, r: Vec3) -> f64 {
    let d = sub(p2, p1);
    let len2 = dot(d, d);
    let s = if len2 == 0.0 {
        0.0
    } else {
        (dot(sub(r, p1), d) / len2).clamp(0.0, 1.0)
    };
    norm(sub(r, [p1[0] + s * d[0], p1[1] + s * d[1], p1[2] + s * d[2]]))
}

pub const ON_WIRE_DISTANCE_UM: f64 = 1e-12;

/// Field of a straight segment carrying `current_ua` from `p1` to `p2`:
/// `B = (µ₀I/4π)(r₁ × r₂)(|r₁| + |r₂|) / (|r₁||r₂|(|r₁||r₂| + r₁·r₂))` with `rᵢ = pᵢ − r`.
pub fn segment_field(p1: Vec3, p2: Vec3, current_ua: f64, r: Vec3) -> Result<Vec3> {
    if distance_to_segment(p1, p2, r) <= ON_WIRE_DISTANCE_UM {
        return Err(Error::OnWire);
    }
    let r1 = sub(p1, r);
    let r2 = sub(p2, r);
    let (n1, n2) = (norm(r1), norm(r2));
    let denom = n1 * n2 * (n1 * n2 + dot(r1, r2));
    let c = cross(r1, r2);
    if denom <= 0.0 || norm(c) == 0.0 {
        // On the segment's line but outside it: the field vanishes.
        return Ok([0.0; 3]);
    }
    // µA → A and 1/µm → 1/m.
    let k = MU_0 * current_ua * 1e-6 / (4.0 * PI) * 1e6 * (n1 + n2) / denom;
    Ok([k * c[0], k * c[1], k * c[2]])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoopGeometry {
    pub side_length_um: f64,
    pub current_ua: f64,
}

impl LoopGeometry {
    pub fn new(side_length_um: f64, current_ua: f64) -> Result<Self> {
        if !(side_length_um > 0.0) {
            return Err(Error::NonPositive(side_length_um));
        }
        if !(current_ua > 0.0) {
            return Err(Error::NonPositive(current_ua));
        }
        Ok(Self {
            side_length_um,
            current_ua,
        })
    }

    /// Corners in circulation order.
    pub fn corners(&self) -> [Vec3; 4] {
        let h = self.side_length_um / 2.0;
        [[0.0, -h, -h], [0.0, h, -h], [0.0, h, h], [0.0, -h, h]]
    }

    pub fn segments(&self) -> [(Vec3, Vec3); 4] {
        let c = self.corners();
        [(c[0], c[1]), (c[1], c[2]), (c[2], c[3]), (c[3], c[0])]
    }

    /// `2√2 µ₀ I / (π L)`, the field magnitude at the loop centre.
    pub fn center_field_closed_form(&self) -> f64 {
        2.0 * 2f64.sqrt() * MU_0 * self.current_ua * 1e-6 / (PI * self.side_length_um * 1e-6)
    }
}

pub fn loop_field(geometry: &LoopGeometry, r: Vec3) -> Result<Vec3> {
    let mut b = [0.0; 3];
    for (p1, p2) in geometry.segments() {
        let s = segment_field(p1, p2, geometry.current_ua, r)?;
        for k in 0..3 {
            b[k] += s[k];
        }
    }
    Ok(b)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphereSpec {
    pub center_um: Vec3,
    pub radius_um: f64,
}

impl SphereSpec {
    pub fn new(center_um: Vec3, radius_um: f64) -> Result<Self> {
        if !(radius_um > 0.0) {
            return Err(Error::NonPositive(radius_um));
        }
        Ok(Self { center_um, radius_um })
    }

    pub fn volume_cm3(&self) -> f64 {
        let r_cm = self.radius_um * 1e-4;
        4.0 * PI * r_cm.powi(3) / 3.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialSpec {
    pub spin_density_cm3: f64,
    pub spin: f64,
    pub g_e: f64,
}

impl MaterialSpec {
    pub fn new(spin_density_cm3: f64, spin: f64) -> Result<Self> {
        let m = Self {
            spin_density_cm3,
            spin,
            g_e: G_ELECTRON,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        for v in [self.spin_density_cm3, self.spin, self.g_e] {
            if !(v > 0.0) {
                return Err(Error::NonPositive(v));
            }
        }
        Ok(())
    }

    /// YIG with S = 5/2 at 2.1 × 10²² spins per cm³.
    pub fn yig() -> Self {
        Self {
            spin_density_cm3: 2.1e22,
            spin: 2.5,
            g_e: G_ELECTRON,
        }
    }
}

/// Gauss–Legendre nodes and weights on [−1, 1] by Newton iteration on P_n.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else if n == 1 { z } else { p1 };
            let pn1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pn1) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Quadrature orders for the radial, polar (in cos θ) and azimuthal directions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuadratureOrders {
    pub radial: usize,
    pub polar: usize,
    pub azimuthal: usize,
}

impl Default for QuadratureOrders {
    fn default() -> Self {
        Self {
            radial: 16,
            polar: 16,
            azimuthal: 32,
        }
    }
}

impl QuadratureOrders {
    pub fn doubled(self) -> Self {
        Self {
            radial: 2 * self.radial,
            polar: 2 * self.polar,
            azimuthal: 2 * self.azimuthal,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VolumeAverage {
    /// x-component of the averaged field (T), from the doubled-order rule.
    pub bx: f64,
    /// Full averaged vector (T), for diagnostics.
    pub vector: Vec3,
    /// |B_x(doubled) − B_x(base)| / |B_x(doubled)|.
    pub relative_error: f64,
    pub orders: QuadratureOrders,
}

fn sphere_average(geometry: &LoopGeometry, sphere: &SphereSpec, orders: QuadratureOrders) -> Result<Vec3> {
    let (xr, wr) = gauss_legendre(orders.radial);
    let (xu, wu) = gauss_legendre(orders.polar);
    let (xp, wp) = gauss_legendre(orders.azimuthal);
    let rad = sphere.radius_um;
    let c = sphere.center_um;
    let mut acc = [0.0; 3];
    let mut total = 0.0;
    for (&sr, &wrr) in xr.iter().zip(&wr) {
        let r = 0.5 * rad * (sr + 1.0);
        let radial_w = wrr * r * r;
        for (&u, &wuu) in xu.iter().zip(&wu) {
            let s = (1.0 - u * u).sqrt();
            for (&sp, &wpp) in xp.iter().zip(&wp) {
                let phi = PI * (sp + 1.0);
                let w = radial_w * wuu * wpp;
                let p = [c[0] + r * s * phi.cos(), c[1] + r * s * phi.sin(), c[2] + r * u];
                let b = loop_field(geometry, p)?;
                for k in 0..3 {
                    acc[k] += w * b[k];
                }
                total += w;
            }
        }
    }
    Ok([acc[0] / total, acc[1] / total, acc[2] / total])
}

/// Average of the loop field over the sphere volume.
pub fn volume_avg_field(geometry: &LoopGeometry, sphere: &SphereSpec) -> Result<VolumeAverage> {
    volume_avg_field_with(geometry, sphere, QuadratureOrders::default())
}

pub fn volume_avg_field_with(
    geometry: &LoopGeometry,
    sphere: &SphereSpec,
    orders: QuadratureOrders,
) -> Result<VolumeAverage> {
    for (p1, p2) in geometry.segments() {
        if distance_to_segment(p1, p2, sphere.center_um) <= sphere.radius_um {
            return Err(Error::WireIntersection);
        }
    }
    let base = sphere_average(geometry, sphere, orders)?;
    let fine = sphere_average(geometry, sphere, orders.doubled())?;
    let relative_error = if fine[0] == 0.0 {
        (fine[0] - base[0]).abs()
    } else {
        ((fine[0] - base[0]) / fine[0]).abs()
    };
    if relative_error > 1e-4 {
        log::warn!("volume average quadrature error estimate {relative_error:.2e}");
    }
    Ok(VolumeAverage {
        bx: fine[0],
        vector: fine,
        relative_error,
        orders: orders.doubled(),
    })
}

/// How the field entering the coupling is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldMode {
    /// `2√2 µ₀I/(πL)` regardless of the sphere position.
    CenterClosedForm,
    /// Loop field x-component at the sphere centre.
    Point,
    /// Volume-averaged x-component.
    VolumeAverage,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CouplingResult {
    /// Linear frequency g (GHz).
    pub g_ghz: f64,
    pub n_spins: f64,
    pub b_eff_t: f64,
    pub mode: FieldMode,
    pub quadrature_error: Option<f64>,
}

/// `g = g_e µ_B B_eff √(NS/2) / h` with `N = ρ · 4πR³/3`.
pub fn coupling_strength(
    geometry: &LoopGeometry,
    sphere: &SphereSpec,
    material: &MaterialSpec,
    mode: FieldMode,
) -> Result<CouplingResult> {
    material.validate()?;
    let (b, err) = match mode {
        FieldMode::CenterClosedForm => (geometry.center_field_closed_form(), None),
        FieldMode::Point => (loop_field(geometry, sphere.center_um)?[0], None),
        FieldMode::VolumeAverage => {
            let v = volume_avg_field(geometry, sphere)?;
            (v.bx, Some(v.relative_error))
        }
    };
    let n_spins = material.spin_density_cm3 * sphere.volume_cm3();
    let g_hz = material.g_e * MU_B * b * (n_spins * material.spin / 2.0).sqrt() / PLANCK;
    Ok(CouplingResult {
        g_ghz: g_hz * 1e-9,
        n_spins,
        b_eff_t: b,
        mode,
        quadrature_error: err,
    })
}

/// Which pair of axes a coupling map sweeps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingSweep {
    /// Radius × persistent current, point-sphere field at the loop centre.
    RadiusCurrent { radius_um: Vec<f64>, current_ua: Vec<f64> },
    /// Radius × out-of-plane offset x₀, volume-averaged field.
    RadiusOffset { radius_um: Vec<f64>, offset_um: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CouplingMapRow {
    pub radius_um: f64,
    /// Persistent current (µA) for radius–current maps, offset x₀ (µm) otherwise.
    pub second: f64,
    pub g_ghz: f64,
    pub n_spins: f64,
    pub b_eff_t: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CouplingMap {
    pub sweep: CouplingSweep,
    pub geometry: LoopGeometry,
    pub material: MaterialSpec,
    pub orders: QuadratureOrders,
    pub mode: FieldMode,
    /// Row-major in (radius, second axis) order.
    pub rows: Vec<CouplingMapRow>,
}

pub fn coupling_map(template: &LoopGeometry, sweep: &CouplingSweep, material: &MaterialSpec) -> Result<CouplingMap> {
    let (radii, second, mode) = match sweep {
        CouplingSweep::RadiusCurrent { radius_um, current_ua } => (radius_um, current_ua, FieldMode::Point),
        CouplingSweep::RadiusOffset { radius_um, offset_um } => (radius_um, offset_um, FieldMode::VolumeAverage),
    };
    if radii.is_empty() || second.is_empty() {
        return Err(Error::InvalidParameter("coupling map axes must be non-empty".into()));
    }
    let points: Vec<(f64, f64)> = radii
        .iter()
        .flat_map(|&r| second.iter().map(move |&s| (r, s)))
        .collect();
    let rows = points
        .par_iter()
        .map(|&(r, s)| {
            let (geometry, center) = match sweep {
                CouplingSweep::RadiusCurrent { .. } => (LoopGeometry::new(template.side_length_um, s)?, [0.0; 3]),
                CouplingSweep::RadiusOffset { .. } => (*template, [s, 0.0, 0.0]),
            };
            let sphere = SphereSpec::new(center, r)?;
            let c = coupling_strength(&geometry, &sphere, material, mode).map_err(|e| Error::SweepPoint {
                point: format!("radius_um={r}, second={s}"),
                source: Box::new(e),
            })?;
            Ok(CouplingMapRow {
                radius_um: r,
                second: s,
                g_ghz: c.g_ghz,
                n_spins: c.n_spins,
                b_eff_t: c.b_eff_t,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CouplingMap {
        sweep: sweep.clone(),
        geometry: *template,
        material: *material,
        orders: QuadratureOrders::default().doubled(),
        mode,
        rows,
    })
}

impl CouplingMap {
    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        let second = match self.sweep {
            CouplingSweep::RadiusCurrent { .. } => "current_ua [uA]",
            CouplingSweep::RadiusOffset { .. } => "offset_x0_um [um]",
        };
        writeln!(w, "radius_um [um],{second},g_ghz [GHz],n_spins [1],b_eff_x [T]")?;
        for r in &self.rows {
            writeln!(w, "{},{},{:.10e},{:.10e},{:.10e}", r.radius_um, r.second, r.g_ghz, r.n_spins, r.b_eff_t)?;
        }
        Ok(())
    }

    /// Metadata without the table body.
    pub fn metadata_json(&self) -> serde_json::Value {
        serde_json::json!({
            "sweep": self.sweep,
            "geometry": self.geometry,
            "material": self.material,
            "quadrature_orders": self.orders,
            "field_mode": self.mode,
            "loop_plane": "y-z, normal +x, centred at origin",
            "points": self.rows.len(),
        })
    }
}
