//! CODATA 2018 constants in SI units.

/// Vacuum permeability µ₀ (N A⁻²).
pub const MU_0: f64 = 1.256_637_062_12e-6;
/// Bohr magneton µ_B (J T⁻¹).
pub const MU_B: f64 = 9.274_010_078_3e-24;
/// Planck constant h (J s), exact.
pub const PLANCK: f64 = 6.626_070_15e-34;
/// Boltzmann constant k_B (J K⁻¹), exact.
pub const BOLTZMANN: f64 = 1.380_649e-23;
/// Free-electron Landé factor magnitude used as the default g_e.
pub const G_ELECTRON: f64 = 2.0;

/// Bose–Einstein occupation of a mode at linear frequency `freq_hz` and temperature `temp_k`.
/// Returns 0 for non-positive temperatures.
pub fn bose_occupation(freq_hz: f64, temp_k: f64) -> f64 {
    if temp_k <= 0.0 {
        return 0.0;
    }
    let x = PLANCK * freq_hz / (BOLTZMANN * temp_k);
    1.0 / x.exp_m1()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thermal_occupations_at_ten_millikelvin() {
        let nm = bose_occupation(1.513e9, 0.010);
        let nq = bose_occupation(3.0e9, 0.010);
        assert!((nm - 7.0e-4).abs() < 0.1e-4, "n_m = {nm}");
        assert!((nq - 5.6e-7).abs() < 0.1e-7, "n_q = {nq}");
        assert_eq!(bose_occupation(1e9, 0.0), 0.0);
    }
}
