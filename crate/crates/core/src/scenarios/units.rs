//! Strict parsing of unit-suffixed quantities such as `"1.513 GHz"` or `"29 ns"`.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Physical dimension expected at a config key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dimension {
    /// Returned in linear GHz. Angular units (rad/ns, rad/us) are divided by 2π.
    Frequency,
    /// Returned in ns.
    Time,
    /// Returned in mK.
    Temperature,
    /// Returned in µm.
    Length,
    /// Returned in µA.
    Current,
    /// Returned in rad.
    Angle,
    /// Returned in cm⁻³.
    Density,
}

impl Dimension {
    fn name(self) -> &'static str {
        match self {
            Dimension::Frequency => "frequency",
            Dimension::Time => "time",
            Dimension::Temperature => "temperature",
            Dimension::Length => "length",
            Dimension::Current => "current",
            Dimension::Angle => "angle",
            Dimension::Density => "number density",
        }
    }

    fn scale(self, unit: &str) -> Option<f64> {
        let s = match (self, unit) {
            (Dimension::Frequency, "Hz") => 1e-9,
            (Dimension::Frequency, "kHz") => 1e-6,
            (Dimension::Frequency, "MHz") => 1e-3,
            (Dimension::Frequency, "GHz") => 1.0,
            (Dimension::Frequency, "rad/ns") => 1.0 / (2.0 * PI),
            (Dimension::Frequency, "rad/us") | (Dimension::Frequency, "rad/µs") => 1e-3 / (2.0 * PI),
            (Dimension::Time, "ps") => 1e-3,
            (Dimension::Time, "ns") => 1.0,
            (Dimension::Time, "us") | (Dimension::Time, "µs") => 1e3,
            (Dimension::Time, "ms") => 1e6,
            (Dimension::Time, "s") => 1e9,
            (Dimension::Temperature, "mK") => 1.0,
            (Dimension::Temperature, "K") => 1e3,
            (Dimension::Length, "nm") => 1e-3,
            (Dimension::Length, "um") | (Dimension::Length, "µm") => 1.0,
            (Dimension::Length, "mm") => 1e3,
            (Dimension::Current, "nA") => 1e-3,
            (Dimension::Current, "uA") | (Dimension::Current, "µA") => 1.0,
            (Dimension::Current, "mA") => 1e3,
            (Dimension::Current, "A") => 1e6,
            (Dimension::Angle, "rad") => 1.0,
            (Dimension::Angle, "deg") => PI / 180.0,
            (Dimension::Angle, "pi") => PI,
            (Dimension::Density, "cm^-3") | (Dimension::Density, "cm-3") => 1.0,
            (Dimension::Density, "m^-3") => 1e-6,
            _ => return None,
        };
        Some(s)
    }
}

/// Parses `"<number> <unit>"` at config path `path`. Bare numbers are rejected.
pub fn parse_quantity(path: &str, text: &str, dim: Dimension) -> Result<f64> {
    let text = text.trim();
    let split = text
        .find(|c: char| c.is_whitespace())
        .ok_or_else(|| Error::config(path, format!("`{text}` has no unit; expected a {} such as \"{}\"", dim.name(), example(dim))))?;
    let (num, unit) = text.split_at(split);
    let unit = unit.trim();
    let value: f64 = num
        .parse()
        .map_err(|_| Error::config(path, format!("`{num}` is not a number")))?;
    if !value.is_finite() {
        return Err(Error::config(path, "value must be finite"));
    }
    let scale = dim
        .scale(unit)
        .ok_or_else(|| Error::config(path, format!("unit `{unit}` is not a {} unit", dim.name())))?;
    Ok(value * scale)
}

fn example(dim: Dimension) -> &'static str {
    match dim {
        Dimension::Frequency => "1.5 GHz",
        Dimension::Time => "29 ns",
        Dimension::Temperature => "10 mK",
        Dimension::Length => "10 um",
        Dimension::Current => "0.4 uA",
        Dimension::Angle => "1 pi",
        Dimension::Density => "2.1e22 cm^-3",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_units() {
        assert_eq!(parse_quantity("a", "1.513 GHz", Dimension::Frequency).unwrap(), 1.513);
        assert!((parse_quantity("a", "0.5 MHz", Dimension::Frequency).unwrap() - 5e-4).abs() < 1e-18);
        let w = parse_quantity("a", "6.283185307179586 rad/ns", Dimension::Frequency).unwrap();
        assert!((w - 1.0).abs() < 1e-15);
        assert_eq!(parse_quantity("a", "29 ns", Dimension::Time).unwrap(), 29.0);
        assert_eq!(parse_quantity("a", "0.3 K", Dimension::Temperature).unwrap(), 300.0);
        assert!((parse_quantity("a", "1 pi", Dimension::Angle).unwrap() - PI).abs() < 1e-15);
        assert_eq!(parse_quantity("a", "2.1e22 cm^-3", Dimension::Density).unwrap(), 2.1e22);
    }

    #[test]
    fn rejects_bare_and_wrong_units() {
        let e = parse_quantity("params.kappa", "0.5", Dimension::Frequency).unwrap_err();
        assert!(e.to_string().contains("params.kappa"));
        assert!(parse_quantity("a", "0.5 ns", Dimension::Frequency).is_err());
        assert!(parse_quantity("a", "x GHz", Dimension::Frequency).is_err());
        assert!(parse_quantity("a", "inf GHz", Dimension::Frequency).is_err());
    }
}
