//! Unit system and the unit-parsing table used by configuration files.
//!
//! Internally every angular frequency is in rad/us and every time in us, so
//! a cyclic frequency of 1 MHz is `2π` rad/us. Powers are in mW.
//!
//! Accepted unit strings, by quantity:
//!
//! | quantity            | units                                              |
//! |---------------------|----------------------------------------------------|
//! | angular frequency   | `Hz`, `kHz`, `MHz`, `GHz` (cyclic, multiplied by 2π), `rad/s`, `rad/ms`, `rad/us` |
//! | time                | `s`, `ms`, `us`, `ns`                              |
//! | power               | `W`, `mW`, `uW`                                    |
//! | Rabi per root power | `MHz/sqrt(mW)`, `kHz/sqrt(mW)`, `rad/us/sqrt(mW)`  |
//! | dimensionless/count | no unit                                            |
//!
//! `μ` is accepted as a synonym for `u`.

use std::f64::consts::TAU;

/// Angular frequency (rad/us) of a cyclic frequency given in MHz.
#[inline]
pub fn mhz(f: f64) -> f64 {
    TAU * f
}

/// Angular frequency (rad/us) of a cyclic frequency given in kHz.
#[inline]
pub fn khz(f: f64) -> f64 {
    TAU * f * 1e-3
}

/// Angular frequency (rad/us) of a cyclic frequency given in GHz.
#[inline]
pub fn ghz(f: f64) -> f64 {
    TAU * f * 1e3
}

/// Cyclic frequency in MHz of an angular frequency in rad/us.
#[inline]
pub fn to_mhz(w: f64) -> f64 {
    w / TAU
}

/// Rate in 1/ms of a rate given in 1/us.
#[inline]
pub fn per_us_to_per_ms(r: f64) -> f64 {
    r * 1e3
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    AngularFrequency,
    Time,
    Power,
    RabiPerRootPower,
    Dimensionless,
    Count,
}

impl Quantity {
    pub fn name(self) -> &'static str {
        match self {
            Quantity::AngularFrequency => "angular frequency",
            Quantity::Time => "time",
            Quantity::Power => "power",
            Quantity::RabiPerRootPower => "Rabi frequency per root power",
            Quantity::Dimensionless => "dimensionless number",
            Quantity::Count => "count",
        }
    }

    /// Canonical unit used when writing resolved configurations.
    pub fn canonical_unit(self) -> &'static str {
        match self {
            Quantity::AngularFrequency => "MHz",
            Quantity::Time => "us",
            Quantity::Power => "mW",
            Quantity::RabiPerRootPower => "MHz/sqrt(mW)",
            Quantity::Dimensionless | Quantity::Count => "",
        }
    }

    /// Convert an internal value back into the canonical unit.
    pub fn to_canonical(self, value: f64) -> f64 {
        match self {
            Quantity::AngularFrequency | Quantity::RabiPerRootPower => to_mhz(value),
            _ => value,
        }
    }
}

/// Scale factor from `unit` to the internal unit of `kind`, if the unit is known.
fn scale_for(kind: Quantity, unit: &str) -> Option<f64> {
    let unit = unit.replace('μ', "u").replace('µ', "u");
    let u = unit.as_str();
    match kind {
        Quantity::AngularFrequency => match u {
            "Hz" => Some(TAU * 1e-6),
            "kHz" => Some(TAU * 1e-3),
            "MHz" => Some(TAU),
            "GHz" => Some(TAU * 1e3),
            "rad/s" => Some(1e-6),
            "rad/ms" => Some(1e-3),
            "rad/us" => Some(1.0),
            _ => None,
        },
        Quantity::Time => match u {
            "s" => Some(1e6),
            "ms" => Some(1e3),
            "us" => Some(1.0),
            "ns" => Some(1e-3),
            _ => None,
        },
        Quantity::Power => match u {
            "W" => Some(1e3),
            "mW" => Some(1.0),
            "uW" => Some(1e-3),
            _ => None,
        },
        Quantity::RabiPerRootPower => match u {
            "MHz/sqrt(mW)" => Some(TAU),
            "kHz/sqrt(mW)" => Some(TAU * 1e-3),
            "rad/us/sqrt(mW)" => Some(1.0),
            _ => None,
        },
        Quantity::Dimensionless | Quantity::Count => u.is_empty().then_some(1.0),
    }
}

/// Parse `"<number> [unit]"` into the internal unit system.
pub fn parse_quantity(text: &str, kind: Quantity) -> std::result::Result<f64, String> {
    let text = text.trim();
    let (num, unit) = match text.find(char::is_whitespace) {
        Some(pos) => (&text[..pos], text[pos..].trim()),
        None => (text, ""),
    };
    let value: f64 = num
        .parse()
        .map_err(|_| format!("cannot parse `{num}` as a number"))?;
    if !value.is_finite() {
        return Err(format!("value `{num}` is not finite"));
    }
    if unit.is_empty() && !matches!(kind, Quantity::Dimensionless | Quantity::Count) {
        return Err(format!(
            "missing unit for {} (expected e.g. `{}`)",
            kind.name(),
            kind.canonical_unit()
        ));
    }
    let scale = scale_for(kind, unit)
        .ok_or_else(|| format!("unknown unit `{unit}` for {}", kind.name()))?;
    if kind == Quantity::Count && (value < 0.0 || value.fract() != 0.0) {
        return Err(format!("`{num}` is not a non-negative integer"));
    }
    Ok(value * scale)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cyclic_frequencies_map_to_two_pi() {
        assert!((parse_quantity("1 MHz", Quantity::AngularFrequency).unwrap() - TAU).abs() < 1e-15);
        let v = parse_quantity("-127 GHz", Quantity::AngularFrequency).unwrap();
        assert!((v - ghz(-127.0)).abs() < 1e-9);
        let v = parse_quantity("10 kHz", Quantity::AngularFrequency).unwrap();
        assert!((v - khz(10.0)).abs() < 1e-15);
    }

    #[test]
    fn times_and_powers() {
        assert_eq!(parse_quantity("1 ms", Quantity::Time).unwrap(), 1e3);
        assert_eq!(parse_quantity("5 μs", Quantity::Time).unwrap(), 5.0);
        assert_eq!(parse_quantity("0.018 W", Quantity::Power).unwrap(), 18.0);
    }

    #[test]
    fn bad_units_are_rejected() {
        let err = parse_quantity("-127 parsecs", Quantity::AngularFrequency).unwrap_err();
        assert!(err.contains("parsecs"));
        assert!(parse_quantity("3", Quantity::Time).is_err());
        assert!(parse_quantity("3 MHz", Quantity::Dimensionless).is_err());
        assert!(parse_quantity("2.5", Quantity::Count).is_err());
        assert!(parse_quantity("abc MHz", Quantity::AngularFrequency).is_err());
    }
}
