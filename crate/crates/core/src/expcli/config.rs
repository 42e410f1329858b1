//! Flat `key = value [unit]` configuration files.
//!
//! One assignment per line, `#` starts a comment, keys may be dotted to
//! group experiment blocks (`ramp.duration = 1 ms`). Every physical
//! quantity carries an explicit unit from the table in [`crate::units`].
//! Unknown keys, duplicate keys and bad units are reported with the line
//! number and key.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::hilbert::{FockSpace, SpinSpace};
use crate::meanfield::{DetectionCriterion, RampOptions, RampProtocol, StarkModel};
use crate::params::{PhysicalConfig, PowerCalibration};
use crate::units::{parse_quantity, Quantity};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Q(Quantity),
    Text(&'static [&'static str]),
}

use Kind::Q;
use Quantity::{AngularFrequency as Freq, Count, Dimensionless as Dimless, Power, RabiPerRootPower as Rabi, Time};

/// Every accepted key with its kind and default (as config text).
const SCHEMA: &[(&str, Kind, Option<&str>)] = &[
    ("g", Q(Freq), Some("1.1 MHz")),
    ("kappa", Q(Freq), Some("0.07 MHz")),
    ("gamma", Q(Freq), Some("3.0 MHz")),
    ("Delta_c", Q(Freq), Some("-127 GHz")),
    ("omega_hf", Q(Freq), Some("6834.7 MHz")),
    ("omega_Z", Q(Freq), Some("4.0 MHz")),
    ("eta", Q(Freq), Some("0 MHz")),
    ("zeta", Q(Freq), Some("0 MHz")),
    ("alpha", Q(Dimless), Some("0.66")),
    ("beta", Q(Dimless), Some("0.78")),
    ("f_lambda", Q(Dimless), Some("0.333333333333333333")),
    ("detuning_floor", Q(Freq), Some("1 MHz")),
    ("N_total", Q(Count), None),
    ("omega_d", Q(Freq), Some("-0.5 MHz")),
    ("beams.power_r", Q(Power), Some("18 mW")),
    ("beams.power_s", Q(Power), Some("18 mW")),
    ("calibration.c_rabi", Q(Rabi), None),
    ("calibration.lambda_r", Q(Freq), Some("0.173 MHz")),
    ("calibration.power", Q(Power), Some("18 mW")),
    ("calibration.omega_d", Q(Freq), Some("-0.5 MHz")),
    ("stark.shift_ref", Q(Freq), None),
    ("stark.power_ref", Q(Power), None),
    ("splitting.power_r", Q(Power), Some("18 mW")),
    ("splitting.eta", Q(Freq), Some("0 MHz")),
    ("splitting.resonance_shift", Q(Freq), Some("-0.5 MHz")),
    ("splitting.omega_d_min", Q(Freq), Some("-1.2 MHz")),
    ("splitting.omega_d_max", Q(Freq), Some("-0.1 MHz")),
    ("splitting.atom_points", Q(Count), Some("23")),
    ("splitting.probe_min", Q(Freq), Some("-1.4 MHz")),
    ("splitting.probe_max", Q(Freq), Some("-0.1 MHz")),
    ("splitting.probe_points", Q(Count), Some("131")),
    ("splitting.eta_p", Q(Freq), Some("0.005 MHz")),
    ("splitting.n_max", Q(Count), Some("12")),
    ("splitting.n_lambda_sim", Q(Count), Some("2")),
    ("splitting.bin_width", Q(Freq), Some("0.01 MHz")),
    ("transmission.omega_d", Q(Freq), Some("-0.5 MHz")),
    ("transmission.probe_min", Q(Freq), Some("-1.0 MHz")),
    ("transmission.probe_max", Q(Freq), Some("0.0 MHz")),
    ("transmission.probe_points", Q(Count), Some("201")),
    ("ramp.p_start", Q(Power), Some("3.6 mW")),
    ("ramp.p_end", Q(Power), Some("36 mW")),
    ("ramp.duration", Q(Time), Some("1 ms")),
    ("ramp.split", Q(Dimless), Some("0.5")),
    ("ramp.photons", Q(Dimless), Some("10")),
    ("ramp.efficiency", Q(Dimless), Some("0.18")),
    ("ramp.bin", Q(Time), Some("5 us")),
    ("ramp.samples", Q(Count), Some("1001")),
    ("ramp.seed", Q(Dimless), Some("1e-4")),
    ("ramp.fluctuation_floor", Kind::Text(&["on", "off"]), Some("on")),
    ("threshold_map.omega_d_min", Q(Freq), Some("-1.0 MHz")),
    ("threshold_map.omega_d_max", Q(Freq), Some("-0.2 MHz")),
    ("threshold_map.points", Q(Count), Some("9")),
    ("quantum.n_lambda", Q(Count), Some("8")),
    ("quantum.n_max", Q(Count), Some("20")),
    ("quantum.omega", Q(Freq), Some("0.5 MHz")),
    ("quantum.omega0", Q(Freq), Some("0.5 MHz")),
    ("quantum.delta", Q(Freq), Some("0 MHz")),
    ("quantum.kappa", Q(Freq), Some("0.25 MHz")),
    ("quantum.fault", Kind::Text(&["none", "flip-omega0-sign"]), Some("none")),
];

#[derive(Debug, Clone, PartialEq)]
enum Value {
    Number(f64),
    Text(String),
}

/// Parsed assignments: key, internal value and the line it came from
/// (0 for command-line overrides and defaults).
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    entries: BTreeMap<String, (Value, usize)>,
}

fn lookup(key: &str) -> Option<Kind> {
    SCHEMA.iter().find(|(k, _, _)| *k == key).map(|(_, kind, _)| *kind)
}

fn parse_value(key: &str, text: &str, line: usize) -> Result<Value> {
    let err = |message: String| Error::Config {
        line,
        key: key.to_string(),
        message,
    };
    match lookup(key) {
        None => Err(err("unknown key".into())),
        Some(Kind::Q(q)) => parse_quantity(text, q).map(Value::Number).map_err(err),
        Some(Kind::Text(options)) => {
            let t = text.trim();
            if options.contains(&t) {
                Ok(Value::Text(t.to_string()))
            } else {
                Err(err(format!("expected one of {options:?}, got `{t}`")))
            }
        }
    }
}

fn split_assignment(text: &str, line: usize) -> Result<(&str, &str)> {
    let (k, v) = text.split_once('=').ok_or_else(|| Error::Config {
        line,
        key: text.trim().to_string(),
        message: "expected `key = value`".into(),
    })?;
    Ok((k.trim(), v.trim()))
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RawConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (key, value) = split_assignment(body, line)?;
            let parsed = parse_value(key, value, line)?;
            if let Some((_, first)) = cfg.entries.get(key) {
                return Err(Error::Config {
                    line,
                    key: key.to_string(),
                    message: format!("duplicate key (first set on line {first})"),
                });
            }
            cfg.entries.insert(key.to_string(), (parsed, line));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Apply a `key=value` override; it replaces any value from the file.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = split_assignment(assignment, 0)?;
        let parsed = parse_value(key, value, 0)?;
        self.entries.insert(key.to_string(), (parsed, 0));
        Ok(())
    }

    fn number(&self, key: &str) -> Result<Option<f64>> {
        match self.entries.get(key) {
            Some((Value::Number(v), _)) => Ok(Some(*v)),
            Some((Value::Text(_), line)) => Err(Error::Config {
                line: *line,
                key: key.into(),
                message: "expected a number".into(),
            }),
            None => {
                let default = SCHEMA.iter().find(|(k, _, _)| *k == key).and_then(|(_, _, d)| *d);
                default.map(|d| parse_value(key, d, 0)).transpose().map(|v| match v {
                    Some(Value::Number(x)) => Some(x),
                    _ => None,
                })
            }
        }
    }

    fn get(&self, key: &str) -> Result<f64> {
        self.number(key)?.ok_or_else(|| Error::Config {
            line: 0,
            key: key.into(),
            message: "required key is missing".into(),
        })
    }

    fn count(&self, key: &str) -> Result<usize> {
        Ok(self.get(key)? as usize)
    }

    fn text(&self, key: &str) -> String {
        match self.entries.get(key) {
            Some((Value::Text(t), _)) => t.clone(),
            _ => SCHEMA
                .iter()
                .find(|(k, _, _)| *k == key)
                .and_then(|(_, _, d)| *d)
                .unwrap_or("")
                .to_string(),
        }
    }

    fn line(&self, key: &str) -> usize {
        self.entries.get(key).map_or(0, |(_, l)| *l)
    }

    fn has(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    /// Wrap a validation failure with the location of `key`.
    fn invalid(&self, key: &str, e: Error) -> Error {
        Error::Config {
            line: self.line(key),
            key: key.into(),
            message: e.to_string(),
        }
    }

    /// Every key with its value in internal units (rad/us, us, mW), so the
    /// listing parses back to a bit-identical configuration.
    pub fn resolved_listing(&self) -> Vec<(String, String)> {
        SCHEMA
            .iter()
            .filter_map(|(key, kind, _)| {
                let text = match kind {
                    Kind::Text(_) => self.text(key),
                    Kind::Q(q) => {
                        let v = self.number(key).ok().flatten()?;
                        let unit = match q {
                            Freq => " rad/us",
                            Time => " us",
                            Power => " mW",
                            Rabi => " rad/us/sqrt(mW)",
                            Dimless | Count => "",
                        };
                        format!("{v:?}{unit}")
                    }
                };
                Some((key.to_string(), text))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplittingBlock {
    pub power_r: f64,
    pub eta: f64,
    pub resonance_shift: f64,
    pub omega_d_min: f64,
    pub omega_d_max: f64,
    pub atom_points: usize,
    pub probe: Vec<f64>,
    pub eta_p: f64,
    pub fock: FockSpace,
    pub spin: SpinSpace,
    pub bin_width: f64,
    pub transmission_omega_d: f64,
    pub transmission_probe: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RampBlock {
    pub protocol: RampProtocol,
    pub split: f64,
    pub detector: DetectionCriterion,
    pub options: RampOptions,
    pub map_omega_d: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fault {
    None,
    FlipOmega0Sign,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantumBlock {
    pub n_lambda: u64,
    pub n_max: usize,
    pub omega: f64,
    pub omega0: f64,
    pub delta: f64,
    pub kappa: f64,
    pub fault: Fault,
}

/// Fully resolved run configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioConfig {
    pub physical: PhysicalConfig,
    pub calibration: PowerCalibration,
    pub power_r: f64,
    pub power_s: f64,
    pub stark: StarkModel,
    pub splitting: SplittingBlock,
    pub ramp: RampBlock,
    pub quantum: QuantumBlock,
}

fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

impl ScenarioConfig {
    pub fn from_raw(raw: &RawConfig) -> Result<Self> {
        let mut physical = PhysicalConfig {
            g: raw.get("g")?,
            kappa: raw.get("kappa")?,
            gamma: raw.get("gamma")?,
            delta_c: raw.get("Delta_c")?,
            omega_hf: raw.get("omega_hf")?,
            omega_z: raw.get("omega_Z")?,
            eta: raw.get("eta")?,
            zeta: raw.get("zeta")?,
            omega_r: 0.0,
            omega_s: 0.0,
            n_total: 1,
            alpha: raw.get("alpha")?,
            beta: raw.get("beta")?,
            f_lambda: raw.get("f_lambda")?,
            detuning_floor: raw.get("detuning_floor")?,
        };
        physical.n_total = if raw.has("N_total") {
            raw.get("N_total")? as u64
        } else {
            physical
                .atoms_from_shift(raw.get("omega_d")?)
                .map_err(|e| raw.invalid("omega_d", e))?
        };
        physical.validate().map_err(|e| raw.invalid("N_total", e))?;

        let calibration = if raw.has("calibration.c_rabi") {
            PowerCalibration::new(raw.get("calibration.c_rabi")?).map_err(|e| raw.invalid("calibration.c_rabi", e))?
        } else {
            PowerCalibration::from_splitting(
                &physical,
                raw.get("calibration.power")?,
                raw.get("calibration.lambda_r")?,
                raw.get("calibration.omega_d")?,
            )
            .map_err(|e| raw.invalid("calibration.lambda_r", e))?
        };
        let power_r = raw.get("beams.power_r")?;
        let power_s = raw.get("beams.power_s")?;
        physical.omega_r = calibration.rabi_from_power(power_r).map_err(|e| raw.invalid("beams.power_r", e))?;
        physical.omega_s = calibration.rabi_from_power(power_s).map_err(|e| raw.invalid("beams.power_s", e))?;

        let stark = match (raw.number("stark.shift_ref")?, raw.number("stark.power_ref")?) {
            (Some(shift_ref), Some(power_ref)) if power_ref > 0.0 => StarkModel::Anchored { shift_ref, power_ref },
            (None, None) => StarkModel::Computed,
            _ => {
                return Err(Error::Config {
                    line: raw.line("stark.shift_ref").max(raw.line("stark.power_ref")),
                    key: "stark.shift_ref".into(),
                    message: "stark.shift_ref and a positive stark.power_ref must be given together".into(),
                })
            }
        };

        let n_max = raw.count("splitting.n_max")?;
        let n_sim = raw.count("splitting.n_lambda_sim")? as u64;
        let splitting = SplittingBlock {
            power_r: raw.get("splitting.power_r")?,
            eta: raw.get("splitting.eta")?,
            resonance_shift: raw.get("splitting.resonance_shift")?,
            omega_d_min: raw.get("splitting.omega_d_min")?,
            omega_d_max: raw.get("splitting.omega_d_max")?,
            atom_points: raw.count("splitting.atom_points")?,
            probe: grid(
                raw.get("splitting.probe_min")?,
                raw.get("splitting.probe_max")?,
                raw.count("splitting.probe_points")?,
            ),
            eta_p: raw.get("splitting.eta_p")?,
            fock: FockSpace::new(n_max).map_err(|e| raw.invalid("splitting.n_max", e))?,
            spin: SpinSpace::new(n_sim).map_err(|e| raw.invalid("splitting.n_lambda_sim", e))?,
            bin_width: raw.get("splitting.bin_width")?,
            transmission_omega_d: raw.get("transmission.omega_d")?,
            transmission_probe: grid(
                raw.get("transmission.probe_min")?,
                raw.get("transmission.probe_max")?,
                raw.count("transmission.probe_points")?,
            ),
        };

        let protocol = RampProtocol::new(raw.get("ramp.p_start")?, raw.get("ramp.p_end")?, raw.get("ramp.duration")?)
            .map_err(|e| raw.invalid("ramp.duration", e))?;
        let split = raw.get("ramp.split")?;
        if !(0.0..=1.0).contains(&split) {
            return Err(raw.invalid("ramp.split", Error::InvalidConfig("split must lie in [0, 1]".into())));
        }
        let detector = DetectionCriterion {
            photons: raw.get("ramp.photons")?,
            efficiency: raw.get("ramp.efficiency")?,
            bin: raw.get("ramp.bin")?,
        };
        if !(detector.photons > 0.0 && detector.efficiency > 0.0 && detector.efficiency <= 1.0 && detector.bin > 0.0) {
            return Err(raw.invalid(
                "ramp.efficiency",
                Error::InvalidConfig("detector needs photons > 0, efficiency in (0, 1] and bin > 0".into()),
            ));
        }
        let options = RampOptions {
            seed: raw.get("ramp.seed")?,
            fluctuation_floor: raw.text("ramp.fluctuation_floor") == "on",
            samples: raw.count("ramp.samples")?.max(2),
            ..RampOptions::default()
        };
        let ramp = RampBlock {
            protocol,
            split,
            detector,
            options,
            map_omega_d: grid(
                raw.get("threshold_map.omega_d_min")?,
                raw.get("threshold_map.omega_d_max")?,
                raw.count("threshold_map.points")?,
            ),
        };

        let quantum = QuantumBlock {
            n_lambda: raw.get("quantum.n_lambda")? as u64,
            n_max: raw.count("quantum.n_max")?,
            omega: raw.get("quantum.omega")?,
            omega0: raw.get("quantum.omega0")?,
            delta: raw.get("quantum.delta")?,
            kappa: raw.get("quantum.kappa")?,
            fault: match raw.text("quantum.fault").as_str() {
                "flip-omega0-sign" => Fault::FlipOmega0Sign,
                _ => Fault::None,
            },
        };
        if quantum.n_lambda < 1 || quantum.n_lambda > 8 || quantum.n_max < 1 || quantum.n_max > 20 {
            return Err(raw.invalid(
                "quantum.n_lambda",
                Error::InvalidConfig("quantum checks need 1 <= N_lambda <= 8 and 1 <= n_max <= 20".into()),
            ));
        }
        if !(quantum.kappa >= 0.0) {
            return Err(raw.invalid("quantum.kappa", Error::InvalidConfig("kappa must be >= 0".into())));
        }

        Ok(ScenarioConfig {
            physical,
            calibration,
            power_r,
            power_s,
            stark,
            splitting,
            ramp,
            quantum,
        })
    }

    pub fn total_power(&self) -> f64 {
        self.power_r + self.power_s
    }

    pub fn beam_split(&self) -> f64 {
        let total = self.total_power();
        if total > 0.0 {
            self.power_r / total
        } else {
            0.5
        }
    }
}
