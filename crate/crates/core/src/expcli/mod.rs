//! Experiment driver behind the `dicke-sim` binary.
//!
//! Each subcommand reads a config file plus `--set key=value` overrides,
//! runs one experiment and writes a run directory holding `manifest.json`,
//! `summary.json`, `resolved.cfg` and one or more CSV tables.

pub mod check;
pub mod config;
pub mod record;
mod runner;

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub use config::{RawConfig, ScenarioConfig};
pub use runner::{execute, Outcome};

/// The experiments exposed as subcommands.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Params,
    SplittingMap,
    Transmission,
    Ramp,
    ThresholdMap,
    QuantumCheck,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Params => "params",
            Experiment::SplittingMap => "splitting-map",
            Experiment::Transmission => "transmission",
            Experiment::Ramp => "ramp",
            Experiment::ThresholdMap => "threshold-map",
            Experiment::QuantumCheck => "quantum-check",
        }
    }
}

/// Expected photon counts per detection bin for an intracavity photon
/// number trace: `efficiency · 2κ · n · bin`.
pub fn counts_model(photons: &[f64], kappa: f64, efficiency: f64, bin: f64) -> Result<Vec<f64>> {
    if !(efficiency > 0.0 && efficiency <= 1.0) {
        return Err(Error::InvalidConfig(format!("efficiency {efficiency} outside (0, 1]")));
    }
    if !(bin > 0.0) || !(kappa > 0.0) {
        return Err(Error::InvalidConfig("counts need bin > 0 and kappa > 0".into()));
    }
    Ok(photons.iter().map(|n| efficiency * 2.0 * kappa * n * bin).collect())
}

/// Detection efficiency implied by `counts` registered for a constant
/// photon number `photons` over one bin.
pub fn efficiency_from_counts(counts: f64, photons: f64, kappa: f64, bin: f64) -> Result<f64> {
    let flux = 2.0 * kappa * photons * bin;
    if !(flux > 0.0) {
        return Err(Error::InvalidConfig("photon flux must be positive".into()));
    }
    Ok(counts / flux)
}

/// Process exit code for an error: 1 for configuration problems, 3 for a
/// failed self-check, 2 for everything else.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config { .. } | Error::InvalidConfig(_) => 1,
        Error::CheckFailed { .. } => 3,
        _ => 2,
    }
}

/// Load a configuration, apply overrides and run `experiment`, writing the
/// record to `out`. A failed self-check still writes its record; the caller
/// inspects `Outcome::failed_check`.
pub fn run(experiment: Experiment, config_path: Option<&Path>, overrides: &[String], out: &Path, force: bool) -> Result<(PathBuf, Outcome)> {
    let mut raw = match config_path {
        Some(p) => RawConfig::load(p)?,
        None => RawConfig::parse("")?,
    };
    for o in overrides {
        raw.set(o)?;
    }
    let cfg = ScenarioConfig::from_raw(&raw)?;
    let started = chrono::Utc::now().to_rfc3339();
    let (mut record, outcome) = execute(experiment, &cfg, &raw)?;
    record.manifest.config_path = config_path.map(|p| p.display().to_string()).unwrap_or_default();
    record.manifest.overrides = overrides.to_vec();
    record.manifest.started_at = started;
    record.manifest.finished_at = chrono::Utc::now().to_rfc3339();
    let path = record.write(out, force)?;
    Ok((path, outcome))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_and_efficiency_invert() {
        let kappa = crate::units::mhz(0.07);
        let c = counts_model(&[10.0], kappa, 0.18, 5.0).unwrap();
        let eff = efficiency_from_counts(c[0], 10.0, kappa, 5.0).unwrap();
        assert!((eff - 0.18).abs() < 1e-14);
        assert!(counts_model(&[1.0], kappa, 1.5, 5.0).is_err());
        assert!(counts_model(&[1.0], kappa, 0.5, 0.0).is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::InvalidConfig("x".into())), 1);
        assert_eq!(exit_code(&Error::CheckFailed { id: "a".into(), detail: "b".into() }), 3);
        assert_eq!(exit_code(&Error::SingularLiouvillian("x".into())), 2);
    }
}
