//! Lab parameters and their mapping onto the effective Dicke / Tavis-Cummings
//! parameters.
//!
//! All angular frequencies are rad/us (see [`crate::units`]). Detunings are
//! stored instead of absolute optical frequencies: the Raman beam
//! frequencies are `ω_c + η ∓ (ω_hf + ζ)`, so every quantity below follows
//! from `Δ_c`, `η`, `ζ`, `ω_hf` and `ω_Z`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::{mhz, per_us_to_per_ms};

/// `√3/12`, the Raman-coupling line-strength prefactor.
const RAMAN_PREFACTOR: f64 = 0.144_337_567_297_406_1;

/// Summed D2 line strength for one linear polarization, relative to the
/// cycling transition that defines the Rabi-frequency convention.
pub const LINEAR_POLARIZATION_STRENGTH: f64 = 2.0 / 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConfig {
    /// Single-atom coupling (half the single-photon Rabi frequency).
    pub g: f64,
    /// Cavity field decay rate (HWHM).
    pub kappa: f64,
    /// Atomic HWHM linewidth.
    pub gamma: f64,
    /// Cavity-atom detuning `ω_c − ω_a`.
    pub delta_c: f64,
    /// Ground-state hyperfine splitting.
    pub omega_hf: f64,
    /// Linear Zeeman shift.
    pub omega_z: f64,
    pub eta: f64,
    pub zeta: f64,
    /// Rabi frequency of the beam driving the `r` Raman channel.
    pub omega_r: f64,
    /// Rabi frequency of the beam driving the `s` Raman channel.
    pub omega_s: f64,
    pub n_total: u64,
    pub alpha: f64,
    pub beta: f64,
    pub f_lambda: f64,
    /// Smallest detuning magnitude accepted in any denominator.
    pub detuning_floor: f64,
}

impl Default for PhysicalConfig {
    fn default() -> Self {
        PhysicalConfig::reference()
    }
}

impl PhysicalConfig {
    fn reference_apparatus() -> Self {
        PhysicalConfig {
            g: mhz(1.1),
            kappa: mhz(0.07),
            gamma: mhz(3.0),
            delta_c: mhz(-127_000.0),
            omega_hf: mhz(6_834.7),
            omega_z: mhz(4.0),
            eta: 0.0,
            zeta: 0.0,
            omega_r: 0.0,
            omega_s: 0.0,
            n_total: 1,
            alpha: 0.66,
            beta: 0.78,
            f_lambda: 1.0 / 3.0,
            detuning_floor: mhz(1.0),
        }
    }
}

/// Raman beam detunings from the atomic resonance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RamanDetunings {
    pub delta_r: f64,
    pub delta_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveParams {
    /// Effective cavity frequency.
    pub omega: f64,
    /// Effective spin frequency.
    pub omega0: f64,
    /// Dispersive spin-cavity cross term.
    pub delta: f64,
    pub lambda_r: f64,
    pub lambda_s: f64,
    pub omega_ds: f64,
    pub delta_r: f64,
    pub delta_s: f64,
    pub n_lambda: u64,
    pub kappa: f64,
    /// Offset of the model's rotating frame from the empty-cavity resonance
    /// (the `η` of the Raman beam frequencies). A probe at detuning `Δ_p`
    /// from the empty cavity appears at `Δ_p − η` in the model frame.
    pub eta: f64,
}

/// Rabi frequency per square-root beam power, `Ω = c_rabi·√P`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerCalibration {
    /// rad/(us·√mW)
    pub c_rabi: f64,
}

impl PhysicalConfig {
    /// Cavity QED and level-structure values of the reference apparatus,
    /// loaded with the atom number that gives a `−2π×0.5 MHz` dispersive shift.
    pub fn reference() -> Self {
        let mut cfg = PhysicalConfig::reference_apparatus();
        cfg.n_total = cfg
            .atoms_from_shift(mhz(-0.5))
            .expect("reference configuration is sign consistent");
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("g", self.g),
            ("kappa", self.kappa),
            ("gamma", self.gamma),
            ("omega_hf", self.omega_hf),
            ("omega_Z", self.omega_z),
            ("detuning_floor", self.detuning_floor),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [
            ("Delta_c", self.delta_c),
            ("eta", self.eta),
            ("zeta", self.zeta),
            ("Omega_r", self.omega_r),
            ("Omega_s", self.omega_s),
        ] {
            if !v.is_finite() {
                return Err(Error::InvalidConfig(format!("{name} must be finite")));
            }
        }
        if self.n_total < 1 {
            return Err(Error::InvalidConfig("N_total must be at least 1".into()));
        }
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("f_lambda", self.f_lambda)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::InvalidConfig(format!("{name} must lie in (0, 1], got {v}")));
            }
        }
        if self.n_lambda() < 1 {
            return Err(Error::InvalidConfig(
                "f_lambda * N_total rounds to zero coupled atoms".into(),
            ));
        }
        Ok(())
    }

    /// Splitting between the two coupled ground states, `ω_hf − 3ω_Z`.
    pub fn omega_1(&self) -> f64 {
        self.omega_hf - 3.0 * self.omega_z
    }

    pub fn n_lambda(&self) -> u64 {
        (self.f_lambda * self.n_total as f64).round() as u64
    }

    pub fn derive_detunings(&self) -> RamanDetunings {
        RamanDetunings {
            delta_r: self.delta_c + self.eta - self.zeta - 3.0 * self.omega_z,
            delta_s: self.delta_c + self.eta + self.omega_hf + self.zeta,
        }
    }

    fn check_floor(&self, which: &'static str, value: f64) -> Result<f64> {
        if value.abs() < self.detuning_floor || !value.is_finite() {
            return Err(Error::DegenerateDetuning {
                which,
                value,
                floor: self.detuning_floor,
            });
        }
        Ok(value)
    }

    /// Differential light shift between the two coupled ground states.
    pub fn differential_stark_shift(&self) -> Result<f64> {
        let RamanDetunings { delta_r, delta_s } = self.derive_detunings();
        let dr = self.check_floor("Delta_r", delta_r)?;
        let dr1 = self.check_floor("Delta_r - omega_1", delta_r - self.omega_1())?;
        let ds = self.check_floor("Delta_s", delta_s)?;
        let or2 = self.omega_r * self.omega_r;
        let os2 = self.omega_s * self.omega_s;
        Ok((or2 / dr + os2 / dr1 - (os2 / ds + or2 / dr1)) / 6.0)
    }

    pub fn effective_params(&self) -> Result<EffectiveParams> {
        self.validate()?;
        let RamanDetunings { delta_r, delta_s } = self.derive_detunings();
        let dr = self.check_floor("Delta_r", delta_r)?;
        let ds = self.check_floor("Delta_s", delta_s)?;
        let omega_ds = self.differential_stark_shift()?;

        let n = self.n_total as f64;
        let n_lambda = self.n_lambda();
        let nl = n_lambda as f64;
        let n_bar = n - nl;
        let g2 = self.g * self.g;
        let sum = g2 / ds + g2 / dr;
        let diff = g2 / ds - g2 / dr;

        let omega = self.alpha / 3.0 * n * sum - self.alpha / 3.0 * n_bar * diff - self.eta;
        let omega0 = omega_ds - (self.omega_hf + self.zeta - self.omega_1());
        let delta = self.alpha * 2.0 / 3.0 * nl * diff;
        let prefactor = self.beta * RAMAN_PREFACTOR * nl.sqrt() * self.g;

        Ok(EffectiveParams {
            omega,
            omega0,
            delta,
            lambda_r: prefactor * self.omega_r / dr,
            lambda_s: prefactor * self.omega_s / ds,
            omega_ds,
            delta_r,
            delta_s,
            n_lambda,
            kappa: self.kappa,
            eta: self.eta,
        })
    }

    /// Cavity resonance shift produced by `n` atoms in the lower manifold.
    pub fn dispersive_shift(&self, n: u64) -> Result<f64> {
        let dr = self.check_floor("Delta_r", self.derive_detunings().delta_r)?;
        Ok(self.alpha * 2.0 / 3.0 * n as f64 * self.g * self.g / dr)
    }

    /// Atom number whose dispersive shift is `omega_d`, rounded to the nearest atom.
    pub fn atoms_from_shift(&self, omega_d: f64) -> Result<u64> {
        let dr = self.check_floor("Delta_r", self.derive_detunings().delta_r)?;
        if omega_d == 0.0 {
            return Ok(0);
        }
        if omega_d.signum() != dr.signum() {
            return Err(Error::SignMismatch { omega_d, delta_r: dr });
        }
        let per_atom = self.alpha * 2.0 / 3.0 * self.g * self.g / dr;
        Ok((omega_d / per_atom).round() as u64)
    }

    /// Order-of-magnitude spontaneous scattering rate per atom, in 1/ms.
    ///
    /// Far-detuned estimate `Γ·s·Ω²/(4Δ²)` summed over both beams, with the
    /// full linewidth `Γ = 2γ` and `s` the linear-polarization line strength
    /// relative to the cycling transition. Diagnostic only; it does not enter
    /// the dynamics.
    pub fn scattering_rate_estimate(&self) -> Result<f64> {
        let RamanDetunings { delta_r, delta_s } = self.derive_detunings();
        let dr = self.check_floor("Delta_r", delta_r)?;
        let ds = self.check_floor("Delta_s", delta_s)?;
        let per_us = 2.0
            * self.gamma
            * LINEAR_POLARIZATION_STRENGTH
            * (self.omega_r.powi(2) / (4.0 * dr * dr) + self.omega_s.powi(2) / (4.0 * ds * ds));
        Ok(per_us_to_per_ms(per_us))
    }

    /// Copy with both Raman beams set from a total power split between them.
    /// `split` is the fraction of `p_total` sent to the `r` beam.
    pub fn with_beam_power(&self, calib: &PowerCalibration, p_total: f64, split: f64) -> Result<Self> {
        let mut cfg = self.clone();
        cfg.omega_r = calib.rabi_from_power(split * p_total)?;
        cfg.omega_s = calib.rabi_from_power((1.0 - split) * p_total)?;
        Ok(cfg)
    }

    /// Copy holding the atom number that produces dispersive shift `omega_d`.
    pub fn with_dispersive_shift(&self, omega_d: f64) -> Result<Self> {
        let mut cfg = self.clone();
        cfg.n_total = self.atoms_from_shift(omega_d)?;
        Ok(cfg)
    }

    /// `ζ` placing the effective spin frequency at `omega0`. `Δ_r` depends
    /// weakly on `ζ`, so the light shift is iterated to a fixed point.
    pub fn zeta_for_spin_frequency(&self, omega0: f64) -> Result<f64> {
        let mut cfg = self.clone();
        for _ in 0..8 {
            let ds = cfg.differential_stark_shift()?;
            cfg.zeta = ds - (self.omega_hf - self.omega_1()) - omega0;
        }
        Ok(cfg.zeta)
    }
}

impl EffectiveParams {
    /// Cavity frequency seen with all coupled atoms in the lower state,
    /// `ω − δ/2`. This is the cavity term of the Tavis-Cummings form and
    /// equals `ω_d − η`.
    pub fn cavity_tc(&self) -> f64 {
        self.omega - self.delta / 2.0
    }

    /// Single coupling of the symmetric (Dicke) form.
    pub fn dicke_coupling(&self) -> f64 {
        0.5 * (self.lambda_r + self.lambda_s)
    }

    /// `(λ_s − λ_r)/(λ_s + λ_r)`.
    pub fn asymmetry(&self) -> f64 {
        (self.lambda_s - self.lambda_r) / (self.lambda_s + self.lambda_r)
    }

    pub fn with_dicke_coupling(&self, lambda: f64) -> Self {
        EffectiveParams {
            lambda_r: lambda,
            lambda_s: lambda,
            ..self.clone()
        }
    }

    /// Same collective parameters carried by a smaller spin. Couplings enter
    /// the Hamiltonian as `λ/√N_λ` and `δ/N_λ`, so the collective scales are
    /// unchanged; only finite-size effects differ.
    pub fn truncated(&self, n_lambda: u64) -> Self {
        EffectiveParams {
            n_lambda,
            ..self.clone()
        }
    }

    pub fn critical_coupling(&self) -> Result<f64> {
        critical_coupling(self.omega0, self.cavity_tc(), self.kappa)
    }
}

/// Dissipative phase boundary of the open Dicke model.
///
/// `omega_cav` is `ω − δ/2`. Only the relative sign of the two frequencies
/// matters: a global sign flip of the Hamiltonian maps the dynamics onto
/// itself, so equal-sign negative frequencies are evaluated on magnitudes.
pub fn critical_coupling(omega0: f64, omega_cav: f64, kappa: f64) -> Result<f64> {
    if !(omega0.is_finite() && omega_cav.is_finite() && kappa.is_finite()) || kappa < 0.0 {
        return Err(Error::OutsideValidity("non-finite parameters".into()));
    }
    if omega0 == 0.0 || omega_cav == 0.0 || omega0.signum() != omega_cav.signum() {
        return Err(Error::OutsideValidity(format!(
            "omega0 = {omega0:.6e} and omega - delta/2 = {omega_cav:.6e} must be nonzero with equal sign"
        )));
    }
    let w0 = omega0.abs();
    let w = omega_cav.abs();
    Ok(0.5 * (w0 / w * (kappa * kappa + w * w)).sqrt())
}

impl PowerCalibration {
    pub fn new(c_rabi: f64) -> Result<Self> {
        if !(c_rabi.is_finite() && c_rabi > 0.0) {
            return Err(Error::InvalidConfig(format!("c_rabi must be positive, got {c_rabi}")));
        }
        Ok(PowerCalibration { c_rabi })
    }

    pub fn rabi_from_power(&self, power_mw: f64) -> Result<f64> {
        if power_mw < 0.0 || power_mw.is_nan() {
            return Err(Error::NegativePower(power_mw));
        }
        Ok(self.c_rabi * power_mw.sqrt())
    }

    /// Fix `c_rabi` so that `power_mw` in the `r` beam alone yields
    /// `|λ_r| = lambda_r` at dispersive shift `omega_d`.
    pub fn from_splitting(cfg: &PhysicalConfig, power_mw: f64, lambda_r: f64, omega_d: f64) -> Result<Self> {
        if !(power_mw > 0.0) {
            return Err(Error::NegativePower(power_mw));
        }
        let mut probe = cfg.with_dispersive_shift(omega_d)?;
        probe.omega_r = 1.0;
        probe.omega_s = 0.0;
        let per_rabi = probe.effective_params()?.lambda_r.abs();
        PowerCalibration::new(lambda_r.abs() / per_rabi / power_mw.sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::{ghz, to_mhz};
    use approx::assert_relative_eq;

    fn reference_calibration() -> PowerCalibration {
        PowerCalibration::from_splitting(&PhysicalConfig::reference(), 18.0, mhz(0.173), mhz(-0.5)).unwrap()
    }

    #[test]
    fn detunings_reduce_to_cavity_detuning() {
        let cfg = PhysicalConfig {
            eta: 0.0,
            zeta: 0.0,
            omega_z: 0.0,
            omega_hf: 0.0,
            ..PhysicalConfig::default()
        };
        let d = cfg.derive_detunings();
        assert_eq!(d.delta_r, cfg.delta_c);
        assert_eq!(d.delta_s, cfg.delta_c);
    }

    #[test]
    fn reference_detunings() {
        let d = PhysicalConfig::default().derive_detunings();
        // −127000 − 3·4.0 and −127000 + 6834.7, in 2π·MHz
        assert_relative_eq!(d.delta_r, ghz(-127.012), max_relative = 1e-12);
        assert_relative_eq!(d.delta_s, ghz(-120.1653), max_relative = 1e-12);
        let ratio = (d.delta_r - d.delta_s) / (d.delta_r + d.delta_s);
        assert!((ratio - 0.028).abs() < 0.001, "ratio {ratio}");
    }

    #[test]
    fn stark_shift_vanishes_without_light_or_with_symmetric_beams() {
        let cfg = PhysicalConfig::default();
        assert_eq!(cfg.differential_stark_shift().unwrap(), 0.0);

        // Δ_r = Δ_s requires ω_hf + ζ = −ζ − 3ω_Z.
        let mut sym = PhysicalConfig {
            omega_r: mhz(500.0),
            omega_s: mhz(500.0),
            ..cfg
        };
        sym.zeta = -(sym.omega_hf + 3.0 * sym.omega_z) / 2.0;
        let d = sym.derive_detunings();
        assert_relative_eq!(d.delta_r, d.delta_s, max_relative = 1e-14);
        assert!(sym.differential_stark_shift().unwrap().abs() < 1e-12);
    }

    #[test]
    fn stark_shift_degenerate_denominator() {
        let cfg = PhysicalConfig {
            delta_c: 3.0 * mhz(4.0) + mhz(0.5),
            omega_r: mhz(1.0),
            ..PhysicalConfig::default()
        };
        assert!(matches!(
            cfg.differential_stark_shift(),
            Err(Error::DegenerateDetuning { which: "Delta_r", .. })
        ));
    }

    #[test]
    fn stark_shift_from_calibrated_beams() {
        // Hand evaluation with Ω = 2π·889.9 MHz (18 mW per beam):
        // both beams  Ω²(1/Δ_r − 1/Δ_s)/6          ≈ +2π·0.0592 MHz
        // r beam only Ω²(1/Δ_r − 1/(Δ_r − ω_1))/6  ≈ −2π·0.0530 MHz
        let calib = reference_calibration();
        let cfg = PhysicalConfig::reference();
        let both = cfg.with_beam_power(&calib, 36.0, 0.5).unwrap();
        assert_relative_eq!(to_mhz(both.differential_stark_shift().unwrap()), 0.0592, max_relative = 5e-3);
        let single = cfg.with_beam_power(&calib, 18.0, 1.0).unwrap();
        assert_relative_eq!(to_mhz(single.differential_stark_shift().unwrap()), -0.0530, max_relative = 5e-3);
    }

    #[test]
    fn couplings_off() {
        let cfg = PhysicalConfig::reference();
        let eff = cfg.effective_params().unwrap();
        assert_eq!(eff.lambda_r, 0.0);
        assert_eq!(eff.lambda_s, 0.0);
        assert_relative_eq!(eff.omega0, -(cfg.zeta + 3.0 * cfg.omega_z), max_relative = 1e-12);
    }

    #[test]
    fn calibrated_coupling_anchor() {
        let calib = reference_calibration();
        // 2π·0.173 / (0.78·√3/12·√39761·1.1/127012) / √18  ≈ 2π·209.7
        assert_relative_eq!(to_mhz(calib.c_rabi), 209.7, max_relative = 1e-3);
        let cfg = PhysicalConfig::reference().with_beam_power(&calib, 18.0, 1.0).unwrap();
        let eff = cfg.effective_params().unwrap();
        assert_relative_eq!(eff.lambda_r.abs(), mhz(0.173), max_relative = 1e-9);
        assert!(eff.lambda_r < 0.0, "negative detuning keeps a negative coupling");
        assert_relative_eq!(to_mhz(eff.cavity_tc()), -0.5, max_relative = 1e-4);
    }

    #[test]
    fn asymmetry_matches_detuning_ratio() {
        let calib = reference_calibration();
        let cfg = PhysicalConfig::reference().with_beam_power(&calib, 36.0, 0.5).unwrap();
        let eff = cfg.effective_params().unwrap();
        let d = cfg.derive_detunings();
        assert_relative_eq!(
            eff.asymmetry(),
            (d.delta_r - d.delta_s) / (d.delta_r + d.delta_s),
            max_relative = 1e-12
        );
        assert!((eff.asymmetry() - 0.028).abs() < 0.002);
    }

    #[test]
    fn critical_coupling_closed_forms() {
        let lc = critical_coupling(mhz(1.0), mhz(0.4), 0.0).unwrap();
        assert_relative_eq!(lc, (mhz(1.0) * mhz(0.4)).sqrt() / 2.0, max_relative = 1e-14);
        let lc = critical_coupling(mhz(0.8), mhz(0.8), 0.0).unwrap();
        assert_relative_eq!(lc, mhz(0.8) / 2.0, max_relative = 1e-14);
        // ½·√((1/0.5)·(0.07² + 0.5²)) = 0.3570014
        let lc = critical_coupling(mhz(1.0), mhz(0.5), mhz(0.07)).unwrap();
        assert_relative_eq!(to_mhz(lc), 0.357_001_4, max_relative = 1e-6);
        // global sign flip
        let neg = critical_coupling(mhz(-1.0), mhz(-0.5), mhz(0.07)).unwrap();
        assert_eq!(lc, neg);
    }

    #[test]
    fn critical_coupling_rejects_mixed_signs() {
        assert!(matches!(critical_coupling(mhz(1.0), mhz(-0.5), 0.1), Err(Error::OutsideValidity(_))));
        assert!(matches!(critical_coupling(0.0, mhz(0.5), 0.1), Err(Error::OutsideValidity(_))));
    }

    #[test]
    fn dispersive_shift_and_inverse() {
        let cfg = PhysicalConfig::default();
        assert_eq!(cfg.dispersive_shift(0).unwrap(), 0.0);
        let one = cfg.dispersive_shift(1000).unwrap();
        assert_relative_eq!(cfg.dispersive_shift(2000).unwrap(), 2.0 * one, max_relative = 1e-15);
        assert_eq!(cfg.atoms_from_shift(one).unwrap(), 1000);
        assert_eq!(cfg.atoms_from_shift(0.0).unwrap(), 0);
        // 0.5 / (0.44 · 1.21 / 127012) ≈ 1.1928e5
        let n = cfg.atoms_from_shift(mhz(-0.5)).unwrap();
        assert!((119_200..=119_350).contains(&n), "n = {n}");
        assert!(matches!(cfg.atoms_from_shift(mhz(0.5)), Err(Error::SignMismatch { .. })));
    }

    #[test]
    fn rabi_square_root_law() {
        let calib = PowerCalibration::new(2.0).unwrap();
        assert_eq!(calib.rabi_from_power(0.0).unwrap(), 0.0);
        assert_relative_eq!(calib.rabi_from_power(4.0 * 7.0).unwrap(), 2.0 * calib.rabi_from_power(7.0).unwrap());
        assert!(matches!(calib.rabi_from_power(-1.0), Err(Error::NegativePower(_))));
    }

    #[test]
    fn scattering_rate_band_and_scaling() {
        assert_eq!(PhysicalConfig::default().scattering_rate_estimate().unwrap(), 0.0);
        let calib = reference_calibration();
        let cfg = PhysicalConfig::reference();
        let r18 = cfg.with_beam_power(&calib, 36.0, 0.5).unwrap().scattering_rate_estimate().unwrap();
        assert!((0.3..=0.8).contains(&r18), "rate {r18}");
        let r36 = cfg.with_beam_power(&calib, 72.0, 0.5).unwrap().scattering_rate_estimate().unwrap();
        assert_relative_eq!(r36, 2.0 * r18, max_relative = 1e-12);
    }

    #[test]
    fn zeta_places_spin_frequency() {
        let calib = reference_calibration();
        let cfg = PhysicalConfig::reference().with_beam_power(&calib, 18.0, 1.0).unwrap();
        let target = mhz(-0.5);
        let zeta = cfg.zeta_for_spin_frequency(target).unwrap();
        let eff = PhysicalConfig { zeta, ..cfg }.effective_params().unwrap();
        assert!((eff.omega0 - target).abs() < 1e-10);
    }

    #[test]
    fn validation() {
        let mut cfg = PhysicalConfig::reference();
        cfg.alpha = 1.5;
        assert!(cfg.validate().is_err());
        let mut cfg = PhysicalConfig::reference();
        cfg.n_total = 1;
        assert!(cfg.validate().is_err(), "1/3 rounds to zero coupled atoms");
    }
}
