//! Single-excitation spectrum of the Tavis-Cummings model and extraction of
//! the normal-mode splitting from transmission scans.

use levenberg_marquardt::{LeastSquaresProblem, LevenbergMarquardt};
use nalgebra::storage::Owned;
use nalgebra::{DVector, Dyn, OMatrix, OVector, U5};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{FockSpace, SpinSpace};
use crate::lindblad::{model_frame_detuning, transmission_scan};
use crate::params::{PhysicalConfig, PowerCalibration};

/// Eigenvalues `(E₋, E₊)` of `[[ω_cav, λ_r], [λ_r, ω₀]]`.
pub fn tc_normal_modes(omega_cav: f64, omega0: f64, lambda_r: f64) -> (f64, f64) {
    let mean = 0.5 * (omega_cav + omega0);
    let half = (0.25 * (omega_cav - omega0).powi(2) + lambda_r * lambda_r).sqrt();
    (mean - half, mean + half)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AvoidedCrossing {
    /// `(ω_cav, E₊)`
    pub branch_upper: Vec<(f64, f64)>,
    /// `(ω_cav, E₋)`
    pub branch_lower: Vec<(f64, f64)>,
    /// smallest `E₊ − E₋` over the samples
    pub splitting_min: f64,
}

/// Both branches sampled over a grid of cavity frequencies.
pub fn avoided_crossing(cavity_grid: &[f64], omega0: f64, lambda_r: f64) -> AvoidedCrossing {
    let mut branch_upper = Vec::with_capacity(cavity_grid.len());
    let mut branch_lower = Vec::with_capacity(cavity_grid.len());
    let mut splitting_min = f64::INFINITY;
    for &w in cavity_grid {
        let (lo, hi) = tc_normal_modes(w, omega0, lambda_r);
        branch_lower.push((w, lo));
        branch_upper.push((w, hi));
        splitting_min = splitting_min.min(hi - lo);
    }
    AvoidedCrossing {
        branch_upper,
        branch_lower,
        splitting_min,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplittingFit {
    /// lower and upper fitted centers
    pub peak1: f64,
    pub peak2: f64,
    pub splitting: f64,
    /// shared half width at half maximum
    pub width: f64,
    pub amplitude1: f64,
    pub amplitude2: f64,
    /// root-mean-square residual relative to the scan maximum
    pub residual: f64,
}

/// Two Lorentzians of shared half width: `Σ A_k γ² / ((x − c_k)² + γ²)`.
/// Parameters are `[A₁, c₁, A₂, c₂, γ]`.
struct TwoLorentzians {
    x: Vec<f64>,
    y: Vec<f64>,
    p: OVector<f64, U5>,
}

impl TwoLorentzians {
    fn model(p: &OVector<f64, U5>, x: f64) -> f64 {
        let g2 = p[4] * p[4];
        p[0] * g2 / ((x - p[1]).powi(2) + g2) + p[2] * g2 / ((x - p[3]).powi(2) + g2)
    }
}

impl LeastSquaresProblem<f64, Dyn, U5> for TwoLorentzians {
    type ResidualStorage = Owned<f64, Dyn>;
    type JacobianStorage = Owned<f64, Dyn, U5>;
    type ParameterStorage = Owned<f64, U5>;

    fn set_params(&mut self, p: &OVector<f64, U5>) {
        self.p.copy_from(p);
    }

    fn params(&self) -> OVector<f64, U5> {
        self.p
    }

    fn residuals(&self) -> Option<DVector<f64>> {
        Some(DVector::from_iterator(
            self.x.len(),
            self.x.iter().zip(&self.y).map(|(&x, &y)| Self::model(&self.p, x) - y),
        ))
    }

    fn jacobian(&self) -> Option<OMatrix<f64, Dyn, U5>> {
        let p = &self.p;
        let g = p[4];
        let g2 = g * g;
        let mut jac = OMatrix::<f64, Dyn, U5>::zeros(self.x.len());
        for (row, &x) in self.x.iter().enumerate() {
            let mut dg = 0.0;
            for (ai, ci) in [(0, 1), (2, 3)] {
                let u = x - p[ci];
                let den = u * u + g2;
                let shape = g2 / den;
                jac[(row, ai)] = shape;
                jac[(row, ci)] = p[ai] * g2 * 2.0 * u / (den * den);
                dg += p[ai] * 2.0 * g * u * u / (den * den);
            }
            jac[(row, 4)] = dg;
        }
        Some(jac)
    }
}

/// Fit two shared-width Lorentzians to `(Δ_p, transmission)` samples.
///
/// The scan is sorted by detuning and scaled to unit maximum before
/// fitting, so the result does not depend on grid order or overall
/// amplitude. Seeds are the two highest local maxima and `width_seed`.
pub fn splitting_from_scan(scan: &[(f64, f64)], width_seed: f64) -> Result<SplittingFit> {
    let degenerate = |msg: String| Error::FitDegenerate(msg);
    if scan.len() < 7 {
        return Err(degenerate(format!("{} samples are too few", scan.len())));
    }
    let mut pts: Vec<(f64, f64)> = scan.to_vec();
    if pts.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(degenerate("non-finite samples".into()));
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let ymax = pts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    if !(ymax > 0.0) {
        return Err(degenerate("scan has no positive signal".into()));
    }
    let x: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let y: Vec<f64> = pts.iter().map(|p| p.1 / ymax).collect();

    let mut maxima: Vec<usize> = (1..y.len() - 1).filter(|&i| y[i] > y[i - 1] && y[i] >= y[i + 1]).collect();
    if maxima.len() < 2 {
        return Err(degenerate(format!("{} local maxima, need two", maxima.len())));
    }
    maxima.sort_by(|&a, &b| y[b].total_cmp(&y[a]));
    let (mut i1, mut i2) = (maxima[0], maxima[1]);
    if x[i1] > x[i2] {
        std::mem::swap(&mut i1, &mut i2);
    }
    if y[i2].min(y[i1]) < 0.05 {
        return Err(degenerate("second peak is below 5% of the first".into()));
    }

    let p0 = OVector::<f64, U5>::from_column_slice(&[y[i1], x[i1], y[i2], x[i2], width_seed.abs()]);
    let problem = TwoLorentzians { x, y, p: p0 };
    let (fitted, report) = LevenbergMarquardt::new().minimize(problem);
    if !report.termination.was_successful() {
        return Err(degenerate(format!("least squares did not converge: {:?}", report.termination)));
    }
    let p = fitted.p;
    let (mut c1, mut a1, mut c2, mut a2) = (p[1], p[0], p[3], p[2]);
    if c1 > c2 {
        std::mem::swap(&mut c1, &mut c2);
        std::mem::swap(&mut a1, &mut a2);
    }
    let width = p[4].abs();
    let residual = (2.0 * report.objective_function / fitted.x.len() as f64).sqrt();
    if !(c2 - c1 >= width) || !(a1 > 0.0 && a2 > 0.0) {
        return Err(degenerate(format!(
            "peaks unresolved: separation {:.4e} vs width {width:.4e}",
            c2 - c1
        )));
    }
    Ok(SplittingFit {
        peak1: c1,
        peak2: c2,
        splitting: c2 - c1,
        width,
        amplitude1: a1 * ymax,
        amplitude2: a2 * ymax,
        residual,
    })
}

/// Settings of the atom-number sweep behind the crossing map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossingSetup {
    /// configuration with `η`, `ζ` and beam settings of the sweep
    pub cfg: PhysicalConfig,
    pub calib: PowerCalibration,
    /// power in the `r` beam, mW (the `s` beam is off)
    pub power_r: f64,
    pub atoms: Vec<u64>,
    pub probe: Vec<f64>,
    pub eta_p: f64,
    pub fock: FockSpace,
    pub spin: SpinSpace,
    /// dispersive-shift bin width, rad/us
    pub bin_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossingRow {
    pub bin_center: f64,
    /// number of atom numbers averaged into this bin
    pub traces: usize,
    pub transmission: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlayPoint {
    pub omega_d: f64,
    /// bare lines and coupled branches in probe-detuning coordinates
    pub bare_cavity: f64,
    pub bare_spin: f64,
    pub lower: f64,
    pub upper: f64,
    pub lambda_r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossingMap {
    pub probe: Vec<f64>,
    pub rows: Vec<CrossingRow>,
    pub overlay: Vec<OverlayPoint>,
}

/// Transmission versus probe detuning and dispersive shift, averaged in
/// dispersive-shift bins, with the bare and coupled lines for overlay.
pub fn crossing_map(setup: &CrossingSetup) -> Result<CrossingMap> {
    if setup.atoms.is_empty() || setup.probe.is_empty() {
        return Err(Error::InvalidConfig("crossing map needs atom and probe grids".into()));
    }
    if !(setup.bin_width > 0.0) {
        return Err(Error::InvalidConfig("bin width must be positive".into()));
    }
    let base = setup.cfg.with_beam_power(&setup.calib, setup.power_r, 1.0)?;
    let traces: Vec<(f64, Vec<f64>, OverlayPoint)> = setup
        .atoms
        .par_iter()
        .map(|&n| {
            let mut cfg = base.clone();
            cfg.n_total = n;
            let eff = cfg.effective_params()?;
            let omega_d = cfg.dispersive_shift(n)?;
            let scan = transmission_scan(&eff, &setup.probe, setup.eta_p, &setup.fock, &setup.spin)?;
            let to_probe = |model: f64| model - model_frame_detuning(&eff, 0.0);
            let (lo, hi) = tc_normal_modes(eff.cavity_tc(), eff.omega0, eff.lambda_r);
            let overlay = OverlayPoint {
                omega_d,
                bare_cavity: to_probe(eff.cavity_tc()),
                bare_spin: to_probe(eff.omega0),
                lower: to_probe(lo),
                upper: to_probe(hi),
                lambda_r: eff.lambda_r.abs(),
            };
            Ok((omega_d, scan.iter().map(|p| p.normalized).collect(), overlay))
        })
        .collect::<Result<_>>()?;

    let mut rows: Vec<(i64, CrossingRow)> = Vec::new();
    for (omega_d, trace, _) in &traces {
        let key = (omega_d / setup.bin_width).round() as i64;
        match rows.iter_mut().find(|(k, _)| *k == key) {
            Some((_, row)) => {
                for (acc, v) in row.transmission.iter_mut().zip(trace) {
                    *acc += v;
                }
                row.traces += 1;
            }
            None => rows.push((
                key,
                CrossingRow {
                    bin_center: key as f64 * setup.bin_width,
                    traces: 1,
                    transmission: trace.clone(),
                },
            )),
        }
    }
    rows.sort_by_key(|(k, _)| *k);
    let rows = rows
        .into_iter()
        .map(|(_, mut row)| {
            let n = row.traces as f64;
            row.transmission.iter_mut().for_each(|v| *v /= n);
            row
        })
        .collect();
    Ok(CrossingMap {
        probe: setup.probe.clone(),
        rows,
        overlay: traces.into_iter().map(|(_, _, o)| o).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{hamiltonian_tc, CompositeSpace};

    fn lorentz(x: f64, c: f64, g: f64) -> f64 {
        g * g / ((x - c).powi(2) + g * g)
    }

    #[test]
    fn uncoupled_modes_and_sum_rule() {
        let (lo, hi) = tc_normal_modes(0.3, -0.2, 0.0);
        assert_eq!((lo, hi), (-0.2, 0.3));
        let (lo, hi) = tc_normal_modes(0.7, 0.7, 0.25);
        assert!((hi - lo - 0.5).abs() < 1e-15);
        let (lo, hi) = tc_normal_modes(1.3, -0.4, 0.6);
        assert!((lo + hi - 0.9).abs() < 1e-15);
    }

    #[test]
    fn modes_match_single_excitation_block() {
        let (wc, w0, lr) = (0.4, 0.1, 0.3);
        for n_lambda in [1, 4] {
            let f = FockSpace::new(2).unwrap();
            let s = SpinSpace::new(n_lambda).unwrap();
            let space = CompositeSpace::new(f, s);
            let h = hamiltonian_tc(wc, w0, lr, &f, &s);
            // one excitation above |0, −j⟩: |1, −j⟩ and |0, −j+1⟩
            let idx = [space.index(1, 0), space.index(0, 1)];
            let block = nalgebra::DMatrix::from_fn(2, 2, |i, j| h.matrix()[(idx[i], idx[j])]);
            let e_ground = h.matrix()[(0, 0)].re;
            let sub = crate::hilbert::Operator::new(block, crate::hilbert::Dims::Spin(2)).unwrap();
            let (vals, _) = sub.eigh();
            let (lo, hi) = tc_normal_modes(wc, w0, lr);
            assert!((vals[0] - e_ground - lo).abs() < 1e-12);
            assert!((vals[1] - e_ground - hi).abs() < 1e-12);
        }
    }

    #[test]
    fn branches_never_cross() {
        let grid: Vec<f64> = (0..201).map(|i| -2.0 + 0.02 * i as f64).collect();
        let ac = avoided_crossing(&grid, 0.3, 0.15);
        assert!(ac.splitting_min >= 0.3 - 1e-12);
        assert!((ac.splitting_min - 0.3).abs() < 1e-3);
        for (u, l) in ac.branch_upper.iter().zip(&ac.branch_lower) {
            assert!(u.1 >= l.1);
        }
    }

    #[test]
    fn recovers_synthetic_centers() {
        let g = 0.07;
        let (c1, c2) = (-0.62, -0.31);
        let scan: Vec<(f64, f64)> = (0..300)
            .map(|i| {
                let x = -1.0 + 0.8 * i as f64 / 299.0;
                (x, 0.8 * lorentz(x, c1, g) + 0.6 * lorentz(x, c2, g))
            })
            .collect();
        let fit = splitting_from_scan(&scan, 0.05).unwrap();
        assert!((fit.peak1 - c1).abs() < 1e-3 * g);
        assert!((fit.peak2 - c2).abs() < 1e-3 * g);
        assert!((fit.width - g).abs() < 1e-6);
        assert!(fit.residual < 1e-8);

        let mut reversed = scan.clone();
        reversed.reverse();
        let scaled: Vec<(f64, f64)> = scan.iter().map(|(x, y)| (*x, 37.0 * y)).collect();
        for other in [reversed, scaled] {
            let f2 = splitting_from_scan(&other, 0.05).unwrap();
            assert!((f2.peak1 - fit.peak1).abs() < 1e-9 && (f2.peak2 - fit.peak2).abs() < 1e-9);
        }
    }

    #[test]
    fn single_peak_is_degenerate() {
        let scan: Vec<(f64, f64)> = (0..200)
            .map(|i| {
                let x = -1.0 + 0.01 * i as f64;
                (x, lorentz(x, -0.5, 0.07))
            })
            .collect();
        assert!(matches!(splitting_from_scan(&scan, 0.07), Err(Error::FitDegenerate(_))));
    }
}
