//! Photon-loss master equation
//! `ρ̇ = −i[H, ρ] + κ(2aρa† − a†aρ − ρa†a)`: time evolution, stationary
//! states and weak-probe transmission.
//!
//! Density matrices are vectorized row-major, `vec(ρ)[i·d + j] = ρ_ij`.

use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{hamiltonian_tc, CompositeSpace, DensityMatrix, Dims, FockSpace, Operator, SpinSpace, C64};
use crate::ode::{integrate, Control, EvolveSpec, Observer};
use crate::params::EffectiveParams;

/// Largest population tolerated in the top retained Fock level.
pub const TRUNCATION_LIMIT: f64 = 1e-4;
/// Acceptance bound on `‖L(ρ)‖` for stationary states.
pub const STEADY_RESIDUAL_TOL: f64 = 1e-9;

const I: C64 = C64::new(0.0, 1.0);

/// Weak coherent probe `η_p(a + a†)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    /// rad/us
    pub eta_p: f64,
    /// Probe detuning from the empty-cavity resonance, `ω_p − ω_c`, rad/us.
    pub delta_p: f64,
}

impl ProbeConfig {
    pub fn new(eta_p: f64, delta_p: f64) -> Result<Self> {
        if !(eta_p >= 0.0 && eta_p.is_finite() && delta_p.is_finite()) {
            return Err(Error::InvalidConfig(format!("probe amplitude must be finite and >= 0, got {eta_p}")));
        }
        Ok(ProbeConfig { eta_p, delta_p })
    }
}

/// Probe detuning expressed in the model's rotating frame.
///
/// The model Hamiltonian rotates at the cavity frequency plus `η`, so the
/// empty cavity sits at `−η` and a probe at `Δ_p` appears at `Δ_p − η`.
/// This is the only place the mapping is defined.
pub fn model_frame_detuning(eff: &EffectiveParams, delta_p: f64) -> f64 {
    delta_p - eff.eta
}

/// Photon-loss generator for a fixed Hamiltonian, with the non-Hermitian
/// part `H_eff = H − iκ a†a` precomputed.
#[derive(Debug, Clone)]
pub struct Liouvillian {
    h_eff: DMatrix<C64>,
    h_eff_dag: DMatrix<C64>,
    kappa: f64,
    dims: Dims,
    /// index offset between `|n⟩` and `|n+1⟩`
    stride: usize,
}

impl Liouvillian {
    pub fn new(h: &Operator, kappa: f64) -> Result<Self> {
        if !(kappa >= 0.0 && kappa.is_finite()) {
            return Err(Error::InvalidConfig(format!("kappa must be finite and >= 0, got {kappa}")));
        }
        let dims = h.dims();
        let stride = match dims {
            Dims::Fock(_) => 1,
            Dims::Composite { spin, .. } => spin,
            Dims::Spin(_) => return Err(Error::dims(dims, "an operator with a cavity factor")),
        };
        let d = dims.dim();
        let mut h_eff = h.matrix().clone();
        for i in 0..d {
            h_eff[(i, i)] -= I * (kappa * (i / stride) as f64);
        }
        Ok(Liouvillian {
            h_eff_dag: h_eff.adjoint(),
            h_eff,
            kappa,
            dims,
            stride,
        })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    fn photons(&self, i: usize) -> f64 {
        (i / self.stride) as f64
    }

    /// `L(ρ)` for any square matrix of matching size.
    pub fn apply(&self, rho: &DMatrix<C64>) -> DMatrix<C64> {
        let d = self.dims.dim();
        let mut out = (&self.h_eff * rho - rho * &self.h_eff_dag) * (-I);
        if self.kappa > 0.0 {
            let s = self.stride;
            for i in 0..d.saturating_sub(s) {
                let ai = (self.photons(i) + 1.0).sqrt();
                for j in 0..d - s {
                    let aj = (self.photons(j) + 1.0).sqrt();
                    out[(i, j)] += rho[(i + s, j + s)] * (2.0 * self.kappa * ai * aj);
                }
            }
        }
        out
    }

    /// Sparse triplets of the vectorized generator, omitting row `skip_row`.
    fn triplets(&self, skip_row: Option<usize>) -> Vec<Triplet<usize, usize, C64>> {
        let d = self.dims.dim();
        let s = self.stride;
        let rows: Vec<Vec<(usize, C64)>> = (0..d)
            .map(|i| {
                (0..d)
                    .filter_map(|k| {
                        let v = self.h_eff[(i, k)];
                        (v != C64::new(0.0, 0.0)).then_some((k, v))
                    })
                    .collect()
            })
            .collect();
        let mut out = Vec::new();
        for i in 0..d {
            for j in 0..d {
                let r = i * d + j;
                if Some(r) == skip_row {
                    continue;
                }
                for &(k, v) in &rows[i] {
                    out.push(Triplet::new(r, k * d + j, -I * v));
                }
                for &(k, v) in &rows[j] {
                    out.push(Triplet::new(r, i * d + k, I * v.conj()));
                }
                if self.kappa > 0.0 && i + s < d && j + s < d {
                    let w = 2.0 * self.kappa * ((self.photons(i) + 1.0) * (self.photons(j) + 1.0)).sqrt();
                    out.push(Triplet::new(r, (i + s) * d + (j + s), C64::new(w, 0.0)));
                }
            }
        }
        out
    }
}

/// `−i[H, ρ] + κ(2aρa† − a†aρ − ρa†a)`
pub fn liouvillian_apply(h: &Operator, kappa: f64, rho: &DensityMatrix) -> Result<DMatrix<C64>> {
    if h.dims() != rho.dims() {
        return Err(Error::dims(h.dims(), rho.dims()));
    }
    Ok(Liouvillian::new(h, kappa)?.apply(rho.matrix()))
}

fn symmetrize(m: &mut DMatrix<C64>) {
    let d = m.nrows();
    for i in 0..d {
        m[(i, i)].im = 0.0;
        for j in i + 1..d {
            let v = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
            m[(i, j)] = v;
            m[(j, i)] = v.conj();
        }
    }
}

fn top_population(m: &DMatrix<C64>, stride: usize) -> f64 {
    let d = m.nrows();
    (d - stride..d).map(|i| m[(i, i)].re).sum()
}

struct MasterObserver<F> {
    stride: usize,
    on_sample: F,
    fault: Option<Error>,
}

impl<F: FnMut(f64, &DMatrix<C64>)> Observer<DMatrix<C64>> for MasterObserver<F> {
    fn sample(&mut self, t: f64, y: &DMatrix<C64>) {
        (self.on_sample)(t, y);
    }

    fn step(&mut self, _t: f64, y: &mut DMatrix<C64>) -> Control {
        symmetrize(y);
        let population = top_population(y, self.stride);
        if population > TRUNCATION_LIMIT {
            self.fault = Some(Error::Truncation {
                population,
                limit: TRUNCATION_LIMIT,
            });
            return Control::Stop;
        }
        Control::Continue
    }

    fn modifies_state(&self) -> bool {
        true
    }
}

fn run_master<F: FnMut(f64, &DMatrix<C64>)>(
    rho0: &DensityMatrix,
    h: &Operator,
    kappa: f64,
    spec: &EvolveSpec,
    on_sample: F,
) -> Result<DMatrix<C64>> {
    if h.dims() != rho0.dims() {
        return Err(Error::dims(h.dims(), rho0.dims()));
    }
    let gen = Liouvillian::new(h, kappa)?;
    let mut obs = MasterObserver {
        stride: gen.stride,
        on_sample,
        fault: None,
    };
    let (rho, _) = integrate(|_, r| gen.apply(r), rho0.matrix().clone(), spec, &mut obs)?;
    match obs.fault {
        Some(err) => Err(err),
        None => Ok(rho),
    }
}

/// Integrate the master equation, returning the state at every sample time.
///
/// `ρ ← (ρ + ρ†)/2` after each accepted step. Fails with
/// [`Error::Truncation`] once the top Fock level holds more than
/// [`TRUNCATION_LIMIT`].
pub fn evolve(rho0: &DensityMatrix, h: &Operator, kappa: f64, spec: &EvolveSpec) -> Result<Vec<(f64, DensityMatrix)>> {
    let dims = rho0.dims();
    let mut out = Vec::with_capacity(spec.samples);
    run_master(rho0, h, kappa, spec, |t, m| {
        let rho = DensityMatrix::from_matrix_unchecked(m.clone(), dims).expect("dims fixed by the generator");
        out.push((t, rho));
    })?;
    Ok(out)
}

/// Like [`evolve`] but records only `tr(ρ O)` for each requested operator.
pub fn evolve_expectations(
    rho0: &DensityMatrix,
    h: &Operator,
    kappa: f64,
    spec: &EvolveSpec,
    ops: &[Operator],
) -> Result<Vec<(f64, Vec<C64>)>> {
    for op in ops {
        if op.dims() != rho0.dims() {
            return Err(Error::dims(op.dims(), rho0.dims()));
        }
    }
    let mut out = Vec::with_capacity(spec.samples);
    run_master(rho0, h, kappa, spec, |t, m| {
        let values = ops
            .iter()
            .map(|op| m.iter().zip(op.matrix().transpose().iter()).map(|(r, o)| r * o).sum())
            .collect();
        out.push((t, values));
    })?;
    Ok(out)
}

/// Stationary state of the master equation.
///
/// Solves the vectorized `L(ρ) = 0` by sparse LU with the first row
/// replaced by `tr ρ = 1`, followed by one step of iterative refinement.
/// A degenerate stationary manifold shows up as a failed factorization or
/// a residual above [`STEADY_RESIDUAL_TOL`] and is reported as
/// [`Error::SingularLiouvillian`].
pub fn steady_state(h_total: &Operator, kappa: f64) -> Result<DensityMatrix> {
    let gen = Liouvillian::new(h_total, kappa)?;
    let d = gen.dims.dim();
    let n = d * d;
    let mut trips = gen.triplets(Some(0));
    for k in 0..d {
        trips.push(Triplet::new(0, k * d + k, C64::new(1.0, 0.0)));
    }
    let singular = |what: String| Error::SingularLiouvillian(what);
    let a = SparseColMat::<usize, C64>::try_new_from_triplets(n, n, &trips)
        .map_err(|e| singular(format!("assembly failed: {e:?}")))?;
    let lu = a.sp_lu().map_err(|e| singular(format!("factorization failed: {e:?}")))?;

    let mut b = Mat::<C64>::zeros(n, 1);
    b[(0, 0)] = C64::new(1.0, 0.0);
    let mut x = lu.solve(&b);

    // one refinement step: x += A⁻¹(b − A x)
    let mut r = b.clone();
    for t in &trips {
        r[(t.row, 0)] -= t.val * x[(t.col, 0)];
    }
    let dx = lu.solve(&r);
    for i in 0..n {
        x[(i, 0)] += dx[(i, 0)];
    }

    let mut rho = DMatrix::from_fn(d, d, |i, j| x[(i * d + j, 0)]);
    if rho.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(singular("non-finite solution".into()));
    }
    symmetrize(&mut rho);
    let residual = gen.apply(&rho).norm();
    if residual > STEADY_RESIDUAL_TOL {
        return Err(singular(format!("residual {residual:.3e} exceeds {STEADY_RESIDUAL_TOL:.0e}")));
    }
    let population = top_population(&rho, gen.stride);
    if population > TRUNCATION_LIMIT {
        return Err(Error::Truncation {
            population,
            limit: TRUNCATION_LIMIT,
        });
    }
    DensityMatrix::new(rho, gen.dims)
}

/// `H_TC` in the frame rotating at the probe frequency, plus the drive
/// `ε a† + ε* a`. `detuning` is the model-frame probe detuning.
fn probe_hamiltonian(
    omega_cav: f64,
    omega0: f64,
    lambda_r: f64,
    detuning: f64,
    drive: C64,
    fock: &FockSpace,
    spin: &SpinSpace,
) -> Operator {
    let h = hamiltonian_tc(omega_cav - detuning, omega0 - detuning, lambda_r, fock, spin);
    let space = CompositeSpace::new(*fock, *spin);
    let a = space.a.matrix();
    let mut m = h.into_matrix();
    m += a.adjoint() * drive + a * drive.conj();
    Operator::new(m, space.dims()).expect("composite dims")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransmissionPoint {
    /// rad/us, relative to the empty cavity
    pub delta_p: f64,
    /// stationary intracavity photon number
    pub photons: f64,
    /// `photons` divided by the empty-cavity peak `η_p²/κ²`
    pub normalized: f64,
}

/// Stationary transmission of a weak probe swept across the coupled system.
///
/// Uses the excitation-conserving Hamiltonian with cavity frequency
/// `ω − δ/2` and coupling `λ_r`. The spin is simulated with
/// `spin.n_lambda()` atoms carrying the same collective coupling as `eff`,
/// which is exact in the single-excitation (weak-probe) limit.
pub fn transmission_scan(
    eff: &EffectiveParams,
    grid: &[f64],
    eta_p: f64,
    fock: &FockSpace,
    spin: &SpinSpace,
) -> Result<Vec<TransmissionPoint>> {
    ProbeConfig::new(eta_p, 0.0)?;
    if !(eff.kappa > 0.0) {
        return Err(Error::OutsideValidity("transmission needs kappa > 0".into()));
    }
    let n_empty = (eta_p / eff.kappa).powi(2);
    let limit = 0.1 * fock.n_max() as f64;
    if n_empty >= limit {
        return Err(Error::OutsideValidity(format!(
            "probe too strong: empty-cavity photon number {n_empty:.3e} >= 0.1·n_max = {limit}"
        )));
    }
    let eff = eff.truncated(spin.n_lambda());
    let omega_cav = eff.cavity_tc();
    let space = CompositeSpace::new(*fock, *spin);
    grid.par_iter()
        .map(|&delta_p| {
            let h = probe_hamiltonian(
                omega_cav,
                eff.omega0,
                eff.lambda_r,
                model_frame_detuning(&eff, delta_p),
                C64::new(eta_p, 0.0),
                fock,
                spin,
            );
            let rho = steady_state(&h, eff.kappa)?;
            let photons = rho.expect(&space.n)?.re;
            Ok(TransmissionPoint {
                delta_p,
                photons,
                normalized: photons / n_empty,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{annihilation, hamiltonian_dicke};

    fn fock_h(diag: impl Fn(usize) -> f64, drive: f64, n_max: usize) -> Operator {
        let f = FockSpace::new(n_max).unwrap();
        let a = annihilation(&f);
        let mut m = (a.matrix() + a.matrix().adjoint()) * C64::new(drive, 0.0);
        for i in 0..f.dim() {
            m[(i, i)] += C64::new(diag(i), 0.0);
        }
        Operator::new(m, Dims::Fock(f.dim())).unwrap()
    }

    #[test]
    fn zero_generator_on_mixed_state() {
        let dims = Dims::Fock(5);
        let rho = DensityMatrix::maximally_mixed(dims);
        let l = liouvillian_apply(&Operator::zeros(dims), 0.0, &rho).unwrap();
        assert!(l.norm() < 1e-15);
    }

    #[test]
    fn generator_is_traceless() {
        let h = fock_h(|n| 0.3 * n as f64, 0.7, 6);
        let psi = nalgebra::DVector::from_fn(7, |i, _| C64::new(1.0 / (1.0 + i as f64), 0.1 * i as f64));
        let rho = DensityMatrix::from_ket(&psi, Dims::Fock(7)).unwrap();
        let l = liouvillian_apply(&h, 0.4, &rho).unwrap();
        assert!(l.trace().norm() < 1e-12);
        assert!((&l - l.adjoint()).norm() < 1e-12);
    }

    #[test]
    fn one_photon_decay_rate() {
        let dims = Dims::Fock(4);
        let mut psi = nalgebra::DVector::zeros(4);
        psi[1] = C64::new(1.0, 0.0);
        let rho = DensityMatrix::from_ket(&psi, dims).unwrap();
        let kappa = 0.3;
        let l = liouvillian_apply(&Operator::zeros(dims), kappa, &rho).unwrap();
        // d⟨n⟩/dt = −2κ⟨n⟩ with ⟨n⟩ = 1
        let dn: f64 = (0..4).map(|i| i as f64 * l[(i, i)].re).sum();
        assert!((dn + 2.0 * kappa).abs() < 1e-14);
    }

    #[test]
    fn rejects_mismatched_dims() {
        let rho = DensityMatrix::maximally_mixed(Dims::Fock(3));
        let h = Operator::zeros(Dims::Fock(4));
        assert!(matches!(liouvillian_apply(&h, 0.1, &rho), Err(Error::DimensionMismatch { .. })));
        let spin_only = Operator::zeros(Dims::Spin(3));
        assert!(Liouvillian::new(&spin_only, 0.1).is_err());
    }

    #[test]
    fn sparse_matches_dense_generator() {
        let f = FockSpace::new(3).unwrap();
        let s = SpinSpace::new(2).unwrap();
        let h = hamiltonian_tc(0.4, -0.2, 0.3, &f, &s);
        let gen = Liouvillian::new(&h, 0.25).unwrap();
        let d = h.dim();
        let rho = DMatrix::from_fn(d, d, |i, j| C64::new((i + 2 * j) as f64 * 0.01, (i as f64 - j as f64) * 0.02));
        let dense = gen.apply(&rho);
        let mut sparse = vec![C64::new(0.0, 0.0); d * d];
        for t in gen.triplets(None) {
            sparse[t.row] += t.val * rho[(t.col / d, t.col % d)];
        }
        for i in 0..d {
            for j in 0..d {
                assert!((sparse[i * d + j] - dense[(i, j)]).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn driven_cavity_closed_form() {
        let (kappa, eta) = (0.5, 0.2);
        for delta in [-1.0, -0.3, 0.0, 0.45, 2.0] {
            let h = fock_h(|n| -delta * n as f64, eta, 12);
            let rho = steady_state(&h, kappa).unwrap();
            let n: f64 = (0..13).map(|i| i as f64 * rho.matrix()[(i, i)].re).sum();
            let exact = eta * eta / (kappa * kappa + delta * delta);
            assert!((n - exact).abs() < 1e-9, "delta {delta}: {n} vs {exact}");
        }
    }

    #[test]
    fn undriven_tc_relaxes_to_ground_state() {
        let f = FockSpace::new(4).unwrap();
        let s = SpinSpace::new(3).unwrap();
        let h = hamiltonian_tc(1.0, 0.8, 0.3, &f, &s);
        let rho = steady_state(&h, 0.2).unwrap();
        let space = CompositeSpace::new(f, s);
        let ground = DensityMatrix::ground(&space);
        assert!((rho.matrix() - ground.matrix()).norm() < 1e-9);
        let residual = liouvillian_apply(&h, 0.2, &ground).unwrap().norm();
        assert!(residual < 1e-12);
    }

    #[test]
    fn degenerate_manifold_is_reported() {
        // without coupling every spin state is stationary
        let f = FockSpace::new(2).unwrap();
        let s = SpinSpace::new(2).unwrap();
        let h = hamiltonian_tc(1.0, 0.8, 0.0, &f, &s);
        assert!(matches!(steady_state(&h, 0.2), Err(Error::SingularLiouvillian(_))));
    }

    #[test]
    fn coherent_amplitude_damps() {
        let f = FockSpace::new(14).unwrap();
        let s = SpinSpace::new(1).unwrap();
        let space = CompositeSpace::new(f, s);
        let alpha = C64::new(0.8, -0.5);
        let rho0 = DensityMatrix::coherent(&space, alpha, 0).unwrap();
        let kappa = 0.4;
        let spec = EvolveSpec::adaptive(3.0, 1e-10, 1e-12).with_samples(4);
        let series = evolve_expectations(&rho0, &Operator::zeros(space.dims()), kappa, &spec, &[space.a.clone()]).unwrap();
        let a0 = series[0].1[0];
        for (t, v) in &series {
            let exact = a0 * (-kappa * t).exp();
            assert!((v[0] - exact).norm() < 1e-8, "t = {t}");
        }
    }

    #[test]
    fn steady_state_matches_long_evolution() {
        let f = FockSpace::new(8).unwrap();
        let s = SpinSpace::new(2).unwrap();
        let space = CompositeSpace::new(f, s);
        let kappa = 0.5;
        let h = probe_hamiltonian(0.3, 0.1, 0.4, 0.05, C64::new(0.3, 0.0), &f, &s);
        let ss = steady_state(&h, kappa).unwrap();
        let spec = EvolveSpec::adaptive(80.0 / kappa, 1e-10, 1e-13);
        let series = evolve(&DensityMatrix::ground(&space), &h, kappa, &spec).unwrap();
        let late = &series.last().unwrap().1;
        for op in [&space.n, &space.j_z, &space.a] {
            let diff = (ss.expect(op).unwrap() - late.expect(op).unwrap()).norm();
            assert!(diff < 1e-6, "{diff}");
        }
    }

    #[test]
    fn truncation_is_detected() {
        let f = FockSpace::new(3).unwrap();
        let s = SpinSpace::new(1).unwrap();
        let space = CompositeSpace::new(f, s);
        let h = probe_hamiltonian(0.0, 1.0, 0.0, 0.0, C64::new(2.0, 0.0), &f, &s);
        let spec = EvolveSpec::adaptive(5.0, 1e-8, 1e-10);
        let r = evolve(&DensityMatrix::ground(&space), &h, 0.1, &spec);
        assert!(matches!(r, Err(Error::Truncation { .. })));
    }

    #[test]
    fn drive_phase_is_unobservable() {
        let f = FockSpace::new(6).unwrap();
        let s = SpinSpace::new(2).unwrap();
        let space = CompositeSpace::new(f, s);
        let n_of = |phase: f64| {
            let drive = C64::from_polar(0.03, phase);
            let h = probe_hamiltonian(-0.2, -0.1, 0.15, -0.12, drive, &f, &s);
            let rho = steady_state(&h, 0.1).unwrap();
            (rho.expect(&space.n).unwrap().re, rho.expect(&space.a).unwrap().norm())
        };
        let (n0, a0) = n_of(0.0);
        for phase in [0.7, 2.0, -1.3] {
            let (n, a) = n_of(phase);
            assert!((n - n0).abs() < 1e-10 && (a - a0).abs() < 1e-10);
        }
    }

    #[test]
    fn small_dicke_precursor() {
        let f = FockSpace::new(10).unwrap();
        let s = SpinSpace::new(2).unwrap();
        let space = CompositeSpace::new(f, s);
        let base = EffectiveParams {
            omega: 1.0,
            omega0: 1.0,
            delta: 0.0,
            lambda_r: 0.0,
            lambda_s: 0.0,
            omega_ds: 0.0,
            delta_r: -1.0,
            delta_s: -1.0,
            n_lambda: 2,
            kappa: 0.5,
            eta: 0.0,
        };
        let lc = base.critical_coupling().unwrap();
        let photons = |lambda: f64| {
            let h = hamiltonian_dicke(&base.with_dicke_coupling(lambda), &f, &s).unwrap();
            steady_state(&h, base.kappa).unwrap().expect(&space.n).unwrap().re
        };
        assert!(photons(0.2 * lc) < 0.05);
        assert!(photons(2.0 * lc) > 0.2);
    }
}
