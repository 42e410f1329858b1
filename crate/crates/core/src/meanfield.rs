//! Semiclassical (large-N) dynamics of the open Dicke model.
//!
//! With `α = ⟨a⟩/√N_λ`, `s = ⟨J₋⟩/N_λ` and `s_z = ⟨J_z⟩/N_λ`, the Heisenberg
//! equations of the five-term Hamiltonian with photon loss factorize to
//!
//! ```text
//! α̇   = −(κ + iω + iδ s_z) α − iλ_r s − iλ_s s*
//! ṡ   = −i(ω₀ + δ|α|²) s + 2i(λ_r α + λ_s α*) s_z
//! ṡ_z = −2λ_r Im(α* s) − 2λ_s Im(α s)
//! ```
//!
//! which conserve `|s|² + s_z²`. Linearized about `α = s = 0, s_z = −1/2`
//! the cavity sees `ω − δ/2`, the frequency entering the phase boundary.

use nalgebra::Matrix4;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::C64;
use crate::ode::{integrate, Control, EvolveSpec, Observer, Recorder};
use crate::params::{critical_coupling, EffectiveParams, PhysicalConfig, PowerCalibration};

pub const DEFAULT_SEED: f64 = 1e-4;
pub const DEFAULT_FLOOR: f64 = 1e-6;
pub const DEFAULT_BISECTION_WIDTH: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldState {
    pub a_c: C64,
    pub s_minus: C64,
    pub s_z: f64,
}

impl MeanFieldState {
    /// `a_c = 0, s_− = 0, s_z = −1/2`
    pub fn normal() -> Self {
        MeanFieldState {
            a_c: C64::new(0.0, 0.0),
            s_minus: C64::new(0.0, 0.0),
            s_z: -0.5,
        }
    }

    /// Normal state tilted by a real spin coherence `seed`, on the spin sphere.
    pub fn seeded(seed: f64) -> Result<Self> {
        if !(seed.abs() < 0.5) {
            return Err(Error::InvalidConfig(format!("seed {seed} exceeds the spin length")));
        }
        Ok(MeanFieldState {
            a_c: C64::new(0.0, 0.0),
            s_minus: C64::new(seed, 0.0),
            s_z: -(0.25 - seed * seed).sqrt(),
        })
    }

    /// `|s_−|² + s_z²`, equal to 1/4 on the maximal-spin sphere.
    pub fn spin_length(&self) -> f64 {
        self.s_minus.norm_sqr() + self.s_z * self.s_z
    }

    pub fn photons(&self, n_lambda: u64) -> f64 {
        n_lambda as f64 * self.a_c.norm_sqr()
    }

    pub fn to_array(&self) -> [f64; 5] {
        [self.a_c.re, self.a_c.im, self.s_minus.re, self.s_minus.im, self.s_z]
    }

    pub fn from_array(y: &[f64; 5]) -> Self {
        MeanFieldState {
            a_c: C64::new(y[0], y[1]),
            s_minus: C64::new(y[2], y[3]),
            s_z: y[4],
        }
    }

    fn validate(&self) -> Result<()> {
        let finite = self.to_array().iter().all(|v| v.is_finite());
        if !finite || self.spin_length() > 0.25 + 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "mean-field state off the spin sphere (length {})",
                self.spin_length()
            )));
        }
        Ok(())
    }
}

fn rhs_array(y: &[f64; 5], eff: &EffectiveParams) -> [f64; 5] {
    let a = C64::new(y[0], y[1]);
    let s = C64::new(y[2], y[3]);
    let sz = y[4];
    let i = C64::new(0.0, 1.0);
    let (lr, ls) = (eff.lambda_r, eff.lambda_s);
    let da = -(eff.kappa + i * (eff.omega + eff.delta * sz)) * a - i * (lr * s + ls * s.conj());
    let ds = -i * (eff.omega0 + eff.delta * a.norm_sqr()) * s + 2.0 * i * (lr * a + ls * a.conj()) * sz;
    let dsz = -2.0 * lr * (a.conj() * s).im - 2.0 * ls * (a * s).im;
    [da.re, da.im, ds.re, ds.im, dsz]
}

/// Time derivative of the factorized moments.
pub fn mean_field_rhs(state: &MeanFieldState, eff: &EffectiveParams) -> MeanFieldState {
    MeanFieldState::from_array(&rhs_array(&state.to_array(), eff))
}

/// Jacobian of the flow at the normal state in the coordinates
/// `(Re α, Im α, Re s, Im s)`; `s_z` decouples at linear order.
pub fn normal_state_jacobian(eff: &EffectiveParams) -> Matrix4<f64> {
    let w = eff.cavity_tc();
    let k = eff.kappa;
    let (lr, ls, w0) = (eff.lambda_r, eff.lambda_s, eff.omega0);
    Matrix4::new(
        -k, w, 0.0, lr - ls,
        -w, -k, -(lr + ls), 0.0,
        0.0, lr - ls, 0.0, w0,
        -(lr + ls), 0.0, -w0, 0.0,
    )
}

/// Largest real part among the normal-state Jacobian eigenvalues; positive
/// means the normal phase is unstable.
pub fn normal_state_growth_rate(eff: &EffectiveParams) -> f64 {
    normal_state_jacobian(eff)
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Dicke coupling at which the normal state loses stability, located by
/// bisection of the Jacobian growth rate between `lo` and `hi`.
pub fn jacobian_threshold(eff: &EffectiveParams, lo: f64, hi: f64, rel_width: f64) -> Result<f64> {
    // a tiny margin keeps the marginal κ = 0 case (purely imaginary spectrum) stable
    let unstable = |l: f64| normal_state_growth_rate(&eff.with_dicke_coupling(l)) > 1e-12 * (1.0 + l.abs());
    let (mut lo, mut hi) = (lo, hi);
    if unstable(lo) || !unstable(hi) {
        return Err(Error::OutsideValidity(format!("[{lo:.4e}, {hi:.4e}] does not bracket the instability")));
    }
    while (hi - lo) > rel_width * hi.abs() {
        let mid = 0.5 * (lo + hi);
        if unstable(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Integrate the mean-field equations. With `drive`, the Dicke coupling
/// `λ_r = λ_s = drive(t)` replaces the couplings of `eff`.
pub fn integrate_mean_field(
    state0: &MeanFieldState,
    eff: &EffectiveParams,
    spec: &EvolveSpec,
    drive: Option<&(dyn Fn(f64) -> f64 + Sync)>,
) -> Result<Vec<(f64, MeanFieldState)>> {
    state0.validate()?;
    let rhs = |t: f64, y: &[f64; 5]| match drive {
        Some(lambda) => rhs_array(y, &eff.with_dicke_coupling(lambda(t))),
        None => rhs_array(y, eff),
    };
    let mut rec = Recorder::default();
    integrate(rhs, state0.to_array(), spec, &mut rec)?;
    Ok(rec.samples.iter().map(|(t, y)| (*t, MeanFieldState::from_array(y))).collect())
}

/// Integration settings shared by the bifurcation tools.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanOptions {
    /// `|a_c|²` above which a point counts as superradiant
    pub floor: f64,
    /// relative bracket width at which bisection stops
    pub bisection_width: f64,
    pub seed: f64,
    /// chunk length and horizon in units of `1/min(κ, |ω₀|, |ω − δ/2|)`
    pub chunk: f64,
    pub horizon: f64,
    /// relative change between chunks accepted as stationary
    pub stationary_tol: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
}

impl Default for ScanOptions {
    fn default() -> Self {
        ScanOptions {
            floor: DEFAULT_FLOOR,
            bisection_width: DEFAULT_BISECTION_WIDTH,
            seed: DEFAULT_SEED,
            chunk: 50.0,
            horizon: 3000.0,
            stationary_tol: 1e-8,
            rel_tol: 1e-9,
            abs_tol: 1e-14,
        }
    }
}

fn time_unit(eff: &EffectiveParams) -> f64 {
    let rate = [eff.kappa, eff.omega0.abs(), eff.cavity_tc().abs()]
        .into_iter()
        .filter(|r| *r > 0.0)
        .fold(f64::INFINITY, f64::min);
    if rate.is_finite() {
        1.0 / rate
    } else {
        1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Verdict {
    /// crossed the floor
    Superradiant,
    /// deviation from the normal state shrinking (or never grew)
    Normal,
}

struct FloorWatch {
    floor: f64,
    crossed: bool,
}

impl Observer<[f64; 5]> for FloorWatch {
    fn step(&mut self, _t: f64, y: &mut [f64; 5]) -> Control {
        if y[0] * y[0] + y[1] * y[1] > self.floor {
            self.crossed = true;
            return Control::Stop;
        }
        Control::Continue
    }
}

fn deviation(y: &[f64; 5]) -> f64 {
    y[0] * y[0] + y[1] * y[1] + y[2] * y[2] + y[3] * y[3]
}

/// Factor by which the deviation must decay before the state counts as
/// normal. A single shrinking chunk is not enough: a weakly damped
/// spin-like mode can mask a slowly growing one for many chunks.
const COLLAPSE_FACTOR: f64 = 1e-6;

/// Decide from the dynamics whether the seeded normal state is unstable:
/// superradiant once `|a_c|²` crosses the floor, normal once the deviation
/// from the normal state has collapsed by [`COLLAPSE_FACTOR`] or the
/// horizon is reached without crossing.
fn classify(eff: &EffectiveParams, opts: &ScanOptions) -> Result<Verdict> {
    let tau = time_unit(eff);
    let spec = EvolveSpec::adaptive(opts.chunk * tau, opts.rel_tol, opts.abs_tol);
    let mut y = MeanFieldState::seeded(opts.seed)?.to_array();
    let d0 = deviation(&y);
    let chunks = (opts.horizon / opts.chunk).ceil() as usize;
    for _ in 0..chunks {
        let mut watch = FloorWatch {
            floor: opts.floor,
            crossed: false,
        };
        y = integrate(|_, v| rhs_array(v, eff), y, &spec, &mut watch)?.0;
        if watch.crossed {
            return Ok(Verdict::Superradiant);
        }
        if deviation(&y) < COLLAPSE_FACTOR * d0 {
            return Ok(Verdict::Normal);
        }
    }
    Ok(Verdict::Normal)
}

/// Long-time state from the seeded normal state, integrated chunk by chunk
/// until two successive chunk ends agree to `stationary_tol`.
fn settle(eff: &EffectiveParams, opts: &ScanOptions) -> Result<MeanFieldState> {
    let tau = time_unit(eff);
    let spec = EvolveSpec::adaptive(opts.chunk * tau, opts.rel_tol, opts.abs_tol);
    let mut y = MeanFieldState::seeded(opts.seed)?.to_array();
    let chunks = (opts.horizon / opts.chunk).ceil() as usize;
    let mut change = f64::INFINITY;
    let mut previous_d = f64::NAN;
    for k in 0..chunks {
        let y_new = integrate(|_, v| rhs_array(v, eff), y, &spec, &mut ())?.0;
        let a2 = y_new[0] * y_new[0] + y_new[1] * y_new[1];
        let a2_old = y[0] * y[0] + y[1] * y[1];
        let d = deviation(&y_new);
        let dsz = (y_new[4] - y[4]).abs();
        y = y_new;
        if a2 > opts.floor {
            change = ((a2 - a2_old).abs() / a2).max(dsz / 0.5);
            if change < opts.stationary_tol {
                return Ok(MeanFieldState::from_array(&y));
            }
        } else if eff.kappa > 0.0 && k >= 1 && d < previous_d && d < opts.floor {
            // decaying towards the normal state
            return Ok(MeanFieldState::from_array(&y));
        } else {
            change = (d - previous_d).abs() / d.max(f64::MIN_POSITIVE);
        }
        previous_d = d;
    }
    Err(Error::NonStationary {
        lambda: eff.dicke_coupling(),
        change,
    })
}

impl Observer<[f64; 5]> for () {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub lambda: f64,
    pub abs_a2: f64,
    pub s_z: f64,
    /// `None` when stationary, otherwise the reason it is not
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BifurcationScan {
    pub points: Vec<ScanPoint>,
    /// bisection-refined threshold, when the grid brackets one
    pub threshold: Option<f64>,
}

/// Steady order parameter across an ascending grid of Dicke couplings and
/// the refined threshold between the last normal and first superradiant
/// grid points.
pub fn bifurcation_scan(eff_base: &EffectiveParams, grid: &[f64], opts: &ScanOptions) -> Result<BifurcationScan> {
    if grid.is_empty() || grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidConfig("coupling grid must be non-empty and strictly ascending".into()));
    }
    let points: Vec<ScanPoint> = grid
        .par_iter()
        .map(|&lambda| match settle(&eff_base.with_dicke_coupling(lambda), opts) {
            Ok(st) => ScanPoint {
                lambda,
                abs_a2: st.a_c.norm_sqr(),
                s_z: st.s_z,
                error: None,
            },
            Err(e) => ScanPoint {
                lambda,
                abs_a2: f64::NAN,
                s_z: f64::NAN,
                error: Some(e.to_string()),
            },
        })
        .collect();

    let verdicts: Vec<Verdict> = grid
        .par_iter()
        .map(|&l| classify(&eff_base.with_dicke_coupling(l), opts))
        .collect::<Result<_>>()?;
    let threshold = match verdicts.iter().position(|v| *v == Verdict::Superradiant) {
        Some(first) if first > 0 => Some(refine_threshold(eff_base, grid[first - 1], grid[first], opts)?),
        _ => None,
    };
    Ok(BifurcationScan { points, threshold })
}

/// Bisection of the dynamic verdict between a normal `lo` and a
/// superradiant `hi` coupling.
pub fn refine_threshold(eff_base: &EffectiveParams, lo: f64, hi: f64, opts: &ScanOptions) -> Result<f64> {
    let (mut lo, mut hi) = (lo, hi);
    while hi - lo > opts.bisection_width * hi.abs() {
        let mid = 0.5 * (lo + hi);
        match classify(&eff_base.with_dicke_coupling(mid), opts)? {
            Verdict::Superradiant => hi = mid,
            Verdict::Normal => lo = mid,
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Steady state at one coupling, for cross-validation.
pub fn steady_mean_field(eff: &EffectiveParams, opts: &ScanOptions) -> Result<MeanFieldState> {
    settle(eff, opts)
}

/// How the differential light shift follows the beam power.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StarkModel {
    /// from the beam Rabi frequencies and detunings
    Computed,
    /// `ω_dS(P) = shift_ref · P / power_ref`
    Anchored { shift_ref: f64, power_ref: f64 },
    /// no light shift
    Disabled,
}

/// Effective parameters as a function of total beam power.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerModel {
    pub cfg: PhysicalConfig,
    pub calib: PowerCalibration,
    /// fraction of the total power in the `r` beam
    pub split: f64,
    pub stark: StarkModel,
    /// multiplier on both couplings (calibration band)
    pub coupling_scale: f64,
}

impl PowerModel {
    pub fn new(cfg: PhysicalConfig, calib: PowerCalibration, split: f64, stark: StarkModel) -> Result<Self> {
        if !(0.0..=1.0).contains(&split) {
            return Err(Error::InvalidConfig(format!("beam split must lie in [0, 1], got {split}")));
        }
        if let StarkModel::Anchored { power_ref, shift_ref } = stark {
            if !(power_ref > 0.0 && shift_ref.is_finite()) {
                return Err(Error::InvalidConfig("Stark anchor needs a positive reference power".into()));
            }
        }
        cfg.validate()?;
        Ok(PowerModel {
            cfg,
            calib,
            split,
            stark,
            coupling_scale: 1.0,
        })
    }

    pub fn with_coupling_scale(&self, scale: f64) -> Self {
        PowerModel {
            coupling_scale: scale,
            ..self.clone()
        }
    }

    pub fn with_stark(&self, stark: StarkModel) -> Self {
        PowerModel { stark, ..self.clone() }
    }

    pub fn with_atoms(&self, n_total: u64) -> Result<Self> {
        let mut m = self.clone();
        m.cfg.n_total = n_total;
        m.cfg.validate()?;
        Ok(m)
    }

    /// Effective parameters at total power `p` (mW).
    pub fn effective_at(&self, p: f64) -> Result<EffectiveParams> {
        let cfg = self.cfg.with_beam_power(&self.calib, p, self.split)?;
        let mut eff = cfg.effective_params()?;
        let shift = match self.stark {
            StarkModel::Computed => eff.omega_ds,
            StarkModel::Anchored { shift_ref, power_ref } => shift_ref * p / power_ref,
            StarkModel::Disabled => 0.0,
        };
        eff.omega0 += shift - eff.omega_ds;
        eff.omega_ds = shift;
        eff.lambda_r *= self.coupling_scale;
        eff.lambda_s *= self.coupling_scale;
        Ok(eff)
    }

    /// `|λ(P)|` of the symmetric reduction.
    pub fn dicke_coupling_at(&self, p: f64) -> Result<f64> {
        Ok(self.effective_at(p)?.dicke_coupling().abs())
    }

    /// Power at which `|λ(P)| = λ_c(P)`, searched on `[p_lo, p_hi]`.
    pub fn static_threshold(&self, p_lo: f64, p_hi: f64) -> Result<Option<f64>> {
        let gap = |p: f64| -> Option<f64> {
            let eff = self.effective_at(p).ok()?;
            let lc = eff.critical_coupling().ok()?;
            Some(eff.dicke_coupling().abs() - lc)
        };
        let n = 400;
        let mut prev: Option<(f64, f64)> = None;
        for k in 0..=n {
            let p = p_lo + (p_hi - p_lo) * k as f64 / n as f64;
            let g = gap(p);
            if let (Some((p0, g0)), Some(g1)) = (prev, g) {
                if g0 < 0.0 && g1 >= 0.0 {
                    let (mut a, mut b) = (p0, p);
                    for _ in 0..100 {
                        let m = 0.5 * (a + b);
                        match gap(m) {
                            Some(gm) if gm >= 0.0 => b = m,
                            _ => a = m,
                        }
                    }
                    return Ok(Some(0.5 * (a + b)));
                }
            }
            prev = g.map(|g| (p, g));
        }
        Ok(None)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RampProtocol {
    /// mW
    pub p_start: f64,
    /// mW
    pub p_end: f64,
    /// us
    pub duration: f64,
}

impl RampProtocol {
    pub fn new(p_start: f64, p_end: f64, duration: f64) -> Result<Self> {
        if !(p_start >= 0.0 && p_end > p_start && duration > 0.0 && duration.is_finite() && p_end.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "ramp needs 0 <= P_start < P_end and duration > 0 (got {p_start}, {p_end}, {duration})"
            )));
        }
        Ok(RampProtocol {
            p_start,
            p_end,
            duration,
        })
    }

    pub fn power_at(&self, t: f64) -> f64 {
        self.p_start + (self.p_end - self.p_start) * (t / self.duration).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionCriterion {
    /// intracavity photon number that counts as detection
    pub photons: f64,
    /// overall detection efficiency used for simulated counts
    pub efficiency: f64,
    /// counting bin, us
    pub bin: f64,
}

impl Default for DetectionCriterion {
    fn default() -> Self {
        DetectionCriterion {
            photons: 10.0,
            efficiency: 0.18,
            bin: 5.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RampOptions {
    pub seed: f64,
    /// Keep the deviation from the normal state at least `seed`, standing in
    /// for the fluctuations that keep re-seeding the instability.
    pub fluctuation_floor: bool,
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// output samples over the ramp
    pub samples: usize,
}

impl Default for RampOptions {
    fn default() -> Self {
        RampOptions {
            seed: DEFAULT_SEED,
            fluctuation_floor: true,
            rel_tol: 1e-8,
            abs_tol: 1e-12,
            samples: 1001,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdResult {
    /// mW
    pub p_threshold: f64,
    /// rad/us
    pub lambda_at_threshold: f64,
    /// us
    pub detection_time: f64,
    pub detected: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RampSample {
    pub t: f64,
    pub power: f64,
    pub lambda: f64,
    pub omega0: f64,
    pub abs_a2: f64,
    pub s_z: f64,
    pub photons: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RampOutcome {
    pub result: ThresholdResult,
    pub series: Vec<RampSample>,
}

struct RampObserver<'a> {
    model: &'a PowerModel,
    ramp: &'a RampProtocol,
    n_lambda: u64,
    target: f64,
    seed: f64,
    floor: bool,
    series: Vec<RampSample>,
    last: (f64, f64),
    detected: Option<f64>,
    peak: f64,
}

impl RampObserver<'_> {
    fn record(&self, t: f64, y: &[f64; 5]) -> RampSample {
        let power = self.ramp.power_at(t);
        let eff = self.model.effective_at(power).ok();
        let st = MeanFieldState::from_array(y);
        RampSample {
            t,
            power,
            lambda: eff.as_ref().map_or(f64::NAN, |e| e.dicke_coupling().abs()),
            omega0: eff.as_ref().map_or(f64::NAN, |e| e.omega0),
            abs_a2: st.a_c.norm_sqr(),
            s_z: st.s_z,
            photons: st.photons(self.n_lambda),
        }
    }
}

impl Observer<[f64; 5]> for RampObserver<'_> {
    fn sample(&mut self, t: f64, y: &[f64; 5]) {
        let s = self.record(t, y);
        self.series.push(s);
    }

    fn step(&mut self, t: f64, y: &mut [f64; 5]) -> Control {
        if self.floor {
            let d = deviation(y).sqrt();
            if d < self.seed {
                let scale = if d > 0.0 { self.seed / d } else { 0.0 };
                if scale > 0.0 {
                    for v in y.iter_mut().take(4) {
                        *v *= scale;
                    }
                } else {
                    y[2] = self.seed;
                }
                y[4] = -(0.25 - (y[2] * y[2] + y[3] * y[3])).max(0.0).sqrt();
            }
        }
        let photons = self.n_lambda as f64 * (y[0] * y[0] + y[1] * y[1]);
        self.peak = self.peak.max(photons);
        let (t0, n0) = self.last;
        self.last = (t, photons);
        if photons >= self.target {
            // linear interpolation within the step
            let frac = if photons > n0 { (self.target - n0) / (photons - n0) } else { 1.0 };
            self.detected = Some(t0 + frac.clamp(0.0, 1.0) * (t - t0));
            return Control::Stop;
        }
        Control::Continue
    }

    fn modifies_state(&self) -> bool {
        self.floor
    }
}

/// Linear power ramp with continuous recomputation of `λ(P)` and `ω₀(P)`,
/// stopped at the first time the intracavity photon number reaches the
/// detection level. The symmetric coupling `(λ_r + λ_s)/2` drives both
/// quadratures.
pub fn ramp_experiment(
    model: &PowerModel,
    ramp: &RampProtocol,
    detector: &DetectionCriterion,
    opts: &RampOptions,
) -> Result<RampOutcome> {
    if !(detector.photons > 0.0) {
        return Err(Error::InvalidConfig("detection photon number must be positive".into()));
    }
    let n_lambda = model.cfg.n_lambda();
    // probe the endpoints once so configuration errors surface as such
    model.effective_at(ramp.p_start)?;
    model.effective_at(ramp.p_end)?;
    let rhs = |t: f64, y: &[f64; 5]| {
        let eff = model
            .effective_at(ramp.power_at(t))
            .expect("endpoints validated; parameters are monotone in power");
        rhs_array(y, &eff.with_dicke_coupling(eff.dicke_coupling()))
    };
    let mut obs = RampObserver {
        model,
        ramp,
        n_lambda,
        target: detector.photons,
        seed: opts.seed,
        floor: opts.fluctuation_floor,
        series: Vec::with_capacity(opts.samples),
        last: (0.0, 0.0),
        detected: None,
        peak: 0.0,
    };
    let spec = EvolveSpec {
        dt_initial: 1e-3,
        ..EvolveSpec::adaptive(ramp.duration, opts.rel_tol, opts.abs_tol).with_samples(opts.samples.max(2))
    };
    integrate(rhs, MeanFieldState::seeded(opts.seed)?.to_array(), &spec, &mut obs)?;
    match obs.detected {
        Some(t) => {
            let p = ramp.power_at(t);
            Ok(RampOutcome {
                result: ThresholdResult {
                    p_threshold: p,
                    lambda_at_threshold: model.dicke_coupling_at(p)?,
                    detection_time: t,
                    detected: true,
                },
                series: obs.series,
            })
        }
        None => Err(Error::NotDetected { peak_photons: obs.peak }),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRecord {
    pub omega_d: f64,
    pub n_total: u64,
    /// detected ramp threshold, mW
    pub p_threshold: Option<f64>,
    pub lambda_dynamic: Option<f64>,
    /// closed-form threshold power and coupling
    pub p_static: Option<f64>,
    pub lambda_c_static: Option<f64>,
    /// static threshold with the coupling scaled up (lower bound) and down (upper bound)
    pub p_static_lower: Option<f64>,
    pub p_static_upper: Option<f64>,
    /// static threshold without the light shift
    pub p_static_no_stark: Option<f64>,
    pub error: Option<String>,
}

/// Band factors applied to the coupling for the lower and upper static curves.
pub const BAND_LOWER_SCALE: f64 = 1.2;
pub const BAND_UPPER_SCALE: f64 = 0.89;

/// Dynamic and static threshold powers across an atom-number grid.
pub fn threshold_map(
    model: &PowerModel,
    atoms: &[u64],
    ramp: &RampProtocol,
    detector: &DetectionCriterion,
    opts: &RampOptions,
) -> Result<Vec<ThresholdRecord>> {
    if atoms.is_empty() {
        return Err(Error::InvalidConfig("atom-number grid is empty".into()));
    }
    let (lo, hi) = (ramp.p_end * 1e-3, ramp.p_end * 10.0);
    atoms
        .par_iter()
        .map(|&n| {
            let m = model.with_atoms(n)?;
            let omega_d = m.cfg.dispersive_shift(n)?;
            let p_static = m.static_threshold(lo, hi)?;
            let lambda_c_static = p_static.map(|p| m.dicke_coupling_at(p)).transpose()?;
            let p_static_lower = m.with_coupling_scale(BAND_LOWER_SCALE).static_threshold(lo, hi)?;
            let p_static_upper = m.with_coupling_scale(BAND_UPPER_SCALE).static_threshold(lo, hi)?;
            let p_static_no_stark = m.with_stark(StarkModel::Disabled).static_threshold(lo, hi)?;
            let (p_threshold, lambda_dynamic, error) = match ramp_experiment(&m, ramp, detector, opts) {
                Ok(out) => (Some(out.result.p_threshold), Some(out.result.lambda_at_threshold), None),
                Err(e @ Error::NotDetected { .. }) => (None, None, Some(e.to_string())),
                Err(e) => return Err(e),
            };
            Ok(ThresholdRecord {
                omega_d,
                n_total: n,
                p_threshold,
                lambda_dynamic,
                p_static,
                lambda_c_static,
                p_static_lower,
                p_static_upper,
                p_static_no_stark,
                error,
            })
        })
        .collect()
}

/// Closed-form critical coupling for the Dicke reduction of `eff`, re-exported for callers
/// that only hold effective parameters.
pub fn static_critical_coupling(eff: &EffectiveParams) -> Result<f64> {
    critical_coupling(eff.omega0, eff.cavity_tc(), eff.kappa)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn toy(omega: f64, omega0: f64, delta: f64, kappa: f64) -> EffectiveParams {
        EffectiveParams {
            omega,
            omega0,
            delta,
            lambda_r: 0.0,
            lambda_s: 0.0,
            omega_ds: 0.0,
            delta_r: -1.0,
            delta_s: -1.0,
            n_lambda: 1000,
            kappa,
            eta: 0.0,
        }
    }

    #[test]
    fn normal_state_is_fixed_point() {
        let mut eff = toy(1.3, 0.7, 0.2, 0.4);
        eff.lambda_r = 0.5;
        eff.lambda_s = 0.9;
        let d = mean_field_rhs(&MeanFieldState::normal(), &eff);
        assert_eq!(d.to_array(), [0.0; 5]);
    }

    #[test]
    fn decoupled_cavity_decays() {
        let eff = toy(1.3, 0.7, 0.0, 0.4);
        let x = C64::new(0.3, -0.1);
        let start = MeanFieldState {
            a_c: x,
            ..MeanFieldState::seeded(0.2).unwrap()
        };
        let spec = EvolveSpec::adaptive(5.0, 1e-11, 1e-14).with_samples(6);
        let series = integrate_mean_field(&start, &eff, &spec, None).unwrap();
        for (t, st) in series {
            let exact = x * (-(C64::new(eff.kappa, eff.omega)) * t).exp();
            assert!((st.a_c - exact).norm() < 1e-9);
            assert!((st.s_minus.norm() - 0.2).abs() < 1e-9);
            assert_eq!(st.s_z, start.s_z);
        }
    }

    #[test]
    fn analytic_jacobian_matches_finite_differences() {
        let mut eff = toy(1.1, 0.6, 0.3, 0.25);
        eff.lambda_r = 0.35;
        eff.lambda_s = 0.5;
        let j = normal_state_jacobian(&eff);
        let base = MeanFieldState::normal().to_array();
        let h = 1e-7;
        for col in 0..4 {
            let mut up = base;
            let mut dn = base;
            up[col] += h;
            dn[col] -= h;
            let fu = rhs_array(&up, &eff);
            let fd = rhs_array(&dn, &eff);
            for row in 0..4 {
                let fd_val = (fu[row] - fd[row]) / (2.0 * h);
                assert!((fd_val - j[(row, col)]).abs() < 1e-7, "({row}, {col})");
            }
        }
    }

    #[test]
    fn jacobian_threshold_matches_closed_form() {
        for (w, w0, d, k) in [(1.0, 1.0, 0.0, 0.5), (2.0, 0.3, 0.4, 0.1), (-0.7, -1.5, 0.1, 0.2)] {
            let eff = toy(w, w0, d, k);
            let lc = eff.critical_coupling().unwrap();
            let t = jacobian_threshold(&eff, 0.1 * lc, 3.0 * lc, 1e-9).unwrap();
            assert!((t / lc - 1.0).abs() < 1e-6, "{t} vs {lc}");
        }
    }

    #[test]
    fn conservative_threshold_is_half_frequency() {
        let eff = toy(1.0, 1.0, 0.0, 0.0);
        let t = jacobian_threshold(&eff, 0.1, 2.0, 1e-9).unwrap();
        assert!((t - 0.5).abs() < 1e-6);
        let scan = bifurcation_scan(&eff, &[0.3, 0.45, 0.55, 0.7], &ScanOptions::default()).unwrap();
        let th = scan.threshold.unwrap();
        assert!((th - 0.5).abs() < 0.005, "{th}");
    }

    #[test]
    fn below_threshold_decays_and_above_saturates() {
        let eff = toy(1.0, 1.0, 0.1, 0.5);
        let lc = eff.critical_coupling().unwrap();
        let opts = ScanOptions::default();
        let below = steady_mean_field(&eff.with_dicke_coupling(0.5 * lc), &opts).unwrap();
        assert!(below.a_c.norm() < 1e-6);
        let above = steady_mean_field(&eff.with_dicke_coupling(1.5 * lc), &opts).unwrap();
        assert!(above.a_c.norm_sqr() > 1e-2);
        let d = mean_field_rhs(&above, &eff.with_dicke_coupling(1.5 * lc));
        assert!(d.to_array().iter().all(|v| v.abs() < 1e-7));
    }

    #[test]
    fn spin_length_is_conserved() {
        let mut eff = toy(1.0, 0.8, 0.3, 0.3);
        eff.lambda_r = 0.7;
        eff.lambda_s = 0.9;
        let start = MeanFieldState::seeded(0.01).unwrap();
        let spec = EvolveSpec::adaptive(200.0, 1e-12, 1e-15).with_samples(50);
        let series = integrate_mean_field(&start, &eff, &spec, None).unwrap();
        for (_, st) in series {
            assert!((st.spin_length() / 0.25 - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn scan_threshold_within_one_percent() {
        let eff = toy(2.0, 1.0, 0.2, 0.4);
        let lc = eff.critical_coupling().unwrap();
        let grid: Vec<f64> = [0.6, 0.8, 0.95, 1.05, 1.2, 1.4].iter().map(|f| f * lc).collect();
        let scan = bifurcation_scan(&eff, &grid, &ScanOptions::default()).unwrap();
        let th = scan.threshold.unwrap();
        assert!((th / lc - 1.0).abs() < 0.01, "{th} vs {lc}");
        assert!(scan.points[0].abs_a2 < 1e-6);
        assert!(scan.points[5].abs_a2 > 1e-3);
    }

    #[test]
    fn order_parameter_vanishes_linearly() {
        let eff = toy(1.0, 1.0, 0.0, 0.5);
        let lc = eff.critical_coupling().unwrap();
        let opts = ScanOptions::default();
        let a2 = |eps: f64| {
            steady_mean_field(&eff.with_dicke_coupling(lc * (1.0 + eps)), &opts)
                .unwrap()
                .a_c
                .norm_sqr()
        };
        let (e1, e2) = (0.02, 0.2);
        let exponent = (a2(e2) / a2(e1)).ln() / (e2 / e1).ln();
        assert!((exponent - 1.0).abs() < 0.15, "{exponent}");
    }

    #[test]
    fn mirrored_seeds_give_mirrored_trajectories() {
        let eff = toy(1.0, 0.9, 0.2, 0.3).with_dicke_coupling(0.9);
        let s = MeanFieldState::seeded(1e-3).unwrap();
        let m = MeanFieldState {
            a_c: -s.a_c,
            s_minus: -s.s_minus,
            s_z: s.s_z,
        };
        let spec = EvolveSpec::adaptive(30.0, 1e-10, 1e-14).with_samples(10);
        let a = integrate_mean_field(&s, &eff, &spec, None).unwrap();
        let b = integrate_mean_field(&m, &eff, &spec, None).unwrap();
        for ((_, x), (_, y)) in a.iter().zip(&b) {
            assert_eq!(x.a_c, -y.a_c);
            assert_eq!(x.s_minus, -y.s_minus);
            assert_eq!(x.s_z, y.s_z);
        }
    }

    #[test]
    fn ramp_protocol_validation() {
        assert!(RampProtocol::new(36.0, 3.6, 1000.0).is_err());
        assert!(RampProtocol::new(-1.0, 3.6, 1000.0).is_err());
        assert!(RampProtocol::new(3.6, 36.0, 0.0).is_err());
        let r = RampProtocol::new(3.6, 36.0, 1000.0).unwrap();
        assert_eq!(r.power_at(500.0), 19.8);
    }
}
