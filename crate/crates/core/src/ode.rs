//! Explicit Runge-Kutta integrators shared by the master-equation and
//! mean-field solvers: classic fixed-step RK4 and the adaptive
//! Dormand-Prince 5(4) pair with a PI step-size controller.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::C64;

/// Vector-space operations an integrator needs from its state type.
pub trait OdeState: Clone {
    /// `self += a·x`
    fn axpy(&mut self, a: f64, x: &Self);

    /// Largest component-wise ratio `|err| / (atol + rtol·max(|y0|, |y1|))`.
    fn error_ratio(err: &Self, y0: &Self, y1: &Self, rtol: f64, atol: f64) -> f64;
}

impl OdeState for DMatrix<C64> {
    fn axpy(&mut self, a: f64, x: &Self) {
        self.zip_apply(x, |s, xv| *s += xv * a);
    }

    fn error_ratio(err: &Self, y0: &Self, y1: &Self, rtol: f64, atol: f64) -> f64 {
        err.iter()
            .zip(y0.iter().zip(y1.iter()))
            .map(|(e, (a, b))| e.norm() / (atol + rtol * a.norm().max(b.norm())))
            .fold(0.0, f64::max)
    }
}

impl<const N: usize> OdeState for [f64; N] {
    fn axpy(&mut self, a: f64, x: &Self) {
        for (s, xv) in self.iter_mut().zip(x) {
            *s += a * xv;
        }
    }

    fn error_ratio(err: &Self, y0: &Self, y1: &Self, rtol: f64, atol: f64) -> f64 {
        err.iter()
            .zip(y0.iter().zip(y1))
            .map(|(e, (a, b))| e.abs() / (atol + rtol * a.abs().max(b.abs())))
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Classic RK4 with step `dt_initial`.
    Rk4,
    /// Dormand-Prince 5(4), adaptive.
    DormandPrince,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolveSpec {
    /// us
    pub t_final: f64,
    /// us; the fixed step for RK4
    pub dt_initial: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub method: Method,
    /// Number of equally spaced output samples, including `t = 0` and `t_final`.
    pub samples: usize,
    pub max_steps: usize,
}

impl EvolveSpec {
    pub fn adaptive(t_final: f64, rel_tol: f64, abs_tol: f64) -> Self {
        EvolveSpec {
            t_final,
            dt_initial: t_final * 1e-4,
            rel_tol,
            abs_tol,
            method: Method::DormandPrince,
            samples: 2,
            max_steps: 50_000_000,
        }
    }

    pub fn fixed(t_final: f64, dt: f64) -> Self {
        EvolveSpec {
            t_final,
            dt_initial: dt,
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            method: Method::Rk4,
            samples: 2,
            max_steps: 50_000_000,
        }
    }

    pub fn with_samples(mut self, samples: usize) -> Self {
        self.samples = samples;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.t_final > 0.0
            && self.dt_initial > 0.0
            && self.rel_tol > 0.0
            && self.abs_tol > 0.0
            && self.samples >= 2
            && self.t_final.is_finite();
        if !ok {
            return Err(Error::InvalidConfig(format!("invalid integration spec {self:?}")));
        }
        Ok(())
    }

    /// Output sample times.
    pub fn sample_times(&self) -> Vec<f64> {
        let n = self.samples - 1;
        (0..=n).map(|i| self.t_final * i as f64 / n as f64).collect()
    }
}

/// What the per-step observer wants the integrator to do next.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

/// Hooks invoked by [`integrate`].
pub trait Observer<S> {
    /// Called at each requested sample time.
    fn sample(&mut self, _t: f64, _y: &S) {}

    /// Called after every accepted step; may modify the state in place
    /// (e.g. re-symmetrization) or stop the run.
    fn step(&mut self, _t: f64, _y: &mut S) -> Control {
        Control::Continue
    }

    /// Whether [`Observer::step`] may change the state.
    fn modifies_state(&self) -> bool {
        false
    }
}

/// Observer that records every sample.
pub struct Recorder<S> {
    pub samples: Vec<(f64, S)>,
}

impl<S> Default for Recorder<S> {
    fn default() -> Self {
        Recorder { samples: Vec::new() }
    }
}

impl<S: Clone> Observer<S> for Recorder<S> {
    fn sample(&mut self, t: f64, y: &S) {
        self.samples.push((t, y.clone()));
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stats {
    pub accepted: usize,
    pub rejected: usize,
    /// Time at which integration ended (earlier than `t_final` if stopped).
    pub t_end: f64,
}

// Dormand-Prince 5(4) tableau
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// 5th minus 4th order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn combo<S: OdeState>(y: &S, h: f64, terms: &[(f64, &S)]) -> S {
    let mut out = y.clone();
    for &(c, k) in terms {
        if c != 0.0 {
            out.axpy(h * c, k);
        }
    }
    out
}

/// Integrate `dy/dt = f(t, y)` from `t = 0` to `spec.t_final`.
///
/// Steps are clipped to land exactly on sample times. Returns the final
/// state and step statistics.
pub fn integrate<S, F, O>(mut f: F, y0: S, spec: &EvolveSpec, obs: &mut O) -> Result<(S, Stats)>
where
    S: OdeState,
    F: FnMut(f64, &S) -> S,
    O: Observer<S>,
{
    spec.validate()?;
    let times = spec.sample_times();
    let mut y = y0;
    let mut t = 0.0;
    obs.sample(t, &y);
    let mut next_sample = 1;
    let mut stats = Stats { accepted: 0, rejected: 0, t_end: 0.0 };
    let dt_min = spec.t_final * 1e-14;
    let mut h = spec.dt_initial.min(spec.t_final);
    let mut err_prev: f64 = 1e-4;
    // FSAL derivative for Dormand-Prince
    let mut k1 = f(t, &y);

    while next_sample < times.len() {
        let target = times[next_sample];
        let remaining = target - t;
        let landing = h >= remaining * (1.0 - 1e-9);
        let step = if landing { remaining } else { h };

        let (y_new, k7, err_ratio) = match spec.method {
            Method::Rk4 => {
                let k2 = f(t + step / 2.0, &combo(&y, step, &[(0.5, &k1)]));
                let k3 = f(t + step / 2.0, &combo(&y, step, &[(0.5, &k2)]));
                let k4 = f(t + step, &combo(&y, step, &[(1.0, &k3)]));
                let y_new = combo(&y, step, &[(1.0 / 6.0, &k1), (1.0 / 3.0, &k2), (1.0 / 3.0, &k3), (1.0 / 6.0, &k4)]);
                (y_new, None, 0.0)
            }
            Method::DormandPrince => {
                let k2 = f(t + C2 * step, &combo(&y, step, &[(A21, &k1)]));
                let k3 = f(t + C3 * step, &combo(&y, step, &[(A31, &k1), (A32, &k2)]));
                let k4 = f(t + C4 * step, &combo(&y, step, &[(A41, &k1), (A42, &k2), (A43, &k3)]));
                let k5 = f(
                    t + C5 * step,
                    &combo(&y, step, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
                );
                let k6 = f(
                    t + step,
                    &combo(&y, step, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
                );
                let y_new = combo(&y, step, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)]);
                let k7 = f(t + step, &y_new);
                let mut err = k1.clone();
                // err = step·Σ E_i k_i, built from a zeroed copy of k1
                err.axpy(-1.0, &k1);
                for (c, k) in [(E1, &k1), (E3, &k3), (E4, &k4), (E5, &k5), (E6, &k6), (E7, &k7)] {
                    err.axpy(step * c, k);
                }
                let ratio = S::error_ratio(&err, &y, &y_new, spec.rel_tol, spec.abs_tol);
                (y_new, Some(k7), ratio)
            }
        };

        if !err_ratio.is_finite() {
            return Err(Error::StepSizeUnderflow { t, dt: step });
        }

        if spec.method == Method::DormandPrince && err_ratio > 1.0 {
            stats.rejected += 1;
            let factor = (0.9 * err_ratio.powf(-0.2)).clamp(0.2, 1.0);
            h = step * factor;
            if h < dt_min {
                return Err(Error::StepSizeUnderflow { t, dt: h });
            }
            continue;
        }

        // accept
        t = if landing { target } else { t + step };
        y = y_new;
        stats.accepted += 1;
        if stats.accepted > spec.max_steps {
            return Err(Error::StepSizeUnderflow { t, dt: step });
        }
        let control = obs.step(t, &mut y);
        if control == Control::Stop {
            stats.t_end = t;
            obs.sample(t, &y);
            return Ok((y, stats));
        }
        k1 = match k7 {
            Some(k7) if !obs.modifies_state() => k7,
            _ => f(t, &y),
        };
        if landing {
            obs.sample(t, &y);
            next_sample += 1;
        }

        if spec.method == Method::DormandPrince {
            let e = err_ratio.max(1e-10);
            let factor = (0.9 * e.powf(-0.7 / 5.0) * err_prev.powf(0.4 / 5.0)).clamp(0.2, 5.0);
            err_prev = e;
            // a step clipped onto a sample time says little about the natural size
            h = if landing { h.max(step * factor) } else { step * factor };
        }
    }
    stats.t_end = t;
    Ok((y, stats))
}
