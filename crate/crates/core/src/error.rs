use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("config error at line {line}, key `{key}`: {message}")]
    Config {
        line: usize,
        key: String,
        message: String,
    },

    #[error("degenerate detuning: |{which}| = {value:.6e} rad/us is below the floor {floor:.6e} rad/us")]
    DegenerateDetuning {
        which: &'static str,
        value: f64,
        floor: f64,
    },

    #[error("outside validity domain: {0}")]
    OutsideValidity(String),

    #[error("sign mismatch: dispersive shift {omega_d:.6e} and detuning {delta_r:.6e} must share a sign")]
    SignMismatch { omega_d: f64, delta_r: f64 },

    #[error("negative beam power {0} mW")]
    NegativePower(f64),

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: String, right: String },

    #[error("invalid density matrix: {0}")]
    InvalidState(String),

    #[error("Fock truncation inadequate: top-level population {population:.3e} exceeds {limit:.1e}")]
    Truncation { population: f64, limit: f64 },

    #[error("step size underflow at t = {t:.6e} us (dt = {dt:.3e})")]
    StepSizeUnderflow { t: f64, dt: f64 },

    #[error("singular Liouvillian: {0}")]
    SingularLiouvillian(String),

    #[error("no stationary state reached at lambda = {lambda:.6e} rad/us (relative change {change:.3e})")]
    NonStationary { lambda: f64, change: f64 },

    #[error("ramp ended without detection (peak photon number {peak_photons:.3e})")]
    NotDetected { peak_photons: f64 },

    #[error("degenerate fit: {0}")]
    FitDegenerate(String),

    #[error("check `{id}` failed: {detail}")]
    CheckFailed { id: String, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn dims(left: impl std::fmt::Debug, right: impl std::fmt::Debug) -> Self {
        Error::DimensionMismatch {
            left: format!("{left:?}"),
            right: format!("{right:?}"),
        }
    }
}
