//! Simulation and analysis toolkit for open Dicke and Tavis-Cummings models
//! where two Raman beams couple hyperfine states through a lossy cavity.
//!
//! Module map:
//! - [`params`]: lab parameters to effective model parameters
//! - [`hilbert`]: truncated Fock ⊗ collective spin operators and Hamiltonians
//! - [`lindblad`]: master-equation evolution, steady states, probe transmission
//! - [`meanfield`]: semiclassical dynamics, bifurcation scans, power ramps
//! - [`spectrum`]: normal modes and splitting extraction
//! - [`expcli`]: configuration files, experiment runner and run records

pub mod error;
pub mod expcli;
pub mod hilbert;
pub mod lindblad;
pub mod meanfield;
pub mod ode;
pub mod params;
pub mod spectrum;
pub mod units;

pub use error::{Error, Result};
pub use hilbert::{DensityMatrix, FockSpace, Operator, SpinSpace, C64};
pub use ode::{EvolveSpec, Method};
pub use params::{EffectiveParams, PhysicalConfig, PowerCalibration};
