//! Numerical thermodynamic formalism on subshifts of finite type: pressure
//! curves, entropy spectra via Legendre-Fenchel duality, pre-skeleton
//! extraction, the scheduled concatenation tower, and entropy estimation
//! with the Entropy Distribution Principle.

pub mod concatenation;
pub mod config;
pub mod distribution;
pub mod dp;
pub mod entropy;
pub mod error;
pub mod legendre;
pub mod pressure;
pub mod skeleton;
pub mod symbolic;

pub use error::{Result, SpectraError};
