//! Block-coherence analysis of dictionaries, block-sparse recovery by ℓ2,1
//! minimization, group-lasso regression, and the Monte Carlo experiments that
//! tie them together.
//!
//! Everything numerical is generic over [`Real`] (`f32` or `f64`); the
//! aliases below fix the scalar for the common case.

pub mod certificates;
pub mod conditioning;
pub mod dictgen;
mod error;
pub mod experiments;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod rng;
mod scalar;
pub mod signals;
pub mod solvers;

pub use error::{Error, Result};
pub use metrics::{BicConstants, BicVerdict, Dictionary, DictionaryMetrics};
pub use scalar::Real;
pub use signals::{BlockSparseSignal, Observation};
pub use solvers::{SolverConfig, SolverResult};

pub type Dictionary64 = Dictionary<f64>;
pub type Dictionary32 = Dictionary<f32>;
pub type DictionaryMetrics64 = DictionaryMetrics<f64>;
pub type Signal64 = BlockSparseSignal<f64>;
pub type SolverResult64 = SolverResult<f64>;
