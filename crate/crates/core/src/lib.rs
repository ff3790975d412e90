//! Multilevel active subspaces for high-dimensional function approximation.
//!
//! The crate detects low-dimensional active subspaces from gradient samples at
//! several discretization levels, fits optimally weighted least-squares Hermite
//! expansions inside each subspace, and sums the per-level corrections into a
//! telescoping surrogate. An adaptive driver chooses levels, ranks and
//! polynomial spaces from gain/work estimates. A log-normal diffusion benchmark
//! with adjoint gradients is included as a [`ModelHierarchy`].
//!
//! All numerical code is generic over a [`Real`] scalar (`f32` or `f64`); the
//! `*64` aliases below fix the scalar to `f64`, which is what the benchmark and
//! the command-line harness use.

pub mod adaptive;
pub mod asm;
pub mod error;
pub mod lognormal_pde;
pub mod lstsq;
pub mod mlas;
pub mod polyspace;
pub mod sampling;
pub mod scalar;

pub use crate::adaptive::{amlaspa, AdaptiveConfig, AdaptiveOutcome, CellIndex, RankSchedule};
pub use crate::asm::{GradientSpectrum, SpectralDecomposition, Subspace};
pub use crate::error::{Error, Result};
pub use crate::lognormal_pde::{BenchmarkConfig, LognormalBenchmark};
pub use crate::lstsq::LsFit;
pub use crate::mlas::{
    mlaspa_fit, slaspa_fit, LevelSurrogate, MlasSurrogate, ModelHierarchy, MultilevelPlan,
    WorkLedger,
};
pub use crate::polyspace::{MultiIndex, MultiIndexSet};
pub use crate::sampling::{SeededStream, WeightedSample};
pub use crate::scalar::Real;

pub type Subspace64 = Subspace<f64>;
pub type Subspace32 = Subspace<f32>;
pub type LsFit64 = LsFit<f64>;
pub type LsFit32 = LsFit<f32>;
pub type Surrogate64 = MlasSurrogate<f64>;
pub type Surrogate32 = MlasSurrogate<f32>;
pub type LevelSurrogate64 = LevelSurrogate<f64>;
pub type Benchmark64 = LognormalBenchmark<f64>;
