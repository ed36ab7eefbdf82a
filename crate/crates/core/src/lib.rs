//! Removal of simulated cloud cover from stacks of co-registered grayscale
//! images via low-rank plus sparse matrix decomposition.
//!
//! A stack of n images of the same d-pixel scene is vectorized into a d x n
//! matrix `D`. The shared ground scene is (near) rank one, while clouds vary
//! from shot to shot, so the scene can be recovered as the low-rank part of a
//! decomposition of `D`. Three solvers are provided:
//!
//! * [`solvers::rpca`]: additive model `D = L + C` (robust PCA),
//! * [`solvers::atm`]: multiplicative scattering model `D = L.*(1-C) + C`,
//! * [`solvers::aatm`]: additive approximation `D = L + C + N` with a
//!   Frobenius-penalized haze term `N`.
//!
//! Supporting modules: [`sim`] generates ground-truth cloud fields from
//! gradient noise so recovery error can be measured exactly, [`analysis`]
//! provides operating bounds and an estimator for the sparsity weight lambda,
//! [`eval`] runs quantitative benchmark sweeps, and [`imageio`] handles PGM,
//! PNG, and raw matrix containers.

pub mod analysis;
pub mod error;
pub mod eval;
pub mod imageio;
pub mod linalg;
pub mod sim;
pub mod solvers;

pub use error::Error;
pub use linalg::Mat;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
