//! Determinantal coreset sampling and diagnostics.
//!
//! The crate builds correlation kernels over finite weighted datasets,
//! samples coresets from them (and from independent baselines), scores the
//! coresets against k-means style query families, and verifies the
//! variance/cumulant/tail machinery of determinantal linear statistics
//! against brute-force oracles on small ground sets.

pub mod basis;
pub mod bench;
pub mod concentration;
pub mod data;
pub mod error;
pub mod eval;
pub mod kernels;
pub mod numerics;
pub mod samplers;

pub use data::{Dataset, DensityModel};
pub use error::{Error, Result};
pub use eval::{ErrorReport, Query};
pub use kernels::{KernelMatrix, SpectralForm};
pub use samplers::Coreset;
