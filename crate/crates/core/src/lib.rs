//! Infinite-width physics-informed networks as Gaussian processes.
//!
//! Posterior-mean predictions by exact GPR, the neurally-informed equation
//! (analytic half-line toy and grid solver), and spectral-bias diagnostics of
//! the boundary-corrected kernel.

pub mod dual;
pub mod error;
pub mod experiments;
pub mod gpr;
pub mod heat;
pub mod kernels;
pub mod linalg;
pub mod nie;
pub mod operators;
pub mod points;
pub mod spectral;

pub use error::{Error, Result};
pub use kernels::{DerivativeMethod, KernelFamily, KernelSpec, RandomFeatureNet};
pub use operators::{DomainGrid, KernelSide, LinearDiffOp};
pub use points::PointSet;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
