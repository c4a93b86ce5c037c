//! Non-colliding squared Bessel diffusions with drifts.

#[cfg(feature = "cli")]
pub mod cli;
pub mod diffspec;
pub mod gibbs;
pub mod kernels;
pub mod linalg;
pub mod matproc;
pub mod quad;
pub mod rng;
pub mod sde;
pub mod specfun;
pub mod stats;
