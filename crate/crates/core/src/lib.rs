//! Heat kernels, killed semigroups and spectral traces of rotationally
//! symmetric alpha-stable processes.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod error;
pub mod exit_sim;
pub mod experiments;
pub mod geometry;
pub mod halfspace;
pub mod quadrature;
pub mod rng;
pub mod sampling;
pub mod special;
pub mod spectral;
pub mod stable_kernel;
pub mod stats;

pub use error::{Error, Result};
pub use geometry::Domain;
pub use rng::RngStream;
pub use stable_kernel::StableParams;
