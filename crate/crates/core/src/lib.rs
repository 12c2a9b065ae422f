//! Numerical and stochastic tools for the one-dimensional heat equation
//! with a current reservoir at the origin and a free boundary.

pub mod barriers;
pub mod checks;
pub mod fbp;
pub mod green;
pub mod io;
pub mod lattice;
pub mod particles;
pub mod profile;
pub mod rng;
pub mod stats;
pub mod variants;

pub use profile::{DensityProfile, FluxParams, Grid};
