//! Models sharing the selection mechanism: diffuse injection, branching
//! Brownian motion with selection, and static nonlocal branching.

mod law;
mod sim;

use thiserror::Error;

pub use law::InjectionLaw;
pub use sim::{bd_simulate, diffuse_simulate, dr_mean_field, dr_simulate, EdgeStats, MeanField, VariantTrajectory};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VariantError {
    #[error("invalid law: {0}")]
    InvalidLaw(String),
    #[error("invalid run: {0}")]
    Invalid(String),
}
