//! Shared fixtures for the criterion benches.

use fbplab_core::fbp::stationary_profile;
use fbplab_core::{DensityProfile, FluxParams, Grid};

pub fn unit_flux() -> FluxParams {
    FluxParams::new(1.0).expect("positive flux")
}

pub fn grid(h: f64) -> Grid {
    Grid::covering(h, 6.0).expect("valid grid")
}

/// Unit-mass stationary profile on a grid of spacing `h`.
pub fn stationary(h: f64) -> DensityProfile {
    stationary_profile(1.0, unit_flux(), grid(h))
}
