//! Heat equation on a moving domain `[0, X_t]`, mass lost at the edge,
//! ε-relaxed solutions, Monte-Carlo exit-time checks and analytic profiles.

pub mod analytic;
mod mc;
mod relaxed;
mod solver;

use thiserror::Error;

use crate::profile::ProfileError;

pub use analytic::{bd_wave, diffuse_stationary, stationary_profile, trapezoid_profile};
pub use mc::{mc_exit, McEstimate};
pub use relaxed::{recommended_r_max, relaxed_solve, squeeze_check, RelaxedOptions, RelaxedSolution, SqueezeReport};
pub use solver::{edge_flux, heat_solve_moving, mass_loss, EdgePath, MovingHeat, PdeRun};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FbpError {
    #[error("edge X = {x} at t = {t} leaves the grid")]
    EdgeOutOfDomain { t: f64, x: f64 },
    #[error("time step {0} is not usable")]
    UnstableStep(f64),
    #[error("invalid edge path: {0}")]
    InvalidEdge(String),
    #[error("invalid initial data: {0}")]
    InvalidInitial(String),
    #[error(
        "window {window}: no sign change of Δ - jt* on [{v_lo}, {v_hi}] \
         (Δ = {loss_lo} and {loss_hi}, target {target})"
    )]
    BracketFailure {
        window: usize,
        v_lo: f64,
        v_hi: f64,
        loss_lo: f64,
        loss_hi: f64,
        target: f64,
    },
    #[error("window t* = {window} is shorter than two solver steps of {dt}")]
    WindowTooSmall { window: f64, dt: f64 },
    #[error(transparent)]
    Profile(#[from] ProfileError),
}
