//! Prediction of stochastically maneuvering aerial targets.
//!
//! The pipeline has three stages:
//!
//! 1. [`sim`] generates Monte Carlo trajectory data for maneuvering or
//!    ballistic targets.
//! 2. [`flow`] + [`train`] fit a conditional normalizing flow (masked
//!    autoregressive layers with monotone rational-quadratic splines) to the
//!    time-indexed position distribution `p(x | t, psi)`, using the
//!    reverse-mode engine in [`autodiff`].
//! 3. [`predict`] draws coherent sample trajectories from the trained model
//!    and [`cluster`] condenses them into a small set of deterministic
//!    virtual-target trajectories via time-series k-means.
//!
//! All randomness is seed-driven and every operation is deterministic given
//! its seed, so artifacts are byte-for-byte reproducible.

pub mod autodiff;
pub mod cluster;
pub mod error;
pub mod flow;
pub mod io;
pub mod norm;
pub mod pose;
pub mod predict;
pub mod sim;
pub mod train;
pub mod types;

pub use error::{Error, Result};
pub use norm::NormalizationParams;
pub use pose::Pose;
pub use types::{Trajectory, TrajectoryDataset};
