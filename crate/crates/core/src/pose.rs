//! Planar/3-D pose geometry: rotating and translating model-frame samples
//! into each real target's position and heading.
//!
//! The flow learns the position distribution of a target that starts at the
//! origin flying northbound. A predicted sample `x` is placed at a real
//! target with normalized position `p` and heading `chi` via
//! `x_real = R(chi) * x + p`, all in normalized coordinates.

use serde::{Deserialize, Serialize};

use crate::norm::NormalizationParams;

/// Position plus heading of a real target in the world frame.
///
/// `heading` is in radians, wrapped to (-pi, pi], with 0 meaning northbound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    /// World-frame position in meters (`dim` components).
    pub position: Vec<f64>,
    pub heading: f64,
}

impl Pose {
    pub fn new(position: Vec<f64>, heading: f64) -> Self {
        Pose { position, heading: wrap_angle(heading) }
    }

    /// Pose with the position mapped into the model's normalized frame.
    ///
    /// Training trajectories start at the world origin, so the model-frame
    /// origin corresponds to world zero and the pose enters as a scaled
    /// displacement (no center offset): translating a sample by this
    /// position and denormalizing lands exactly `self.position` meters from
    /// where the training target would be.
    pub fn normalized(&self, norm: &NormalizationParams) -> Pose {
        let position =
            self.position.iter().zip(&norm.half_range).map(|(p, h)| p / h).collect();
        Pose { position, heading: self.heading }
    }

    /// Heading of a moving target from its velocity vector.
    ///
    /// For 3-D (north-east-down) the heading is the azimuth of the horizontal
    /// velocity. A zero horizontal velocity yields heading 0.
    pub fn heading_from_velocity(velocity: &[f64]) -> f64 {
        let chi = match velocity.len() {
            // 2-D (east, north): solve R(chi) * (0, 1) = v / |v|.
            2 => f64::atan2(-velocity[0], velocity[1]),
            // 3-D (north, east, down): R(chi) * (1, 0, 0) = horizontal dir.
            3 => f64::atan2(velocity[1], velocity[0]),
            n => panic!("velocity must have 2 or 3 components, got {n}"),
        };
        if chi.is_nan() {
            0.0
        } else {
            wrap_angle(chi)
        }
    }
}

/// Wrap an angle to (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let mut r = a.rem_euclid(2.0 * std::f64::consts::PI);
    if r > std::f64::consts::PI {
        r -= 2.0 * std::f64::consts::PI;
    }
    r
}

/// Row-major `dim x dim` rotation matrix for heading `chi`.
///
/// For `dim == 2` this is `[[cos, -sin], [sin, cos]]`; for `dim == 3` the
/// same rotation acts on the first two axes and leaves the down-axis fixed.
pub fn rotation_matrix(chi: f64, dim: usize) -> Vec<f64> {
    let (s, c) = chi.sin_cos();
    match dim {
        2 => vec![c, -s, s, c],
        3 => vec![c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0],
        n => panic!("rotation dimension must be 2 or 3, got {n}"),
    }
}

/// Apply `R(chi) * x + p` where `pose` is already in normalized coordinates.
pub fn transform_sample(x: &[f64], pose: &Pose) -> Vec<f64> {
    let dim = x.len();
    let r = rotation_matrix(pose.heading, dim);
    let mut out = vec![0.0; dim];
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = pose.position[i];
        for (j, xj) in x.iter().enumerate() {
            acc += r[i * dim + j] * xj;
        }
        *o = acc;
    }
    out
}

/// Inverse of [`transform_sample`]: recover the model-frame sample from a
/// normalized world-frame one.
pub fn inverse_transform_sample(x_real: &[f64], pose: &Pose) -> Vec<f64> {
    let dim = x_real.len();
    let r = rotation_matrix(pose.heading, dim);
    let mut out = vec![0.0; dim];
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for j in 0..dim {
            // Transpose of the orthonormal rotation.
            acc += r[j * dim + i] * (x_real[j] - pose.position[j]);
        }
        *o = acc;
    }
    out
}
