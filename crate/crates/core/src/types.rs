//! Shared domain types.
//!
//! Positions are stored flat (`n_t * dim` doubles, row-major) so that large
//! datasets stay cache-friendly; a "position vector" in the API is a `&[f64]`
//! slice of length `dim`.
//!
//! Frame conventions: 2-D world coordinates are (east, north) in meters with
//! a target at heading 0 flying northbound; 3-D uses the north-east-down
//! frame. `dim` is fixed per dataset/model and identical across one pipeline
//! run.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A time-stamped position sequence of one simulated or virtual target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// Strictly increasing timestamps in seconds.
    pub times: Vec<f64>,
    /// Flat positions, `times.len() * dim` values.
    pub positions: Vec<f64>,
    pub dim: usize,
}

impl Trajectory {
    pub fn new(times: Vec<f64>, positions: Vec<f64>, dim: usize) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::config(format!("position dimension must be 2 or 3, got {dim}")));
        }
        if times.is_empty() {
            return Err(Error::config("trajectory must contain at least one sample"));
        }
        if positions.len() != times.len() * dim {
            return Err(Error::contract(format!(
                "positions length {} does not match {} samples of dimension {}",
                positions.len(),
                times.len(),
                dim
            )));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::contract("timestamps must be strictly increasing"));
        }
        if times.iter().chain(positions.iter()).any(|v| !v.is_finite()) {
            return Err(Error::contract("trajectory contains non-finite values"));
        }
        Ok(Trajectory { times, positions, dim })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Position at step `k` as a `dim`-length slice.
    pub fn position(&self, k: usize) -> &[f64] {
        &self.positions[k * self.dim..(k + 1) * self.dim]
    }
}

/// A collection of trajectories plus per-trajectory dynamics parameters and
/// normalization/provenance metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryDataset {
    pub dim: usize,
    /// Number of conditioning parameters per trajectory (may be zero).
    pub n_psi: usize,
    pub trajectories: Vec<Trajectory>,
    /// One parameter vector of length `n_psi` per trajectory.
    pub params: Vec<Vec<f64>>,
    /// Free-form provenance (scenario name, seed, generator settings).
    pub meta: BTreeMap<String, String>,
}

impl TrajectoryDataset {
    pub fn new(
        dim: usize,
        n_psi: usize,
        trajectories: Vec<Trajectory>,
        params: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if params.len() != trajectories.len() {
            return Err(Error::contract(format!(
                "{} parameter vectors for {} trajectories",
                params.len(),
                trajectories.len()
            )));
        }
        if let Some(p) = params.iter().find(|p| p.len() != n_psi) {
            return Err(Error::contract(format!(
                "parameter vector has length {}, expected {n_psi}",
                p.len()
            )));
        }
        if let Some(t) = trajectories.iter().find(|t| t.dim != dim) {
            return Err(Error::contract(format!(
                "trajectory has dimension {}, dataset declares {dim}",
                t.dim
            )));
        }
        Ok(TrajectoryDataset { dim, n_psi, trajectories, params, meta: BTreeMap::new() })
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    /// Total number of (trajectory, time step) samples.
    pub fn point_count(&self) -> usize {
        self.trajectories.iter().map(Trajectory::len).sum()
    }
}
