//! Per-channel min-max normalization of (position, time, psi) channels.
//!
//! Training data is mapped affinely so every observed channel spans [-1, 1].
//! Channel layout is fixed throughout the crate: `dim` position channels,
//! then time, then `n_psi` dynamics-parameter channels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::TrajectoryDataset;

/// Affine map `u -> (u - center) / half_range`, one entry per channel.
///
/// Channels with zero observed range get `half_range = 1` and `center` equal
/// to the constant value, so constant psi channels (or a degenerate axis)
/// normalize to 0 instead of erroring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationParams {
    pub center: Vec<f64>,
    pub half_range: Vec<f64>,
    pub dim: usize,
    pub n_psi: usize,
}

impl NormalizationParams {
    pub fn channels(&self) -> usize {
        self.dim + 1 + self.n_psi
    }

    /// Index of the time channel.
    pub fn time_channel(&self) -> usize {
        self.dim
    }

    /// Normalize a full channel vector in place.
    pub fn normalize(&self, u: &mut [f64]) -> Result<()> {
        self.check_len(u.len())?;
        for (c, v) in u.iter_mut().enumerate() {
            *v = (*v - self.center[c]) / self.half_range[c];
        }
        Ok(())
    }

    /// Inverse of [`normalize`](Self::normalize).
    pub fn denormalize(&self, u: &mut [f64]) -> Result<()> {
        self.check_len(u.len())?;
        for (c, v) in u.iter_mut().enumerate() {
            *v = *v * self.half_range[c] + self.center[c];
        }
        Ok(())
    }

    /// Normalize a position vector (the first `dim` channels).
    pub fn normalize_position(&self, p: &[f64]) -> Vec<f64> {
        debug_assert_eq!(p.len(), self.dim);
        p.iter()
            .enumerate()
            .map(|(c, v)| (v - self.center[c]) / self.half_range[c])
            .collect()
    }

    /// Map a normalized position back to world coordinates.
    pub fn denormalize_position(&self, p: &[f64]) -> Vec<f64> {
        debug_assert_eq!(p.len(), self.dim);
        p.iter().enumerate().map(|(c, v)| v * self.half_range[c] + self.center[c]).collect()
    }

    pub fn normalize_time(&self, t: f64) -> f64 {
        let c = self.time_channel();
        (t - self.center[c]) / self.half_range[c]
    }

    pub fn normalize_psi(&self, psi: &[f64]) -> Vec<f64> {
        debug_assert_eq!(psi.len(), self.n_psi);
        psi.iter()
            .enumerate()
            .map(|(i, v)| {
                let c = self.dim + 1 + i;
                (v - self.center[c]) / self.half_range[c]
            })
            .collect()
    }

    /// Trained time range in seconds, inclusive.
    pub fn time_range(&self) -> (f64, f64) {
        let c = self.time_channel();
        (self.center[c] - self.half_range[c], self.center[c] + self.half_range[c])
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.channels() {
            return Err(Error::contract(format!(
                "channel count mismatch: got {len}, expected {}",
                self.channels()
            )));
        }
        Ok(())
    }
}

/// Fit the per-channel affine map sending each channel's observed min/max to
/// -1/+1 exactly.
pub fn fit_normalization(dataset: &TrajectoryDataset) -> Result<NormalizationParams> {
    if dataset.is_empty() {
        return Err(Error::config("cannot fit normalization on an empty dataset"));
    }
    let channels = dataset.dim + 1 + dataset.n_psi;
    let mut lo = vec![f64::INFINITY; channels];
    let mut hi = vec![f64::NEG_INFINITY; channels];

    for (traj, psi) in dataset.trajectories.iter().zip(&dataset.params) {
        for k in 0..traj.len() {
            for (c, v) in traj.position(k).iter().enumerate() {
                lo[c] = lo[c].min(*v);
                hi[c] = hi[c].max(*v);
            }
            let t = traj.times[k];
            lo[dataset.dim] = lo[dataset.dim].min(t);
            hi[dataset.dim] = hi[dataset.dim].max(t);
        }
        for (i, v) in psi.iter().enumerate() {
            let c = dataset.dim + 1 + i;
            lo[c] = lo[c].min(*v);
            hi[c] = hi[c].max(*v);
        }
    }

    let mut center = Vec::with_capacity(channels);
    let mut half_range = Vec::with_capacity(channels);
    for c in 0..channels {
        if hi[c] > lo[c] {
            center.push(0.5 * (hi[c] + lo[c]));
            half_range.push(0.5 * (hi[c] - lo[c]));
        } else {
            center.push(lo[c]);
            half_range.push(1.0);
        }
    }
    Ok(NormalizationParams { center, half_range, dim: dataset.dim, n_psi: dataset.n_psi })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Trajectory;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn two_point_dataset() -> TrajectoryDataset {
        // x range [-20000, 20000], y range [0, 100], t in [0, 100], psi
        // constant 500.
        let t0 = Trajectory::new(vec![0.0, 100.0], vec![-20000.0, 0.0, 20000.0, 100.0], 2).unwrap();
        TrajectoryDataset::new(2, 1, vec![t0], vec![vec![500.0]]).unwrap()
    }

    #[test]
    fn fit_maps_extremes_to_unit_interval() {
        let norm = fit_normalization(&two_point_dataset()).unwrap();
        assert_eq!(norm.center[0], 0.0);
        assert_eq!(norm.half_range[0], 20000.0);
        // Times [0, 100] -> center 50, half range 50.
        assert_eq!(norm.center[2], 50.0);
        assert_eq!(norm.half_range[2], 50.0);
        let mut u = vec![-20000.0, 0.0, 0.0, 500.0];
        norm.normalize(&mut u).unwrap();
        assert_eq!(u[0], -1.0);
        assert_eq!(u[2], -1.0);
    }

    #[test]
    fn degenerate_channel_becomes_constant_zero() {
        let norm = fit_normalization(&two_point_dataset()).unwrap();
        assert_eq!(norm.center[3], 500.0);
        assert_eq!(norm.half_range[3], 1.0);
        let mut u = vec![0.0, 0.0, 0.0, 500.0];
        norm.normalize(&mut u).unwrap();
        assert_eq!(u[3], 0.0);
    }

    #[test]
    fn center_maps_to_zero_and_center_plus_half_range_to_one() {
        let norm = fit_normalization(&two_point_dataset()).unwrap();
        let mut u = norm.center.clone();
        norm.normalize(&mut u).unwrap();
        assert!(u.iter().all(|v| *v == 0.0));
        let mut u: Vec<f64> =
            norm.center.iter().zip(&norm.half_range).map(|(c, h)| c + h).collect();
        norm.normalize(&mut u).unwrap();
        assert!(u.iter().all(|v| *v == 1.0));
    }

    #[test]
    fn empty_dataset_is_a_config_error() {
        let ds = TrajectoryDataset::new(2, 0, vec![], vec![]).unwrap();
        assert!(matches!(fit_normalization(&ds), Err(crate::Error::Config(_))));
    }

    #[test]
    fn length_mismatch_is_a_contract_violation() {
        let norm = fit_normalization(&two_point_dataset()).unwrap();
        let mut u = vec![0.0; 3];
        assert!(matches!(norm.normalize(&mut u), Err(crate::Error::Contract(_))));
    }

    #[test]
    fn round_trip_of_random_vectors() {
        let norm = fit_normalization(&two_point_dataset()).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut worst: f64 = 0.0;
        for _ in 0..1000 {
            // Inputs both inside and far outside the fitted range.
            let u: Vec<f64> = (0..4).map(|_| rng.gen_range(-3e5..3e5)).collect();
            let mut v = u.clone();
            norm.normalize(&mut v).unwrap();
            norm.denormalize(&mut v).unwrap();
            for (a, b) in u.iter().zip(&v) {
                worst = worst.max((a - b).abs() / a.abs().max(1.0));
            }
        }
        assert!(worst < 1e-12, "round-trip error {worst}");
    }

    proptest! {
        #[test]
        fn prop_round_trip_identity(vals in proptest::collection::vec(-1e6f64..1e6, 4)) {
            let norm = fit_normalization(&two_point_dataset()).unwrap();
            let mut v = vals.clone();
            norm.normalize(&mut v).unwrap();
            norm.denormalize(&mut v).unwrap();
            for (a, b) in vals.iter().zip(&v) {
                prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
            }
        }
    }
}
