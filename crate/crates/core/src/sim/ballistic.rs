//! Ballistic 3-D target under drag and per-step acceleration noise.
//!
//! State integrates with explicit Euler in the north-east-down frame:
//! position updates with the pre-update velocity, then velocity updates with
//! gravity, drag `-rho / (2 BC) * |v| * v`, and a disturbance drawn i.i.d.
//! per step from `N(0, Sigma)` held constant over the step. The per-trajectory
//! ballistic coefficient is drawn uniformly and stored as the single psi
//! channel.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Trajectory, TrajectoryDataset};

use super::trajectory_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallisticConfig {
    /// Trajectory duration in seconds.
    pub duration: f64,
    /// Time discretization in seconds.
    pub dt: f64,
    /// Air density in kg/m^3.
    pub air_density: f64,
    /// Uniform range for the ballistic coefficient, kg/m^2.
    pub bc_range: (f64, f64),
    /// Initial position (north, east, down) in meters.
    pub initial_position: [f64; 3],
    /// Initial velocity in m/s.
    pub initial_velocity: [f64; 3],
    /// Diagonal of the disturbance covariance, m^2/s^4.
    pub disturbance_cov: [f64; 3],
    /// Gravitational acceleration, m/s^2 (positive down).
    pub gravity: f64,
    pub rng_seed: u64,
}

impl Default for BallisticConfig {
    fn default() -> Self {
        BallisticConfig {
            duration: 100.0,
            dt: 0.1,
            air_density: 1.225,
            bc_range: (200.0, 800.0),
            initial_position: [0.0, 0.0, -1000.0],
            initial_velocity: [100.0, 0.0, 0.0],
            disturbance_cov: [1.0, 1.0, 1.0],
            gravity: 9.81,
            rng_seed: 0,
        }
    }
}

impl BallisticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.duration <= 0.0 || self.dt <= 0.0 {
            return Err(Error::config("duration and dt must be positive"));
        }
        if self.bc_range.0 <= 0.0 || self.bc_range.1 < self.bc_range.0 {
            return Err(Error::config("ballistic coefficient range must be positive and ordered"));
        }
        if self.disturbance_cov.iter().any(|v| *v < 0.0) {
            return Err(Error::config("disturbance covariance entries must be non-negative"));
        }
        Ok(())
    }
}

/// One Euler step: `x += v dt`, then `v += (g + d + w) dt`.
pub fn euler_step(
    position: &mut [f64; 3],
    velocity: &mut [f64; 3],
    bc: f64,
    config: &BallisticConfig,
    disturbance: [f64; 3],
) {
    for (p, v) in position.iter_mut().zip(velocity.iter()) {
        *p += v * config.dt;
    }
    let speed = (velocity[0] * velocity[0] + velocity[1] * velocity[1] + velocity[2] * velocity[2])
        .sqrt();
    let drag_coeff = -config.air_density / (2.0 * bc) * speed;
    let gravity = [0.0, 0.0, config.gravity];
    for i in 0..3 {
        let accel = gravity[i] + drag_coeff * velocity[i] + disturbance[i];
        velocity[i] += accel * config.dt;
    }
}

fn simulate_one(config: &BallisticConfig, index: usize) -> Result<(Trajectory, f64)> {
    let mut rng = trajectory_rng(config.rng_seed, index as u64);
    let (bc_lo, bc_hi) = config.bc_range;
    let bc = if bc_hi > bc_lo { rng.gen_range(bc_lo..=bc_hi) } else { bc_lo };
    let noise_std = [
        config.disturbance_cov[0].sqrt(),
        config.disturbance_cov[1].sqrt(),
        config.disturbance_cov[2].sqrt(),
    ];
    let noisy = noise_std.iter().any(|s| *s > 0.0);

    let steps = (config.duration / config.dt).round() as usize;
    let mut times = Vec::with_capacity(steps + 1);
    let mut positions = Vec::with_capacity(3 * (steps + 1));
    let mut position = config.initial_position;
    let mut velocity = config.initial_velocity;
    times.push(0.0);
    positions.extend_from_slice(&position);

    for k in 1..=steps {
        let disturbance = if noisy {
            let d: [f64; 3] = [
                StandardNormal.sample(&mut rng),
                StandardNormal.sample(&mut rng),
                StandardNormal.sample(&mut rng),
            ];
            [d[0] * noise_std[0], d[1] * noise_std[1], d[2] * noise_std[2]]
        } else {
            [0.0; 3]
        };
        euler_step(&mut position, &mut velocity, bc, config, disturbance);
        if velocity.iter().any(|v| !v.is_finite()) || position.iter().any(|p| !p.is_finite()) {
            return Err(Error::numeric(format!(
                "ballistic trajectory {index} diverged at step {k}"
            )));
        }
        times.push(k as f64 * config.dt);
        positions.extend_from_slice(&position);
    }
    Ok((Trajectory::new(times, positions, 3)?, bc))
}

/// Generate `n` ballistic trajectories; psi holds the per-trajectory
/// ballistic coefficient.
pub fn simulate_ballistic(config: &BallisticConfig, n: usize) -> Result<TrajectoryDataset> {
    config.validate()?;
    if n == 0 {
        return Err(Error::config("at least one trajectory must be requested"));
    }
    let results: Vec<(Trajectory, f64)> =
        (0..n).into_par_iter().map(|i| simulate_one(config, i)).collect::<Result<_>>()?;
    let (trajectories, bcs): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let params = bcs.into_iter().map(|bc| vec![bc]).collect();
    let mut ds = TrajectoryDataset::new(3, 1, trajectories, params)?;
    ds.meta.insert("scenario".into(), "ballistic".into());
    ds.meta.insert("seed".into(), config.rng_seed.to_string());
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn noiseless(bc: f64) -> BallisticConfig {
        BallisticConfig {
            bc_range: (bc, bc),
            disturbance_cov: [0.0, 0.0, 0.0],
            ..BallisticConfig::default()
        }
    }

    #[test]
    fn worked_single_euler_step() {
        let config = noiseless(500.0);
        let mut position = [0.0, 0.0, -1000.0];
        let mut velocity = [100.0, 0.0, 0.0];
        euler_step(&mut position, &mut velocity, 500.0, &config, [0.0; 3]);
        assert_abs_diff_eq!(position[0], 10.0, epsilon = 1e-12);
        assert_abs_diff_eq!(position[1], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(position[2], -1000.0, epsilon = 1e-12);
        // Drag decelerates north: 0.001225 * 100 * 100 = 12.25 m/s^2.
        assert_abs_diff_eq!(velocity[0], 98.775, epsilon = 1e-9);
        assert_abs_diff_eq!(velocity[1], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(velocity[2], 0.981, epsilon = 1e-12);
    }

    #[test]
    fn degenerate_bc_and_zero_noise_make_identical_trajectories() {
        let ds = simulate_ballistic(&noiseless(500.0), 4).unwrap();
        for t in &ds.trajectories[1..] {
            assert_eq!(*t, ds.trajectories[0]);
        }
        assert!(ds.params.iter().all(|p| p == &vec![500.0]));
    }

    #[test]
    fn noiseless_simulation_matches_independent_recurrence() {
        // Transcription of the discrete update used as an oracle.
        let config = noiseless(500.0);
        let ds = simulate_ballistic(&config, 1).unwrap();
        let traj = &ds.trajectories[0];
        let mut x = [0.0, 0.0, -1000.0];
        let mut v = [100.0, 0.0, 0.0];
        for k in 1..=1000usize {
            for i in 0..3 {
                x[i] += v[i] * config.dt;
            }
            let speed = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            let g = [0.0, 0.0, 9.81];
            let mut nv = [0.0; 3];
            for i in 0..3 {
                let drag = -config.air_density / (2.0 * 500.0) * speed * v[i];
                nv[i] = v[i] + (g[i] + drag) * config.dt;
            }
            v = nv;
            let p = traj.position(k);
            for i in 0..3 {
                assert!(
                    (p[i] - x[i]).abs() <= 1e-12 * (1.0 + x[i].abs()),
                    "step {k} axis {i}: {} vs {}",
                    p[i],
                    x[i]
                );
            }
        }
    }

    #[test]
    fn sample_cloud_widens_over_time() {
        let config = BallisticConfig { rng_seed: 7, ..BallisticConfig::default() };
        let ds = simulate_ballistic(&config, 200).unwrap();
        let spread = |t: f64| -> f64 {
            let k = (t / config.dt).round() as usize;
            let pts: Vec<&[f64]> = ds.trajectories.iter().map(|tr| tr.position(k)).collect();
            let mut mean = [0.0f64; 3];
            for p in &pts {
                for i in 0..3 {
                    mean[i] += p[i];
                }
            }
            for m in &mut mean {
                *m /= pts.len() as f64;
            }
            let mut trace = 0.0;
            for p in &pts {
                for i in 0..3 {
                    trace += (p[i] - mean[i]).powi(2);
                }
            }
            trace / pts.len() as f64
        };
        let (s30, s60, s90) = (spread(30.0), spread(60.0), spread(90.0));
        assert!(s30 < s60 && s60 < s90, "trace sequence {s30} {s60} {s90}");
    }

    #[test]
    fn reproducible_given_seed() {
        let config = BallisticConfig { rng_seed: 3, ..BallisticConfig::default() };
        assert_eq!(simulate_ballistic(&config, 5).unwrap(), simulate_ballistic(&config, 5).unwrap());
    }
}
