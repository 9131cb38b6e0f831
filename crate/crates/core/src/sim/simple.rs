//! Constant-speed planar target with randomly chained turn/straight
//! maneuvers.
//!
//! The target starts at the origin flying northbound. Maneuver segments are
//! drawn until the trajectory duration is covered; the last segment is cut at
//! the total duration. Positions advance with exact circular-arc (or
//! straight-line) updates, so chord lengths obey the closed-form arc geometry
//! to machine precision. Steps that straddle a segment boundary compose the
//! exact partial advances of both segments.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Trajectory, TrajectoryDataset};

use super::trajectory_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManeuverKind {
    Left,
    Right,
    Straight,
}

impl ManeuverKind {
    /// Mirror image about the north axis.
    pub fn mirrored(self) -> Self {
        match self {
            ManeuverKind::Left => ManeuverKind::Right,
            ManeuverKind::Right => ManeuverKind::Left,
            ManeuverKind::Straight => ManeuverKind::Straight,
        }
    }
}

/// One maneuver: kind, duration in seconds, and the lateral acceleration
/// bounding the turn radius (ignored for straight segments).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManeuverSegment {
    pub kind: ManeuverKind,
    pub duration: f64,
    pub lateral_accel: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimpleTargetConfig {
    /// Trajectory duration in seconds.
    pub duration: f64,
    /// Time discretization in seconds.
    pub dt: f64,
    /// Constant target speed in m/s.
    pub speed: f64,
    /// Uniform range for maneuver durations, seconds.
    pub maneuver_duration_range: (f64, f64),
    /// Uniform range for turn lateral acceleration, m/s^2.
    pub lateral_accel_range: (f64, f64),
    pub rng_seed: u64,
}

impl Default for SimpleTargetConfig {
    fn default() -> Self {
        SimpleTargetConfig {
            duration: 100.0,
            dt: 0.1,
            speed: 200.0,
            maneuver_duration_range: (5.0, 50.0),
            lateral_accel_range: (3.0, 20.0),
            rng_seed: 0,
        }
    }
}

impl SimpleTargetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.duration <= 0.0 || self.dt <= 0.0 || self.speed <= 0.0 {
            return Err(Error::config("duration, dt, and speed must be positive"));
        }
        let (dmin, dmax) = self.maneuver_duration_range;
        let (amin, amax) = self.lateral_accel_range;
        if dmin > dmax || amin > amax {
            return Err(Error::config("range minimum exceeds maximum"));
        }
        if dmin <= 0.0 || amin <= 0.0 {
            return Err(Error::config("maneuver durations and accelerations must be positive"));
        }
        Ok(())
    }

    fn step_count(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }
}

/// Planar kinematic state: position (east, north) and course angle from
/// north, positive toward east.
#[derive(Debug, Clone, Copy)]
struct State {
    east: f64,
    north: f64,
    course: f64,
}

/// Advance the state by `tau` seconds within a single maneuver segment,
/// using the exact closed-form arc (or line).
fn advance(state: State, segment: &ManeuverSegment, speed: f64, tau: f64) -> State {
    let (sin0, cos0) = state.course.sin_cos();
    match segment.kind {
        ManeuverKind::Straight => State {
            east: state.east + speed * tau * sin0,
            north: state.north + speed * tau * cos0,
            course: state.course,
        },
        kind => {
            let turn_sign = if kind == ManeuverKind::Right { 1.0 } else { -1.0 };
            let omega = segment.lateral_accel / speed;
            let radius = speed / omega;
            // Turn center sits at 90 degrees toward the inside of the turn.
            let center_east = state.east + turn_sign * radius * cos0;
            let center_north = state.north - turn_sign * radius * sin0;
            let course = state.course + turn_sign * omega * tau;
            let (sin1, cos1) = course.sin_cos();
            State {
                east: center_east - turn_sign * radius * cos1,
                north: center_north + turn_sign * radius * sin1,
                course,
            }
        }
    }
}

/// Run the exact stepper over a fixed maneuver chain.
///
/// The chain must cover `config.duration` (the final segment is cut there).
pub fn simulate_from_segments(
    config: &SimpleTargetConfig,
    segments: &[ManeuverSegment],
) -> Result<Trajectory> {
    config.validate()?;
    let total: f64 = segments.iter().map(|s| s.duration).sum();
    if total < config.duration - 1e-9 {
        return Err(Error::config(format!(
            "maneuver chain covers {total} s of a {} s trajectory",
            config.duration
        )));
    }
    let steps = config.step_count();
    let mut times = Vec::with_capacity(steps + 1);
    let mut positions = Vec::with_capacity(2 * (steps + 1));
    let mut state = State { east: 0.0, north: 0.0, course: 0.0 };
    times.push(0.0);
    positions.extend_from_slice(&[0.0, 0.0]);

    let mut seg = 0usize;
    let mut into_segment = 0.0;
    for k in 1..=steps {
        let mut remaining = config.dt;
        // Compose exact advances across any segment boundaries inside this
        // step.
        while remaining > 0.0 {
            let left_in_segment = segments[seg].duration - into_segment;
            if left_in_segment > remaining {
                state = advance(state, &segments[seg], config.speed, remaining);
                into_segment += remaining;
                remaining = 0.0;
            } else {
                state = advance(state, &segments[seg], config.speed, left_in_segment);
                remaining -= left_in_segment;
                into_segment = 0.0;
                if seg + 1 < segments.len() {
                    seg += 1;
                } else {
                    // Chain exhausted by rounding at the trajectory end.
                    state = advance(state, &segments[seg], config.speed, remaining);
                    remaining = 0.0;
                }
            }
        }
        times.push(k as f64 * config.dt);
        positions.extend_from_slice(&[state.east, state.north]);
    }
    Trajectory::new(times, positions, 2)
}

fn draw_chain(config: &SimpleTargetConfig, rng: &mut impl Rng) -> Vec<ManeuverSegment> {
    let mut segments = Vec::new();
    let mut covered = 0.0;
    while covered < config.duration {
        let kind = match rng.gen_range(0..3u8) {
            0 => ManeuverKind::Left,
            1 => ManeuverKind::Right,
            _ => ManeuverKind::Straight,
        };
        let (dmin, dmax) = config.maneuver_duration_range;
        let duration = rng.gen_range(dmin..=dmax);
        let (amin, amax) = config.lateral_accel_range;
        let lateral_accel = rng.gen_range(amin..=amax);
        segments.push(ManeuverSegment { kind, duration, lateral_accel });
        covered += duration;
    }
    segments
}

/// Generate `n` random maneuvering-target trajectories (psi is empty).
pub fn simulate_simple(config: &SimpleTargetConfig, n: usize) -> Result<TrajectoryDataset> {
    config.validate()?;
    if n == 0 {
        return Err(Error::config("at least one trajectory must be requested"));
    }
    let trajectories: Vec<Trajectory> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = trajectory_rng(config.rng_seed, i as u64);
            let chain = draw_chain(config, &mut rng);
            simulate_from_segments(config, &chain)
        })
        .collect::<Result<_>>()?;
    let params = vec![vec![]; n];
    let mut ds = TrajectoryDataset::new(2, 0, trajectories, params)?;
    ds.meta.insert("scenario".into(), "simple".into());
    ds.meta.insert("seed".into(), config.rng_seed.to_string());
    Ok(ds)
}

/// Lateral acceleration of the fixed-maneuver modes.
pub const DETERMINISTIC_MODE_ACCEL: f64 = 3.0;

/// Generate `n` trajectories that each hold a single maneuver (left turn,
/// right turn, or straight, drawn uniformly) for the whole duration, with a
/// fixed lateral acceleration of 3 m/s^2.
pub fn simulate_deterministic_modes(
    config: &SimpleTargetConfig,
    n: usize,
) -> Result<TrajectoryDataset> {
    config.validate()?;
    if n == 0 {
        return Err(Error::config("at least one trajectory must be requested"));
    }
    let trajectories: Vec<Trajectory> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = trajectory_rng(config.rng_seed, i as u64);
            let kind = match rng.gen_range(0..3u8) {
                0 => ManeuverKind::Left,
                1 => ManeuverKind::Right,
                _ => ManeuverKind::Straight,
            };
            let segment = ManeuverSegment {
                kind,
                duration: config.duration + config.dt,
                lateral_accel: DETERMINISTIC_MODE_ACCEL,
            };
            simulate_from_segments(config, &[segment])
        })
        .collect::<Result<_>>()?;
    let params = vec![vec![]; n];
    let mut ds = TrajectoryDataset::new(2, 0, trajectories, params)?;
    ds.meta.insert("scenario".into(), "deterministic".into());
    ds.meta.insert("seed".into(), config.rng_seed.to_string());
    Ok(ds)
}

/// World-frame trajectory of one deterministic mode at time `t`, used as an
/// analytic reference in tests.
#[cfg(test)]
pub(crate) fn deterministic_mode_position(kind: ManeuverKind, speed: f64, t: f64) -> [f64; 2] {
    let segment =
        ManeuverSegment { kind, duration: t + 1.0, lateral_accel: DETERMINISTIC_MODE_ACCEL };
    let state = advance(State { east: 0.0, north: 0.0, course: 0.0 }, &segment, speed, t);
    [state.east, state.north]
}
