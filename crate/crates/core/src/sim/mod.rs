//! Monte Carlo training/test-data generators.
//!
//! Two target classes: a constant-speed planar target chaining random turn
//! maneuvers, and a ballistic 3-D target under drag and process noise.
//! Trajectory generation is parallel across trajectories; each trajectory
//! owns an RNG stream derived from (seed, index) so parallel and serial runs
//! produce identical datasets.

mod ballistic;
mod simple;

pub use ballistic::{simulate_ballistic, BallisticConfig};
pub use simple::{
    simulate_deterministic_modes, simulate_from_segments, simulate_simple, ManeuverKind,
    ManeuverSegment, SimpleTargetConfig,
};

use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;

/// Independent RNG stream for one trajectory of one dataset.
pub(crate) fn trajectory_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index.wrapping_add(1));
    rng
}
