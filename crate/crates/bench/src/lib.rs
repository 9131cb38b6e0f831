//! Shared fixtures for the pipeline benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use trajflow_core::flow::{CnfModel, SplineConfig};
use trajflow_core::norm::NormalizationParams;

/// A 4-layer model with randomized conditioner weights at fan-in scale, so
/// benchmark numbers reflect trained-model behavior rather than the
/// identity fast path.
pub fn bench_model(dim: usize, n_psi: usize) -> CnfModel {
    let channels = dim + 1 + n_psi;
    let mut center = vec![0.0; channels];
    center[dim] = 50.0;
    let mut half_range = vec![1.0; channels];
    half_range[dim] = 50.0;
    let norm = NormalizationParams { center, half_range, dim, n_psi };
    let mut model =
        CnfModel::new_identity(dim, n_psi, 4, SplineConfig::default(), &[32, 32], norm, 42)
            .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    for layer in &mut model.layers {
        for net in &mut layer.nets {
            for l in 0..net.weights.len() {
                let s = 1.0 / (net.sizes[l] as f64).sqrt();
                for v in &mut net.weights[l] {
                    *v += rng.gen_range(-s..s);
                }
            }
        }
    }
    model
}
