use trajflow_core::flow::{CnfModel, SplineConfig};
use trajflow_core::norm::NormalizationParams;
use trajflow_core::predict::{draw_raw_samples, PredictionRequest};
use trajflow_core::sim::{simulate_ballistic, BallisticConfig};
use trajflow_core::Pose;

#[test]
fn timing_probe_ballistic() {
    let norm = NormalizationParams {
        center: vec![5000.0, 0.0, -500.0, 50.0, 500.0],
        half_range: vec![5000.0, 300.0, 600.0, 50.0, 300.0],
        dim: 3, n_psi: 1,
    };
    let model = CnfModel::new_identity(3, 1, 4, SplineConfig::default(), &[32, 32], norm, 3).unwrap();
    let request = PredictionRequest::new(
        vec![(Pose::new(vec![0.0, 0.0, -1000.0], 0.0), vec![500.0])], vec![100.0], 10_000, 5);
    let mut cnf = f64::INFINITY;
    for _ in 0..5 {
        let started = std::time::Instant::now();
        let s = draw_raw_samples(&model, &request).unwrap();
        std::hint::black_box(s.valid_count());
        cnf = cnf.min(started.elapsed().as_secs_f64());
    }
    let sim = BallisticConfig { rng_seed: 9, ..Default::default() };
    let mut mc = f64::INFINITY;
    for _ in 0..3 {
        let started = std::time::Instant::now();
        let ds = simulate_ballistic(&sim, 10_000).unwrap();
        std::hint::black_box(ds.point_count());
        mc = mc.min(started.elapsed().as_secs_f64());
    }
    eprintln!("ballistic MC 1e4: {mc:.3}s; CNF d=3 1e4 at t=100: {cnf:.4}s; ratio {:.1}x", mc / cnf);
}
