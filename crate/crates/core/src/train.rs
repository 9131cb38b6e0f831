//! Dataset-to-model training: flattening trajectories into normalized
//! `(x, t, psi)` points, noise injection, train/validation split, minibatch
//! NLL minimization with Adam, and best-validation model selection.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Adam, Tensor};
use crate::error::{Error, Result};
use crate::flow::CnfModel;
use crate::norm::NormalizationParams;
use crate::types::TrajectoryDataset;

/// Rows per parallel gradient chunk. Chunk boundaries are fixed so parallel
/// and serial runs reduce in the same order.
const GRAD_CHUNK: usize = 128;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub train_fraction: f64,
    /// Standard deviation of the Gaussian noise injected into normalized
    /// position channels, re-drawn for every batch.
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 1000,
            batch_size: 1000,
            learning_rate: 0.003,
            train_fraction: 0.8,
            noise_std: 0.01,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Ok(());
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be positive"));
        }
        if !(0.0..1.0).contains(&self.train_fraction) || self.train_fraction == 0.0 {
            return Err(Error::config("train fraction must be in (0, 1)"));
        }
        if self.noise_std < 0.0 {
            return Err(Error::config("noise standard deviation must be non-negative"));
        }
        if self.learning_rate <= 0.0 {
            return Err(Error::config("learning rate must be positive"));
        }
        Ok(())
    }
}

/// Normalized training points: one row per (trajectory, time step).
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub dim: usize,
    pub n_psi: usize,
    pub xs: Tensor,
    pub ts: Vec<f64>,
    pub psis: Tensor,
}

impl TrainingSet {
    pub fn len(&self) -> usize {
        self.ts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ts.is_empty()
    }

    fn gather(&self, indices: &[usize]) -> (Tensor, Vec<f64>, Tensor) {
        (
            self.xs.gather_rows(indices),
            indices.iter().map(|&i| self.ts[i]).collect(),
            self.psis.gather_rows(indices),
        )
    }
}

/// Flatten a dataset into normalized `(x, t, psi)` rows. The trajectories
/// are already in the model frame (starting at the origin flying
/// northbound), so no pose removal happens here.
pub fn build_training_points(
    dataset: &TrajectoryDataset,
    norm: &NormalizationParams,
) -> TrainingSet {
    let n = dataset.point_count();
    let dim = dataset.dim;
    let mut xs = Tensor::zeros(n, dim);
    let mut ts = Vec::with_capacity(n);
    let mut psis = Tensor::zeros(n, dataset.n_psi);
    let mut row = 0;
    for (traj, psi) in dataset.trajectories.iter().zip(&dataset.params) {
        let psi_norm = norm.normalize_psi(psi);
        for k in 0..traj.len() {
            xs.row_mut(row).copy_from_slice(&norm.normalize_position(traj.position(k)));
            ts.push(norm.normalize_time(traj.times[k]));
            psis.row_mut(row).copy_from_slice(&psi_norm);
            row += 1;
        }
    }
    TrainingSet { dim, n_psi: dataset.n_psi, xs, ts, psis }
}

/// Keep a uniform random fraction of the points (seeded, order-preserving).
pub fn subsample(set: &TrainingSet, fraction: f64, seed: u64) -> TrainingSet {
    if fraction >= 1.0 {
        return set.clone();
    }
    let keep = ((set.len() as f64 * fraction).round() as usize).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices: Vec<usize> = (0..set.len()).collect();
    indices.shuffle(&mut rng);
    indices.truncate(keep);
    indices.sort_unstable();
    let (xs, ts, psis) = set.gather(&indices);
    TrainingSet { dim: set.dim, n_psi: set.n_psi, xs, ts, psis }
}

/// Per-epoch loss curves and the selected model's held-out NLL.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean noise-injected NLL over each epoch's minibatches.
    pub train_nll: Vec<f64>,
    /// Noise-free NLL on the validation split after each epoch.
    pub val_nll: Vec<f64>,
    pub wall_time_s: f64,
    /// Validation NLL of the returned (best-validation) model.
    pub final_test_nll: f64,
    pub best_epoch: usize,
}

/// Mean NLL of the model on a slice of the set, without noise.
pub fn mean_nll(model: &CnfModel, set: &TrainingSet, indices: &[usize]) -> Result<f64> {
    if indices.is_empty() {
        return Ok(f64::NAN);
    }
    let sums: Vec<(f64, usize)> = indices
        .par_chunks(2048)
        .map(|chunk| {
            let (xs, ts, psis) = set.gather(chunk);
            let lp = model.log_density_batch(&xs, &ts, &psis)?;
            Ok((lp.iter().sum::<f64>(), chunk.len()))
        })
        .collect::<Result<_>>()?;
    let total: f64 = sums.iter().map(|(s, _)| s).sum();
    Ok(-total / indices.len() as f64)
}

/// Batch loss and flat gradient, chunked for deterministic parallelism.
fn batch_gradients(
    model: &CnfModel,
    xs: &Tensor,
    ts: &[f64],
    psis: &Tensor,
) -> Result<(f64, Vec<f64>)> {
    let n = xs.rows;
    if n <= GRAD_CHUNK {
        return model.nll_and_gradients(xs, ts, psis);
    }
    let ranges: Vec<(usize, usize)> =
        (0..n).step_by(GRAD_CHUNK).map(|s| (s, (s + GRAD_CHUNK).min(n))).collect();
    let parts: Vec<(f64, Vec<f64>, usize)> = ranges
        .par_iter()
        .map(|&(s, e)| {
            let (loss, grads) = model.nll_and_gradients(
                &xs.row_range(s, e),
                &ts[s..e],
                &psis.row_range(s, e),
            )?;
            Ok((loss, grads, e - s))
        })
        .collect::<Result<_>>()?;
    let mut loss = 0.0;
    let mut grads = vec![0.0; model.param_count()];
    for (l, g, len) in &parts {
        let w = *len as f64 / n as f64;
        loss += l * w;
        for (acc, gv) in grads.iter_mut().zip(g) {
            *acc += gv * w;
        }
    }
    Ok((loss, grads))
}

/// Minimize the negative log-likelihood and return the best-validation
/// model. `epoch_hook` runs after every epoch with the current model.
pub fn train_with_hook(
    set: &TrainingSet,
    config: &TrainConfig,
    model_init: CnfModel,
    mut epoch_hook: impl FnMut(usize, &CnfModel),
) -> Result<(CnfModel, TrainReport)> {
    config.validate()?;
    if set.is_empty() {
        return Err(Error::config("training set is empty"));
    }
    let started = std::time::Instant::now();
    let mut model = model_init;
    if config.epochs == 0 {
        let report = TrainReport {
            train_nll: vec![],
            val_nll: vec![],
            wall_time_s: started.elapsed().as_secs_f64(),
            final_test_nll: f64::NAN,
            best_epoch: 0,
        };
        return Ok((model, report));
    }
    if set.len() < 2 {
        return Err(Error::config("training needs at least two points for a split"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut indices: Vec<usize> = (0..set.len()).collect();
    indices.shuffle(&mut rng);
    let n_train =
        ((set.len() as f64 * config.train_fraction).floor() as usize).clamp(1, set.len() - 1);
    let (train_idx, val_idx) = indices.split_at(n_train);
    let mut train_idx = train_idx.to_vec();
    let val_idx = val_idx.to_vec();

    let mut params = model.flatten_params();
    let mut adam = Adam::new(config.learning_rate, params.len());
    let mut report = TrainReport {
        train_nll: Vec::with_capacity(config.epochs),
        val_nll: Vec::with_capacity(config.epochs),
        wall_time_s: 0.0,
        final_test_nll: f64::NAN,
        best_epoch: 0,
    };
    let mut best = (f64::INFINITY, params.clone(), 0usize);

    for epoch in 0..config.epochs {
        train_idx.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (batch_no, batch) in train_idx.chunks(config.batch_size).enumerate() {
            let (mut xs, ts, psis) = set.gather(batch);
            if config.noise_std > 0.0 {
                for v in &mut xs.data {
                    let noise: f64 = StandardNormal.sample(&mut rng);
                    *v += config.noise_std * noise;
                }
            }
            let (loss, grads) = batch_gradients(&model, &xs, &ts, &psis)?;
            if !loss.is_finite() {
                return Err(Error::numeric(format!(
                    "loss became non-finite at epoch {epoch}, batch {batch_no}"
                )));
            }
            adam.step(&mut params, &grads);
            model.set_params(&params);
            epoch_loss += loss * batch.len() as f64;
        }
        report.train_nll.push(epoch_loss / train_idx.len() as f64);
        let val = mean_nll(&model, set, &val_idx)?;
        report.val_nll.push(val);
        if val < best.0 {
            best = (val, params.clone(), epoch);
        }
        epoch_hook(epoch, &model);
    }

    model.set_params(&best.1);
    report.final_test_nll = best.0;
    report.best_epoch = best.2;
    report.wall_time_s = started.elapsed().as_secs_f64();
    Ok((model, report))
}

/// [`train_with_hook`] without a hook.
pub fn train(
    set: &TrainingSet,
    config: &TrainConfig,
    model_init: CnfModel,
) -> Result<(CnfModel, TrainReport)> {
    train_with_hook(set, config, model_init, |_, _| {})
}
