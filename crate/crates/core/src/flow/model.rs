//! The conditional normalizing flow: a stack of masked-autoregressive layers
//! whose per-dimension spline parameters come from conditioner MLPs fed with
//! the preceding dimensions (in layer order) plus normalized time and
//! dynamics parameters.
//!
//! Convention: `forward` is the density direction (data to base), `inverse`
//! the sampling direction (base to data). Within a layer the conditioner for
//! dimension `j` sees the layer's *input* at the preceding positions, so the
//! forward Jacobian is triangular and the inverse recovers dimensions
//! sequentially.

use serde::{Deserialize, Serialize};

use crate::autodiff::{MlpParams, Tensor};
use crate::error::{Error, Result};
use crate::norm::NormalizationParams;

use super::spline::{self, SplineConfig, SplineParams};

pub const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// One masked-autoregressive layer: a dimension order and one conditioner
/// net per dimension. Net `j` consumes `j` preceding dimensions plus time
/// plus psi and emits the raw spline parameters for dimension `order[j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowLayer {
    pub order: Vec<usize>,
    pub nets: Vec<MlpParams>,
}

/// The full conditional flow, including the normalization fitted on its
/// training data and the seed it was initialized/trained with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnfModel {
    pub dim: usize,
    pub n_psi: usize,
    pub spline: SplineConfig,
    pub layers: Vec<FlowLayer>,
    pub norm: NormalizationParams,
    pub seed: u64,
}

impl CnfModel {
    /// Build a model that is exactly the identity map at initialization:
    /// hidden layers get He-uniform weights, output layers are zeroed, so
    /// every spline starts as the identity.
    pub fn new_identity(
        dim: usize,
        n_psi: usize,
        n_layers: usize,
        spline: SplineConfig,
        hidden: &[usize],
        norm: NormalizationParams,
        seed: u64,
    ) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::config(format!("flow dimension must be 2 or 3, got {dim}")));
        }
        if spline.bins < 2 || spline.tail_bound <= 0.0 {
            return Err(Error::config("spline needs at least 2 bins and a positive tail bound"));
        }
        if norm.dim != dim || norm.n_psi != n_psi {
            return Err(Error::contract("normalization channel layout does not match the model"));
        }
        let mut rng = {
            use rand_chacha::rand_core::SeedableRng;
            rand_chacha::ChaCha8Rng::seed_from_u64(seed)
        };
        let mut layers = Vec::with_capacity(n_layers);
        for l in 0..n_layers {
            // Alternate natural/reversed orders so every dimension
            // eventually conditions on every other across the stack.
            let order: Vec<usize> =
                if l % 2 == 0 { (0..dim).collect() } else { (0..dim).rev().collect() };
            let mut nets = Vec::with_capacity(dim);
            for j in 0..dim {
                let mut sizes = vec![j + 1 + n_psi];
                sizes.extend_from_slice(hidden);
                sizes.push(spline.raw_param_count());
                nets.push(MlpParams::he_uniform_zero_output(&sizes, &mut rng));
            }
            layers.push(FlowLayer { order, nets });
        }
        Ok(CnfModel { dim, n_psi, spline, layers, norm, seed })
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .flat_map(|l| l.nets.iter())
            .map(MlpParams::param_count)
            .sum()
    }

    /// All conditioner parameters in canonical order (layers, then nets,
    /// then per net: weight matrix and bias of each layer).
    pub fn flatten_params(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            for net in &layer.nets {
                for l in 0..net.layer_count() {
                    flat.extend_from_slice(&net.weights[l]);
                    flat.extend_from_slice(&net.biases[l]);
                }
            }
        }
        flat
    }

    /// Inverse of [`flatten_params`](Self::flatten_params).
    pub fn set_params(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.param_count(), "flat parameter length mismatch");
        let mut at = 0;
        for layer in &mut self.layers {
            for net in &mut layer.nets {
                for l in 0..net.weights.len() {
                    let wlen = net.weights[l].len();
                    net.weights[l].copy_from_slice(&flat[at..at + wlen]);
                    at += wlen;
                    let blen = net.biases[l].len();
                    net.biases[l].copy_from_slice(&flat[at..at + blen]);
                    at += blen;
                }
            }
        }
    }

    fn check_conditioning(&self, ts: &[f64], psis: &Tensor, n: usize) -> Result<()> {
        if ts.len() != n || psis.rows != n || psis.cols != self.n_psi {
            return Err(Error::contract(format!(
                "conditioning shapes: {} times and {}x{} psi for a batch of {n}",
                ts.len(),
                psis.rows,
                psis.cols
            )));
        }
        Ok(())
    }

    /// Whether every row shares one (t, psi). When it does, the first
    /// dimension's conditioner (which sees only t and psi) is constant over
    /// the batch and is evaluated once.
    fn constant_conditioning(ts: &[f64], psis: &Tensor) -> bool {
        ts.windows(2).all(|w| w[0] == w[1])
            && (psis.cols == 0 || (1..psis.rows).all(|r| psis.row(r) == psis.row(0)))
    }

    /// Raw conditioner outputs for net `j` of a layer: one row per batch
    /// row, or a single broadcast row when the inputs are constant.
    fn conditioner_raw(
        &self,
        layer: &FlowLayer,
        j: usize,
        u: &[Vec<f64>],
        ts: &[f64],
        psis: &Tensor,
        shared_conditioning: bool,
    ) -> Tensor {
        if j == 0 && shared_conditioning && ts.len() > 1 {
            let mut row = Vec::with_capacity(1 + self.n_psi);
            row.push(ts[0]);
            row.extend_from_slice(psis.row(0));
            let input = Tensor::from_vec(1, row.len(), row);
            return layer.nets[0].forward_batch(&input);
        }
        let input = self.conditioner_input(u, &layer.order, j, ts, psis);
        layer.nets[j].forward_batch(&input)
    }

    /// Conditioner input matrix for net `j` of a layer: the layer-input
    /// values at the first `j` positions of `order`, then time, then psi.
    fn conditioner_input(
        &self,
        u: &[Vec<f64>],
        order: &[usize],
        j: usize,
        ts: &[f64],
        psis: &Tensor,
    ) -> Tensor {
        let n = ts.len();
        let cols = j + 1 + self.n_psi;
        let mut input = Tensor::zeros(n, cols);
        for r in 0..n {
            let row = input.row_mut(r);
            for (c, &dim_idx) in order[..j].iter().enumerate() {
                row[c] = u[dim_idx][r];
            }
            row[j] = ts[r];
            row[j + 1..].copy_from_slice(psis.row(r));
        }
        input
    }

    /// Density-direction map for a batch: `x` rows to base-space rows plus
    /// the accumulated log-determinant per row.
    pub fn forward_batch(&self, xs: &Tensor, ts: &[f64], psis: &Tensor) -> Result<(Tensor, Vec<f64>)> {
        let n = xs.rows;
        if xs.cols != self.dim {
            return Err(Error::contract(format!("input has {} columns, model dim {}", xs.cols, self.dim)));
        }
        self.check_conditioning(ts, psis, n)?;
        if xs.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::contract("non-finite input to flow forward"));
        }
        let mut u: Vec<Vec<f64>> =
            (0..self.dim).map(|j| (0..n).map(|r| xs.get(r, j)).collect()).collect();
        let mut logdet = vec![0.0; n];
        let tail = self.spline.tail_bound;
        let shared = Self::constant_conditioning(ts, psis);
        let mut scratch = SplineParams::identity(&self.spline);
        for layer in &self.layers {
            let mut next = u.clone();
            for j in 0..self.dim {
                let dim_idx = layer.order[j];
                let raw = self.conditioner_raw(layer, j, &u, ts, psis, shared);
                for r in 0..n {
                    if raw.rows > 1 || r == 0 {
                        spline::constrain_into(
                            raw.row(if raw.rows > 1 { r } else { 0 }),
                            &self.spline,
                            &mut scratch.widths,
                            &mut scratch.heights,
                            &mut scratch.interior_derivs,
                        );
                    }
                    let (y, ld) = spline::forward(u[dim_idx][r], &scratch, tail);
                    next[dim_idx][r] = y;
                    logdet[r] += ld;
                }
            }
            u = next;
        }
        let mut z = Tensor::zeros(n, self.dim);
        for r in 0..n {
            for j in 0..self.dim {
                z.data[r * self.dim + j] = u[j][r];
            }
        }
        Ok((z, logdet))
    }

    /// Sampling-direction map for a batch of base-space rows.
    pub fn inverse_batch(&self, zs: &Tensor, ts: &[f64], psis: &Tensor) -> Result<Tensor> {
        let n = zs.rows;
        if zs.cols != self.dim {
            return Err(Error::contract(format!("input has {} columns, model dim {}", zs.cols, self.dim)));
        }
        self.check_conditioning(ts, psis, n)?;
        if zs.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::contract("non-finite input to flow inverse"));
        }
        let mut v: Vec<Vec<f64>> =
            (0..self.dim).map(|j| (0..n).map(|r| zs.get(r, j)).collect()).collect();
        let tail = self.spline.tail_bound;
        let shared = Self::constant_conditioning(ts, psis);
        let mut scratch = SplineParams::identity(&self.spline);
        for layer in self.layers.iter().rev() {
            let mut u: Vec<Vec<f64>> = vec![vec![0.0; n]; self.dim];
            for j in 0..self.dim {
                let dim_idx = layer.order[j];
                // Conditioner inputs are the already-recovered preceding
                // dimensions of this layer.
                let raw = self.conditioner_raw(layer, j, &u, ts, psis, shared);
                for r in 0..n {
                    if raw.rows > 1 || r == 0 {
                        spline::constrain_into(
                            raw.row(if raw.rows > 1 { r } else { 0 }),
                            &self.spline,
                            &mut scratch.widths,
                            &mut scratch.heights,
                            &mut scratch.interior_derivs,
                        );
                    }
                    u[dim_idx][r] = spline::inverse(v[dim_idx][r], &scratch, tail);
                }
            }
            v = u;
        }
        let mut x = Tensor::zeros(n, self.dim);
        for r in 0..n {
            for j in 0..self.dim {
                x.data[r * self.dim + j] = v[j][r];
            }
        }
        Ok(x)
    }

    /// Exact log density of normalized positions under the change of
    /// variables through the flow.
    pub fn log_density_batch(&self, xs: &Tensor, ts: &[f64], psis: &Tensor) -> Result<Vec<f64>> {
        let (z, logdet) = self.forward_batch(xs, ts, psis)?;
        let d = self.dim as f64;
        Ok((0..xs.rows)
            .map(|r| {
                let sq: f64 = z.row(r).iter().map(|v| v * v).sum();
                -0.5 * d * LN_2PI - 0.5 * sq + logdet[r]
            })
            .collect())
    }

    /// Single-point density-direction map; returns `(z, logdet)`.
    pub fn forward(&self, x: &[f64], t_norm: f64, psi_norm: &[f64]) -> Result<(Vec<f64>, f64)> {
        let xs = Tensor::from_vec(1, self.dim, x.to_vec());
        let psis = Tensor::from_vec(1, self.n_psi, psi_norm.to_vec());
        let (z, ld) = self.forward_batch(&xs, &[t_norm], &psis)?;
        Ok((z.data, ld[0]))
    }

    /// Single-point sampling-direction map.
    pub fn inverse(&self, z: &[f64], t_norm: f64, psi_norm: &[f64]) -> Result<Vec<f64>> {
        let zs = Tensor::from_vec(1, self.dim, z.to_vec());
        let psis = Tensor::from_vec(1, self.n_psi, psi_norm.to_vec());
        Ok(self.inverse_batch(&zs, &[t_norm], &psis)?.data)
    }

    /// Single-point log density in normalized coordinates.
    pub fn log_density(&self, x: &[f64], t_norm: f64, psi_norm: &[f64]) -> Result<f64> {
        let xs = Tensor::from_vec(1, self.dim, x.to_vec());
        let psis = Tensor::from_vec(1, self.n_psi, psi_norm.to_vec());
        Ok(self.log_density_batch(&xs, &[t_norm], &psis)?[0])
    }
}
