//! Tape recording of the batch negative log-likelihood, used by training.
//!
//! The recorded graph mirrors [`CnfModel::forward_batch`] exactly; a test
//! pins the two paths together to machine precision.

use crate::autodiff::{NodeId, Tape, Tensor};
use crate::error::Result;

use super::model::{CnfModel, LN_2PI};
use super::spline::{RqsSplineOp, DERIV_SHIFT};

/// A recorded NLL evaluation: the tape, the scalar loss node, and the
/// parameter leaves in the model's canonical flatten order.
pub struct NllGraph {
    pub tape: Tape,
    pub loss: NodeId,
    param_nodes: Vec<NodeId>,
    param_count: usize,
}

impl NllGraph {
    pub fn loss_value(&self) -> f64 {
        self.tape.value(self.loss).data[0]
    }

    /// Run the reverse pass and collect the flat parameter gradient.
    pub fn parameter_gradients(&self) -> Result<Vec<f64>> {
        let grads = self.tape.backward(self.loss)?;
        let mut flat = Vec::with_capacity(self.param_count);
        for id in &self.param_nodes {
            match grads.get(*id) {
                Some(g) => flat.extend_from_slice(&g.data),
                None => flat.extend(std::iter::repeat(0.0).take(self.tape.value(*id).len())),
            }
        }
        Ok(flat)
    }
}

impl CnfModel {
    /// Record the mean NLL of a batch of normalized points.
    pub fn nll_graph(&self, xs: &Tensor, ts: &[f64], psis: &Tensor) -> NllGraph {
        let n = xs.rows;
        debug_assert_eq!(xs.cols, self.dim);
        debug_assert_eq!(ts.len(), n);
        debug_assert_eq!(psis.rows, n);
        let bins = self.spline.bins;
        let tail = self.spline.tail_bound;
        let floor = self.spline.min_bin_size();

        let mut tape = Tape::new();
        let x_leaf = tape.leaf(xs.clone());
        let t_leaf = tape.leaf(Tensor::column(ts));
        let psi_leaf = (self.n_psi > 0).then(|| tape.leaf(psis.clone()));

        let mut u_cols: Vec<NodeId> = (0..self.dim).map(|j| tape.slice_cols(x_leaf, j, 1)).collect();
        let mut ld_cols: Vec<NodeId> = Vec::new();
        let mut param_nodes = Vec::new();

        for layer in &self.layers {
            let mut next = u_cols.clone();
            for j in 0..self.dim {
                let net = &layer.nets[j];
                let nodes = net.wire(&mut tape);
                for l in 0..net.layer_count() {
                    param_nodes.push(nodes.weights[l]);
                    param_nodes.push(nodes.biases[l]);
                }
                let mut parts: Vec<NodeId> =
                    layer.order[..j].iter().map(|&d| u_cols[d]).collect();
                parts.push(t_leaf);
                if let Some(p) = psi_leaf {
                    parts.push(p);
                }
                let input = tape.concat_cols(&parts);
                let raw = nodes.forward(&mut tape, input);

                let raw_w = tape.slice_cols(raw, 0, bins);
                let widths = tape.softmax_scaled(raw_w, 2.0 * tail, floor);
                let raw_h = tape.slice_cols(raw, bins, bins);
                let heights = tape.softmax_scaled(raw_h, 2.0 * tail, floor);
                let raw_d = tape.slice_cols(raw, 2 * bins, bins - 1);
                let shifted = tape.add_scalar(raw_d, DERIV_SHIFT);
                let derivs = tape.softplus(shifted);

                let spline = tape.custom(
                    &[u_cols[layer.order[j]], widths, heights, derivs],
                    Box::new(RqsSplineOp { tail }),
                );
                next[layer.order[j]] = tape.slice_cols(spline, 0, 1);
                ld_cols.push(tape.slice_cols(spline, 1, 1));
            }
            u_cols = next;
        }

        // nll = 0.5 |z|^2 + (d/2) ln 2pi - sum of log derivatives.
        let z = tape.concat_cols(&u_cols);
        let z_sq = tape.square(z);
        let sum_sq = tape.row_sum(z_sq);
        let half_sq = tape.scale(sum_sq, 0.5);
        let lds = tape.concat_cols(&ld_cols);
        let ld_sum = tape.row_sum(lds);
        let centered = tape.sub(half_sq, ld_sum);
        let nll = tape.add_scalar(centered, 0.5 * self.dim as f64 * LN_2PI);
        let loss = tape.mean_all(nll);

        NllGraph { tape, loss, param_nodes, param_count: self.param_count() }
    }

    /// Mean NLL of a batch along with the flat parameter gradient.
    pub fn nll_and_gradients(
        &self,
        xs: &Tensor,
        ts: &[f64],
        psis: &Tensor,
    ) -> Result<(f64, Vec<f64>)> {
        let graph = self.nll_graph(xs, ts, psis);
        let loss = graph.loss_value();
        let grads = graph.parameter_gradients()?;
        Ok((loss, grads))
    }
}
