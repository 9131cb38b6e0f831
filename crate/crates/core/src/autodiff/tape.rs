//! Minimal reverse-mode gradient engine.
//!
//! A [`Tape`] records a feedforward graph of tensor operations as it is
//! evaluated; [`Tape::backward`] then walks the recording in reverse and
//! accumulates gradients of a scalar loss with respect to every node. The
//! graph is rebuilt per batch, so data-dependent structure (bin selection in
//! spline transforms, ReLU masks) is simply baked into each recording.
//!
//! Domain-specific composites (the spline transform) plug in through
//! [`TapeOp`] without the engine knowing their math.

use crate::error::{Error, Result};

use super::tensor::{affine_backward, affine_forward, sigmoid, softplus, Tensor};

pub type NodeId = usize;

/// A custom differentiable operation. `forward` computes the output from the
/// input values; `backward` returns one gradient tensor per input given the
/// upstream gradient.
pub trait TapeOp {
    fn forward(&self, inputs: &[&Tensor]) -> Tensor;
    fn backward(&self, inputs: &[&Tensor], output: &Tensor, grad_out: &Tensor) -> Vec<Tensor>;
    fn name(&self) -> &'static str;
}

enum Op {
    Leaf,
    /// `x * w^T + b`.
    Affine { x: NodeId, w: NodeId, b: NodeId },
    Relu { x: NodeId },
    Softplus { x: NodeId },
    /// Per row: `floor + (total - cols * floor) * softmax(row)`.
    SoftmaxScaled { x: NodeId, total: f64, floor: f64 },
    ConcatCols { xs: Vec<NodeId> },
    SliceCols { x: NodeId, start: usize, len: usize },
    Add { a: NodeId, b: NodeId },
    Sub { a: NodeId, b: NodeId },
    Mul { a: NodeId, b: NodeId },
    Scale { x: NodeId, c: f64 },
    AddScalar { x: NodeId },
    Log { x: NodeId },
    Square { x: NodeId },
    RowSum { x: NodeId },
    MeanAll { x: NodeId },
    Custom { inputs: Vec<NodeId>, op: Box<dyn TapeOp> },
}

struct Node {
    op: Op,
    value: Tensor,
}

/// Gradients of the loss with respect to every node, indexed by [`NodeId`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient tensor for `id`; zero tensors may be `None` when the node
    /// does not influence the loss.
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.grads[id].as_ref()
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, value: Tensor) -> NodeId {
        self.nodes.push(Node { op, value });
        self.nodes.len() - 1
    }

    /// Register an input or parameter tensor.
    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Leaf, value)
    }

    pub fn affine(&mut self, x: NodeId, w: NodeId, b: NodeId) -> NodeId {
        let value = affine_forward(self.value(x), self.value(w), self.value(b));
        self.push(Op::Affine { x, w, b }, value)
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let mut value = self.value(x).clone();
        for v in &mut value.data {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        self.push(Op::Relu { x }, value)
    }

    pub fn softplus(&mut self, x: NodeId) -> NodeId {
        let mut value = self.value(x).clone();
        for v in &mut value.data {
            *v = softplus(*v);
        }
        self.push(Op::Softplus { x }, value)
    }

    pub fn softmax_scaled(&mut self, x: NodeId, total: f64, floor: f64) -> NodeId {
        let xv = self.value(x);
        let scale = total - xv.cols as f64 * floor;
        let mut value = Tensor::zeros(xv.rows, xv.cols);
        for r in 0..xv.rows {
            let row = xv.row(r);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut denom = 0.0;
            let out = value.row_mut(r);
            for (o, v) in out.iter_mut().zip(row) {
                *o = (v - max).exp();
                denom += *o;
            }
            for o in out.iter_mut() {
                *o = floor + scale * (*o / denom);
            }
        }
        self.push(Op::SoftmaxScaled { x, total, floor }, value)
    }

    pub fn concat_cols(&mut self, xs: &[NodeId]) -> NodeId {
        let rows = self.value(xs[0]).rows;
        let cols: usize = xs.iter().map(|id| self.value(*id).cols).sum();
        let mut value = Tensor::zeros(rows, cols);
        for r in 0..rows {
            let mut offset = 0;
            for id in xs {
                let part = self.value(*id);
                debug_assert_eq!(part.rows, rows);
                value.data[r * cols + offset..r * cols + offset + part.cols]
                    .copy_from_slice(part.row(r));
                offset += part.cols;
            }
        }
        self.push(Op::ConcatCols { xs: xs.to_vec() }, value)
    }

    pub fn slice_cols(&mut self, x: NodeId, start: usize, len: usize) -> NodeId {
        let xv = self.value(x);
        let mut value = Tensor::zeros(xv.rows, len);
        for r in 0..xv.rows {
            value.row_mut(r).copy_from_slice(&xv.row(r)[start..start + len]);
        }
        self.push(Op::SliceCols { x, start, len }, value)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = self.zip(a, b, |x, y| x + y);
        self.push(Op::Add { a, b }, value)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = self.zip(a, b, |x, y| x - y);
        self.push(Op::Sub { a, b }, value)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = self.zip(a, b, |x, y| x * y);
        self.push(Op::Mul { a, b }, value)
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> NodeId {
        let mut value = self.value(x).clone();
        for v in &mut value.data {
            *v *= c;
        }
        self.push(Op::Scale { x, c }, value)
    }

    pub fn add_scalar(&mut self, x: NodeId, c: f64) -> NodeId {
        let mut value = self.value(x).clone();
        for v in &mut value.data {
            *v += c;
        }
        self.push(Op::AddScalar { x }, value)
    }

    pub fn log(&mut self, x: NodeId) -> NodeId {
        let mut value = self.value(x).clone();
        for v in &mut value.data {
            *v = v.ln();
        }
        self.push(Op::Log { x }, value)
    }

    pub fn square(&mut self, x: NodeId) -> NodeId {
        let mut value = self.value(x).clone();
        for v in &mut value.data {
            *v *= *v;
        }
        self.push(Op::Square { x }, value)
    }

    pub fn row_sum(&mut self, x: NodeId) -> NodeId {
        let xv = self.value(x);
        let mut value = Tensor::zeros(xv.rows, 1);
        for r in 0..xv.rows {
            value.data[r] = xv.row(r).iter().sum();
        }
        self.push(Op::RowSum { x }, value)
    }

    pub fn mean_all(&mut self, x: NodeId) -> NodeId {
        let xv = self.value(x);
        let mean = xv.data.iter().sum::<f64>() / xv.len() as f64;
        self.push(Op::MeanAll { x }, Tensor::scalar(mean))
    }

    pub fn custom(&mut self, inputs: &[NodeId], op: Box<dyn TapeOp>) -> NodeId {
        let values: Vec<&Tensor> = inputs.iter().map(|id| self.value(*id)).collect();
        let value = op.forward(&values);
        self.push(Op::Custom { inputs: inputs.to_vec(), op }, value)
    }

    fn zip(&self, a: NodeId, b: NodeId, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (av, bv) = (self.value(a), self.value(b));
        debug_assert!(av.same_shape(bv), "elementwise op on mismatched shapes");
        let data = av.data.iter().zip(&bv.data).map(|(x, y)| f(*x, *y)).collect();
        Tensor { rows: av.rows, cols: av.cols, data }
    }

    /// Reverse pass from a scalar `loss` node; gradients of every node are
    /// accumulated deterministically in reverse recording order.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.rows != 1 || lv.cols != 1 {
            return Err(Error::contract(format!(
                "backward requires a scalar loss, got {}x{}",
                lv.rows, lv.cols
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss] = Some(Tensor::scalar(1.0));

        for id in (0..=loss).rev() {
            let Some(gout) = grads[id].take() else { continue };
            match &self.nodes[id].op {
                Op::Leaf => {}
                Op::Affine { x, w, b } => {
                    let (xv, wv) = (self.value(*x), self.value(*w));
                    let mut gx = take_or_zeros(&mut grads, *x, xv.rows, xv.cols);
                    let mut gw = take_or_zeros(&mut grads, *w, wv.rows, wv.cols);
                    let mut gb = take_or_zeros(&mut grads, *b, 1, wv.rows);
                    affine_backward(xv, wv, &gout, &mut gx, &mut gw, &mut gb);
                    grads[*x] = Some(gx);
                    grads[*w] = Some(gw);
                    grads[*b] = Some(gb);
                }
                Op::Relu { x } => {
                    let xv = self.value(*x);
                    let mut gx = take_or_zeros(&mut grads, *x, xv.rows, xv.cols);
                    for (g, (xv, go)) in gx.data.iter_mut().zip(xv.data.iter().zip(&gout.data)) {
                        if *xv > 0.0 {
                            *g += go;
                        }
                    }
                    grads[*x] = Some(gx);
                }
                Op::Softplus { x } => {
                    let xv = self.value(*x);
                    let mut gx = take_or_zeros(&mut grads, *x, xv.rows, xv.cols);
                    for (g, (xv, go)) in gx.data.iter_mut().zip(xv.data.iter().zip(&gout.data)) {
                        *g += sigmoid(*xv) * go;
                    }
                    grads[*x] = Some(gx);
                }
                Op::SoftmaxScaled { x, total, floor } => {
                    let xv = self.value(*x);
                    let yv = &self.nodes[id].value;
                    let scale = total - xv.cols as f64 * floor;
                    let mut gx = take_or_zeros(&mut grads, *x, xv.rows, xv.cols);
                    for r in 0..xv.rows {
                        // Recover the softmax vector from the scaled output.
                        let y = yv.row(r);
                        let go = gout.row(r);
                        let dot: f64 =
                            y.iter().zip(go).map(|(yv, g)| (yv - floor) / scale * g).sum();
                        let gr = gx.row_mut(r);
                        for ((g, yv), go) in gr.iter_mut().zip(y).zip(go) {
                            let s = (yv - floor) / scale;
                            *g += scale * s * (go - dot);
                        }
                    }
                    grads[*x] = Some(gx);
                }
                Op::ConcatCols { xs } => {
                    let mut offset = 0;
                    for xid in xs {
                        let part = self.value(*xid);
                        let mut gx = take_or_zeros(&mut grads, *xid, part.rows, part.cols);
                        for r in 0..part.rows {
                            let src = &gout.row(r)[offset..offset + part.cols];
                            for (g, s) in gx.row_mut(r).iter_mut().zip(src) {
                                *g += s;
                            }
                        }
                        offset += part.cols;
                        grads[*xid] = Some(gx);
                    }
                }
                Op::SliceCols { x, start, len } => {
                    let xv = self.value(*x);
                    let mut gx = take_or_zeros(&mut grads, *x, xv.rows, xv.cols);
                    for r in 0..xv.rows {
                        let dst = &mut gx.row_mut(r)[*start..*start + *len];
                        for (g, s) in dst.iter_mut().zip(gout.row(r)) {
                            *g += s;
                        }
                    }
                    grads[*x] = Some(gx);
                }
                Op::Add { a, b } => {
                    self.accumulate(&mut grads, *a, &gout, |g| g);
                    self.accumulate(&mut grads, *b, &gout, |g| g);
                }
                Op::Sub { a, b } => {
                    self.accumulate(&mut grads, *a, &gout, |g| g);
                    self.accumulate(&mut grads, *b, &gout, |g| -g);
                }
                Op::Mul { a, b } => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let mut ga = take_or_zeros(&mut grads, *a, av.rows, av.cols);
                    for (g, (bv, go)) in ga.data.iter_mut().zip(bv.data.iter().zip(&gout.data)) {
                        *g += bv * go;
                    }
                    grads[*a] = Some(ga);
                    let mut gb = take_or_zeros(&mut grads, *b, bv.rows, bv.cols);
                    for (g, (av, go)) in gb.data.iter_mut().zip(av.data.iter().zip(&gout.data)) {
                        *g += av * go;
                    }
                    grads[*b] = Some(gb);
                }
                Op::Scale { x, c } => {
                    self.accumulate(&mut grads, *x, &gout, |g| c * g);
                }
                Op::AddScalar { x } => {
                    self.accumulate(&mut grads, *x, &gout, |g| g);
                }
                Op::Log { x } => {
                    let xv = self.value(*x);
                    let mut gx = take_or_zeros(&mut grads, *x, xv.rows, xv.cols);
                    for (g, (xv, go)) in gx.data.iter_mut().zip(xv.data.iter().zip(&gout.data)) {
                        *g += go / xv;
                    }
                    grads[*x] = Some(gx);
                }
                Op::Square { x } => {
                    let xv = self.value(*x);
                    let mut gx = take_or_zeros(&mut grads, *x, xv.rows, xv.cols);
                    for (g, (xv, go)) in gx.data.iter_mut().zip(xv.data.iter().zip(&gout.data)) {
                        *g += 2.0 * xv * go;
                    }
                    grads[*x] = Some(gx);
                }
                Op::RowSum { x } => {
                    let xv = self.value(*x);
                    let mut gx = take_or_zeros(&mut grads, *x, xv.rows, xv.cols);
                    for r in 0..xv.rows {
                        let g = gout.data[r];
                        for v in gx.row_mut(r) {
                            *v += g;
                        }
                    }
                    grads[*x] = Some(gx);
                }
                Op::MeanAll { x } => {
                    let xv = self.value(*x);
                    let g = gout.data[0] / xv.len() as f64;
                    let mut gx = take_or_zeros(&mut grads, *x, xv.rows, xv.cols);
                    for v in &mut gx.data {
                        *v += g;
                    }
                    grads[*x] = Some(gx);
                }
                Op::Custom { inputs, op } => {
                    let values: Vec<&Tensor> = inputs.iter().map(|i| self.value(*i)).collect();
                    let gins = op.backward(&values, &self.nodes[id].value, &gout);
                    debug_assert_eq!(gins.len(), inputs.len());
                    for (xid, gin) in inputs.iter().zip(gins) {
                        let xv = self.value(*xid);
                        debug_assert!(gin.same_shape(xv), "{} gradient shape", op.name());
                        let mut gx = take_or_zeros(&mut grads, *xid, xv.rows, xv.cols);
                        for (g, s) in gx.data.iter_mut().zip(&gin.data) {
                            *g += s;
                        }
                        grads[*xid] = Some(gx);
                    }
                }
            }
            // Interior gradients are kept so callers can inspect any node.
            grads[id] = Some(gout);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(
        &self,
        grads: &mut [Option<Tensor>],
        id: NodeId,
        gout: &Tensor,
        f: impl Fn(f64) -> f64,
    ) {
        let v = self.value(id);
        let mut g = take_or_zeros(grads, id, v.rows, v.cols);
        for (gv, go) in g.data.iter_mut().zip(&gout.data) {
            *gv += f(*go);
        }
        grads[id] = Some(g);
    }
}

fn take_or_zeros(grads: &mut [Option<Tensor>], id: NodeId, rows: usize, cols: usize) -> Tensor {
    grads[id].take().unwrap_or_else(|| Tensor::zeros(rows, cols))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradient_of_linear_term_is_the_input() {
        // loss = w * x with x = 3: d loss / d w = 3.
        let mut tape = Tape::new();
        let w = tape.leaf(Tensor::scalar(1.5));
        let x = tape.leaf(Tensor::scalar(3.0));
        let y = tape.mul(w, x);
        let loss = tape.mean_all(y);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(w).unwrap().data[0], 3.0);
        assert_eq!(grads.get(x).unwrap().data[0], 1.5);
    }

    #[test]
    fn relu_gradient_is_zero_below_zero() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::from_vec(1, 2, vec![-2.0, 2.0]));
        let y = tape.relu(x);
        let loss = tape.mean_all(y);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap().data, vec![0.0, 0.5]);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::from_vec(1, 2, vec![1.0, 2.0]));
        assert!(tape.backward(x).is_err());
    }

    /// Central finite differences of an arbitrary scalar-valued tape
    /// function, used to pin every primitive's backward pass.
    fn finite_difference_check(
        build: impl Fn(&mut Tape, &[NodeId]) -> NodeId,
        leaves: &[Tensor],
        tol: f64,
    ) {
        let run = |tensors: &[Tensor]| -> (f64, Vec<Option<Tensor>>) {
            let mut tape = Tape::new();
            let ids: Vec<NodeId> = tensors.iter().map(|t| tape.leaf(t.clone())).collect();
            let loss = build(&mut tape, &ids);
            let value = tape.value(loss).data[0];
            let grads = tape.backward(loss).unwrap();
            (value, ids.iter().map(|id| grads.get(*id).cloned()).collect())
        };
        let (_, analytic) = run(leaves);
        let h = 1e-5;
        for (li, leaf) in leaves.iter().enumerate() {
            for k in 0..leaf.len() {
                let mut plus = leaves.to_vec();
                plus[li].data[k] += h;
                let mut minus = leaves.to_vec();
                minus[li].data[k] -= h;
                let fd = (run(&plus).0 - run(&minus).0) / (2.0 * h);
                let an = analytic[li].as_ref().map_or(0.0, |g| g.data[k]);
                let denom = fd.abs().max(an.abs()).max(1e-6);
                assert!(
                    (fd - an).abs() / denom < tol,
                    "leaf {li} element {k}: analytic {an} vs fd {fd}"
                );
            }
        }
    }

    #[test]
    fn affine_gradients_match_finite_differences() {
        let x = Tensor::from_vec(3, 2, vec![0.3, -0.7, 1.1, 0.4, -0.2, 0.9]);
        let w = Tensor::from_vec(2, 2, vec![0.5, -1.2, 0.8, 0.3]);
        let b = Tensor::from_vec(1, 2, vec![0.1, -0.4]);
        finite_difference_check(
            |tape, ids| {
                let y = tape.affine(ids[0], ids[1], ids[2]);
                let s = tape.square(y);
                tape.mean_all(s)
            },
            &[x, w, b],
            1e-6,
        );
    }

    #[test]
    fn softmax_scaled_gradients_match_finite_differences() {
        let x = Tensor::from_vec(2, 4, vec![0.3, -0.7, 1.1, 0.4, -0.2, 0.9, 0.0, -1.3]);
        finite_difference_check(
            |tape, ids| {
                let y = tape.softmax_scaled(ids[0], 6.0, 1e-3);
                let w = tape.log(y);
                tape.mean_all(w)
            },
            &[x],
            1e-6,
        );
    }

    #[test]
    fn softplus_log_square_chain_matches_finite_differences() {
        let x = Tensor::from_vec(2, 3, vec![0.3, -0.7, 1.1, 0.4, -0.2, 0.9]);
        finite_difference_check(
            |tape, ids| {
                let a = tape.softplus(ids[0]);
                let b = tape.log(a);
                let c = tape.square(b);
                let d = tape.row_sum(c);
                tape.mean_all(d)
            },
            &[x],
            1e-6,
        );
    }

    #[test]
    fn concat_slice_arithmetic_matches_finite_differences() {
        let a = Tensor::from_vec(2, 2, vec![0.3, -0.7, 1.1, 0.4]);
        let b = Tensor::from_vec(2, 1, vec![0.9, -0.5]);
        finite_difference_check(
            |tape, ids| {
                let cat = tape.concat_cols(&[ids[0], ids[1]]);
                let left = tape.slice_cols(cat, 0, 2);
                let right = tape.slice_cols(cat, 1, 2);
                let prod = tape.mul(left, right);
                let scaled = tape.scale(prod, 0.7);
                let shifted = tape.add_scalar(scaled, 0.2);
                let diff = tape.sub(shifted, ids[0]);
                let tot = tape.add(diff, ids[0]);
                tape.mean_all(tot)
            },
            &[a, b],
            1e-6,
        );
    }

    #[test]
    fn relu_gradient_matches_away_from_kink() {
        let x = Tensor::from_vec(1, 4, vec![0.8, -0.9, 1.4, -2.0]);
        finite_difference_check(
            |tape, ids| {
                let y = tape.relu(ids[0]);
                let s = tape.square(y);
                tape.mean_all(s)
            },
            &[x],
            1e-6,
        );
    }
}
