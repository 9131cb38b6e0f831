//! Dense row-major 2-D tensors and the handful of kernels the tape needs.

/// A row-major matrix of doubles. Batched quantities put the batch on rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "tensor shape mismatch");
        Tensor { rows, cols, data }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor { rows: 1, cols: 1, data: vec![v] }
    }

    /// Column vector from a slice.
    pub fn column(data: &[f64]) -> Self {
        Tensor { rows: data.len(), cols: 1, data: data.to_vec() }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn same_shape(&self, other: &Tensor) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    /// Copy of the row range `[start, end)`.
    pub fn row_range(&self, start: usize, end: usize) -> Tensor {
        Tensor {
            rows: end - start,
            cols: self.cols,
            data: self.data[start * self.cols..end * self.cols].to_vec(),
        }
    }

    /// Copy of the given rows, in order.
    pub fn gather_rows(&self, indices: &[usize]) -> Tensor {
        let mut out = Tensor::zeros(indices.len(), self.cols);
        for (r, &i) in indices.iter().enumerate() {
            out.row_mut(r).copy_from_slice(self.row(i));
        }
        out
    }
}

/// Unrolled dot product; four accumulators break the add dependency chain
/// so the loop vectorizes.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (pa, pb) in (&mut ca).zip(&mut cb) {
        acc[0] += pa[0] * pb[0];
        acc[1] += pa[1] * pb[1];
        acc[2] += pa[2] * pb[2];
        acc[3] += pa[3] * pb[3];
    }
    let mut tail = 0.0;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `out = x * w^T + b`, with `x: n x in`, `w: out x in`, `b: 1 x out`.
pub fn affine_forward(x: &Tensor, w: &Tensor, b: &Tensor) -> Tensor {
    debug_assert_eq!(x.cols, w.cols);
    debug_assert_eq!(b.cols, w.rows);
    let mut out = Tensor::zeros(x.rows, w.rows);
    for r in 0..x.rows {
        let xr = x.row(r);
        let or = out.row_mut(r);
        for (o, out_v) in or.iter_mut().enumerate() {
            *out_v = b.data[o] + dot(xr, w.row(o));
        }
    }
    out
}

/// Accumulate the affine backward pass:
/// `gx += gy * w`, `gw += gy^T * x`, `gb += column sums of gy`.
pub fn affine_backward(
    x: &Tensor,
    w: &Tensor,
    gy: &Tensor,
    gx: &mut Tensor,
    gw: &mut Tensor,
    gb: &mut Tensor,
) {
    for r in 0..x.rows {
        let xr = x.row(r);
        let gyr = gy.row(r);
        let gxr = gx.row_mut(r);
        for (o, g) in gyr.iter().enumerate() {
            let wr = w.row(o);
            for (gxv, wv) in gxr.iter_mut().zip(wr) {
                *gxv += g * wv;
            }
            gb.data[o] += g;
        }
        for (o, g) in gyr.iter().enumerate() {
            let gwr = gw.row_mut(o);
            for (gwv, xv) in gwr.iter_mut().zip(xr) {
                *gwv += g * xv;
            }
        }
    }
}

/// Numerically stable `ln(1 + e^x)`.
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

/// Derivative of softplus (the logistic sigmoid).
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_matches_hand_computation() {
        // 2 x 3 input, 2 outputs.
        let x = Tensor::from_vec(2, 3, vec![1.0, 2.0, 3.0, -1.0, 0.5, 2.0]);
        let w = Tensor::from_vec(2, 3, vec![0.5, -1.0, 2.0, 1.0, 1.0, 1.0]);
        let b = Tensor::from_vec(1, 2, vec![0.1, -0.2]);
        let y = affine_forward(&x, &w, &b);
        assert_eq!(y.rows, 2);
        assert!((y.get(0, 0) - (0.5 - 2.0 + 6.0 + 0.1)).abs() < 1e-15);
        assert!((y.get(1, 1) - (-1.0 + 0.5 + 2.0 - 0.2)).abs() < 1e-15);
    }

    #[test]
    fn softplus_is_stable_at_extremes() {
        assert_eq!(softplus(1000.0), 1000.0);
        assert!(softplus(-1000.0) >= 0.0);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
    }
}
