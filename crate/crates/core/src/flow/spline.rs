//! Monotone rational-quadratic spline transforms.
//!
//! The transform acts on `[-B, B]` through `K` bins and is the identity with
//! unit slope outside. Each bin is a monotone rational-quadratic segment
//! pinned by bin widths, bin heights, and positive knot derivatives; the
//! boundary derivatives are fixed to 1 so the map is C1 at the tails.
//!
//! Raw conditioner outputs map to constrained parameters as
//!
//! * widths/heights: softmax scaled to sum `2B` with a small per-bin floor,
//! * interior derivatives: `softplus(raw + softplus^-1(1))`,
//!
//! so a zero raw vector yields the identity transform.

use serde::{Deserialize, Serialize};

use crate::autodiff::{softplus, Tensor};

/// Shift that makes `softplus(0 + shift) = 1`.
pub const DERIV_SHIFT: f64 = 0.541_324_854_612_918_1;

/// Fraction of the uniform bin size used as the width/height floor.
pub const MIN_BIN_FRACTION: f64 = 1e-3;

/// Bin count and tail bound of every spline in a model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplineConfig {
    pub bins: usize,
    pub tail_bound: f64,
}

impl Default for SplineConfig {
    fn default() -> Self {
        SplineConfig { bins: 8, tail_bound: 3.0 }
    }
}

impl SplineConfig {
    /// Raw conditioner outputs per transformed dimension: K widths, K
    /// heights, K-1 interior derivatives.
    pub fn raw_param_count(&self) -> usize {
        3 * self.bins - 1
    }

    /// Per-bin floor applied to widths and heights.
    pub fn min_bin_size(&self) -> f64 {
        MIN_BIN_FRACTION * 2.0 * self.tail_bound / self.bins as f64
    }
}

/// Constrained parameters of one spline: positive widths and heights summing
/// to `2B` and `K+1` positive knot derivatives with unit boundaries.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineParams {
    pub widths: Vec<f64>,
    pub heights: Vec<f64>,
    /// Interior knot derivatives (length K-1); boundaries are fixed at 1.
    pub interior_derivs: Vec<f64>,
}

impl SplineParams {
    /// Identity spline: uniform bins, unit derivatives.
    pub fn identity(config: &SplineConfig) -> Self {
        let uniform = 2.0 * config.tail_bound / config.bins as f64;
        SplineParams {
            widths: vec![uniform; config.bins],
            heights: vec![uniform; config.bins],
            interior_derivs: vec![1.0; config.bins - 1],
        }
    }

    /// Map raw conditioner outputs to constrained parameters.
    pub fn from_raw(raw: &[f64], config: &SplineConfig) -> Self {
        let k = config.bins;
        let mut params = SplineParams {
            widths: vec![0.0; k],
            heights: vec![0.0; k],
            interior_derivs: vec![0.0; k - 1],
        };
        constrain_into(
            raw,
            config,
            &mut params.widths,
            &mut params.heights,
            &mut params.interior_derivs,
        );
        params
    }
}

/// Allocation-free variant of [`SplineParams::from_raw`] for batch loops.
pub fn constrain_into(
    raw: &[f64],
    config: &SplineConfig,
    widths: &mut [f64],
    heights: &mut [f64],
    interior_derivs: &mut [f64],
) {
    let k = config.bins;
    assert_eq!(raw.len(), config.raw_param_count(), "raw spline parameter count");
    let total = 2.0 * config.tail_bound;
    let floor = config.min_bin_size();
    scaled_softmax_into(&raw[0..k], total, floor, widths);
    scaled_softmax_into(&raw[k..2 * k], total, floor, heights);
    for (d, r) in interior_derivs.iter_mut().zip(&raw[2 * k..]) {
        *d = softplus(r + DERIV_SHIFT);
    }
}

/// Derivative at knot `i` given the interior values; boundaries are 1.
#[inline]
fn deriv_at(interior: &[f64], bins: usize, i: usize) -> f64 {
    if i == 0 || i == bins {
        1.0
    } else {
        interior[i - 1]
    }
}

fn scaled_softmax_into(raw: &[f64], total: f64, floor: f64, out: &mut [f64]) {
    let scale = total - raw.len() as f64 * floor;
    let max = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut denom = 0.0;
    for (o, r) in out.iter_mut().zip(raw) {
        *o = (r - max).exp();
        denom += *o;
    }
    for o in out.iter_mut() {
        *o = floor + scale * (*o / denom);
    }
}

/// Locate the bin containing `v` given bin sizes; returns (index, left knot).
fn find_bin(sizes: &[f64], tail: f64, v: f64) -> (usize, f64) {
    let mut left = -tail;
    for (i, s) in sizes.iter().enumerate() {
        let right = left + s;
        if v < right || i == sizes.len() - 1 {
            return (i, left);
        }
        left = right;
    }
    unreachable!("empty spline");
}

/// Partial sum of bin sizes before `k`.
fn knot(sizes: &[f64], tail: f64, k: usize) -> f64 {
    -tail + sizes[..k].iter().sum::<f64>()
}

/// Forward transform: returns `(y, ln dy/dx)`.
pub fn forward(x: f64, params: &SplineParams, tail: f64) -> (f64, f64) {
    forward_parts(x, &params.widths, &params.heights, &params.interior_derivs, tail)
}

/// Slice-based forward transform for batch loops.
pub fn forward_parts(x: f64, widths: &[f64], heights: &[f64], interior: &[f64], tail: f64) -> (f64, f64) {
    if !(-tail..=tail).contains(&x) {
        return (x, 0.0);
    }
    let bins = widths.len();
    let (k, xk) = find_bin(widths, tail, x);
    let yk = knot(heights, tail, k);
    let w = widths[k];
    let h = heights[k];
    let (dl, dr) = (deriv_at(interior, bins, k), deriv_at(interior, bins, k + 1));
    let s = h / w;
    let xi = ((x - xk) / w).clamp(0.0, 1.0);
    let q = xi * (1.0 - xi);
    let big_d = dl + dr - 2.0 * s;
    let den = s + big_d * q;
    let num_y = h * (s * xi * xi + dl * q);
    let y = yk + num_y / den;
    let p = dr * xi * xi + 2.0 * s * q + dl * (1.0 - xi) * (1.0 - xi);
    let logdet = 2.0 * s.ln() + p.ln() - 2.0 * den.ln();
    (y, logdet)
}

/// Analytic inverse: solve the per-bin quadratic for the unique monotone
/// root.
pub fn inverse(y: f64, params: &SplineParams, tail: f64) -> f64 {
    inverse_parts(y, &params.widths, &params.heights, &params.interior_derivs, tail)
}

/// Slice-based inverse for batch loops.
pub fn inverse_parts(y: f64, widths: &[f64], heights: &[f64], interior: &[f64], tail: f64) -> f64 {
    if !(-tail..=tail).contains(&y) {
        return y;
    }
    let bins = widths.len();
    let (k, yk) = find_bin(heights, tail, y);
    let xk = knot(widths, tail, k);
    let w = widths[k];
    let h = heights[k];
    let (dl, dr) = (deriv_at(interior, bins, k), deriv_at(interior, bins, k + 1));
    let s = h / w;
    let dy = y - yk;
    let big_d = dl + dr - 2.0 * s;
    let a = h * (s - dl) + dy * big_d;
    let b = h * dl - dy * big_d;
    let c = -s * dy;
    let disc = (b * b - 4.0 * a * c).max(0.0).sqrt();
    // The in-range root is always (-b + disc) / (2a); pick the
    // cancellation-free form for the sign of b.
    let xi = if b >= 0.0 { 2.0 * c / (-b - disc) } else { (-b + disc) / (2.0 * a) };
    let xi = if xi.is_finite() { xi.clamp(0.0, 1.0) } else { 0.0 };
    xk + xi * w
}

/// Gradients of one spline evaluation for the reverse pass.
///
/// `grad_y`/`grad_logdet` are the upstream gradients on the outputs of
/// [`forward`]; the results accumulate into the slices for the widths,
/// heights, and interior derivatives, and the returned value is the gradient
/// on `x`.
#[allow(clippy::too_many_arguments)]
pub fn backward(
    x: f64,
    params: &SplineParams,
    tail: f64,
    grad_y: f64,
    grad_logdet: f64,
    grad_w: &mut [f64],
    grad_h: &mut [f64],
    grad_d: &mut [f64],
) -> f64 {
    backward_parts(
        x,
        &params.widths,
        &params.heights,
        &params.interior_derivs,
        tail,
        grad_y,
        grad_logdet,
        grad_w,
        grad_h,
        grad_d,
    )
}

/// Slice-based reverse pass for batch loops.
#[allow(clippy::too_many_arguments)]
pub fn backward_parts(
    x: f64,
    widths: &[f64],
    heights: &[f64],
    interior: &[f64],
    tail: f64,
    grad_y: f64,
    grad_logdet: f64,
    grad_w: &mut [f64],
    grad_h: &mut [f64],
    grad_d: &mut [f64],
) -> f64 {
    if !(-tail..=tail).contains(&x) {
        return grad_y;
    }
    let bins = widths.len();
    let (k, xk) = find_bin(widths, tail, x);
    let w = widths[k];
    let h = heights[k];
    let (dl, dr) = (deriv_at(interior, bins, k), deriv_at(interior, bins, k + 1));
    let s = h / w;
    let xi = ((x - xk) / w).clamp(0.0, 1.0);
    let q = xi * (1.0 - xi);
    let dq = 1.0 - 2.0 * xi;
    let big_d = dl + dr - 2.0 * s;
    let den = s + big_d * q;
    let num_y = h * (s * xi * xi + dl * q);
    let p = dr * xi * xi + 2.0 * s * q + dl * (1.0 - xi) * (1.0 - xi);
    let den2 = den * den;

    // y = yk + num_y / den, logdet = 2 ln s + ln p - 2 ln den.
    let dy_dxi = (h * (2.0 * s * xi + dl * dq) * den - num_y * big_d * dq) / den2;
    let dy_ds = (h * xi * xi * den - num_y * (1.0 - 2.0 * q)) / den2;
    let dy_ddl = q * (h * den - num_y) / den2;
    let dy_ddr = -num_y * q / den2;
    let dy_dh_direct = num_y / (h * den);

    let dl_dxi = (2.0 * dr * xi + 2.0 * s * dq - 2.0 * dl * (1.0 - xi)) / p - 2.0 * big_d * dq / den;
    let dl_ds = 2.0 / s + 2.0 * q / p - 2.0 * (1.0 - 2.0 * q) / den;
    let dl_ddl = (1.0 - xi) * (1.0 - xi) / p - 2.0 * q / den;
    let dl_ddr = xi * xi / p - 2.0 * q / den;

    let g_xi = grad_y * dy_dxi + grad_logdet * dl_dxi;
    let g_s = grad_y * dy_ds + grad_logdet * dl_ds;
    let g_dl = grad_y * dy_ddl + grad_logdet * dl_ddl;
    let g_dr = grad_y * dy_ddr + grad_logdet * dl_ddr;

    // xi = (x - xk) / w with xk = -B + sum of widths before k.
    let g_x = g_xi / w;
    let g_xk = -g_xi / w;
    for gw in grad_w[..k].iter_mut() {
        *gw += g_xk;
    }
    grad_w[k] += -g_xi * xi / w - g_s * s / w;
    // yk = -B + sum of heights before k.
    for gh in grad_h[..k].iter_mut() {
        *gh += grad_y;
    }
    grad_h[k] += g_s / w + grad_y * dy_dh_direct;
    // Boundary derivatives are constants.
    if k >= 1 {
        grad_d[k - 1] += g_dl;
    }
    if k + 1 < bins {
        grad_d[k] += g_dr;
    }
    g_x
}

/// Tape composite for batched spline evaluation.
///
/// Inputs: `x` (n x 1), widths (n x K), heights (n x K), interior
/// derivatives (n x K-1). Output column 0 is `y`, column 1 the log
/// derivative.
pub struct RqsSplineOp {
    pub tail: f64,
}

impl crate::autodiff::TapeOp for RqsSplineOp {
    fn forward(&self, inputs: &[&Tensor]) -> Tensor {
        let [x, w, h, d] = inputs else { panic!("spline op takes 4 inputs") };
        let n = x.rows;
        let mut out = Tensor::zeros(n, 2);
        for r in 0..n {
            let (y, ld) = forward_parts(x.data[r], w.row(r), h.row(r), d.row(r), self.tail);
            out.data[2 * r] = y;
            out.data[2 * r + 1] = ld;
        }
        out
    }

    fn backward(&self, inputs: &[&Tensor], _output: &Tensor, grad_out: &Tensor) -> Vec<Tensor> {
        let [x, w, h, d] = inputs else { panic!("spline op takes 4 inputs") };
        let n = x.rows;
        let k = w.cols;
        let mut gx = Tensor::zeros(n, 1);
        let mut gw = Tensor::zeros(n, k);
        let mut gh = Tensor::zeros(n, k);
        let mut gd = Tensor::zeros(n, k - 1);
        for r in 0..n {
            gx.data[r] = backward_parts(
                x.data[r],
                w.row(r),
                h.row(r),
                d.row(r),
                self.tail,
                grad_out.data[2 * r],
                grad_out.data[2 * r + 1],
                gw.row_mut(r),
                gh.row_mut(r),
                gd.row_mut(r),
            );
        }
        vec![gx, gw, gh, gd]
    }

    fn name(&self) -> &'static str {
        "rqs_spline"
    }
}

/// Derivative of the forward map, used by finite-difference tests.
pub fn derivative(x: f64, params: &SplineParams, tail: f64) -> f64 {
    forward(x, params, tail).1.exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn config() -> SplineConfig {
        SplineConfig::default()
    }

    fn random_params(rng: &mut ChaCha8Rng, cfg: &SplineConfig) -> SplineParams {
        let raw: Vec<f64> =
            (0..cfg.raw_param_count()).map(|_| rng.gen_range(-2.0..2.0)).collect();
        SplineParams::from_raw(&raw, cfg)
    }

    #[test]
    fn identity_params_give_identity_map() {
        let cfg = config();
        let params = SplineParams::identity(&cfg);
        for x in [-3.0, -1.7, -0.3, 0.0, 0.9, 2.4, 3.0] {
            let (y, ld) = forward(x, &params, cfg.tail_bound);
            assert_abs_diff_eq!(y, x, epsilon = 1e-12);
            assert_abs_diff_eq!(ld, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_raw_parameters_give_identity_map() {
        let cfg = config();
        let params = SplineParams::from_raw(&vec![0.0; cfg.raw_param_count()], &cfg);
        let (y, ld) = forward(0.7, &params, cfg.tail_bound);
        assert_abs_diff_eq!(y, 0.7, epsilon = 1e-12);
        assert_abs_diff_eq!(ld, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn outside_the_tail_is_identity() {
        let cfg = config();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let params = random_params(&mut rng, &cfg);
        let (y, ld) = forward(cfg.tail_bound + 5.0, &params, cfg.tail_bound);
        assert_eq!(y, cfg.tail_bound + 5.0);
        assert_eq!(ld, 0.0);
        assert_eq!(inverse(-cfg.tail_bound - 2.5, &params, cfg.tail_bound), -cfg.tail_bound - 2.5);
    }

    #[test]
    fn widths_and_heights_sum_to_the_domain() {
        let cfg = config();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let p = random_params(&mut rng, &cfg);
            assert_abs_diff_eq!(p.widths.iter().sum::<f64>(), 6.0, epsilon = 1e-12);
            assert_abs_diff_eq!(p.heights.iter().sum::<f64>(), 6.0, epsilon = 1e-12);
            assert!(p.widths.iter().all(|w| *w >= cfg.min_bin_size()));
            assert!(p.interior_derivs.iter().all(|d| *d > 0.0));
        }
    }

    #[test]
    fn derivative_matches_central_finite_difference() {
        let cfg = config();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = 1e-6;
        for _ in 0..300 {
            let params = random_params(&mut rng, &cfg);
            let x: f64 = rng.gen_range(-2.9..2.9);
            let analytic = derivative(x, &params, cfg.tail_bound);
            let (yp, _) = forward(x + h, &params, cfg.tail_bound);
            let (ym, _) = forward(x - h, &params, cfg.tail_bound);
            let fd = (yp - ym) / (2.0 * h);
            assert!(
                (analytic - fd).abs() / fd.abs().max(1e-9) < 1e-6,
                "x={x}: analytic {analytic} vs fd {fd}"
            );
        }
    }

    #[test]
    fn round_trip_of_ten_thousand_random_pairs() {
        let cfg = config();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut worst: f64 = 0.0;
        for _ in 0..10_000 {
            let params = random_params(&mut rng, &cfg);
            let y: f64 = rng.gen_range(-3.0..3.0);
            let x = inverse(y, &params, cfg.tail_bound);
            let (y2, _) = forward(x, &params, cfg.tail_bound);
            worst = worst.max((y - y2).abs());
        }
        assert!(worst < 1e-10, "worst inversion error {worst}");
    }

    #[test]
    fn inverse_is_monotone() {
        let cfg = config();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let params = random_params(&mut rng, &cfg);
            let mut y1: f64 = rng.gen_range(-3.0..3.0);
            let mut y2: f64 = rng.gen_range(-3.0..3.0);
            if y1 > y2 {
                std::mem::swap(&mut y1, &mut y2);
            }
            if y1 == y2 {
                continue;
            }
            let x1 = inverse(y1, &params, cfg.tail_bound);
            let x2 = inverse(y2, &params, cfg.tail_bound);
            assert!(x1 < x2, "monotonicity violated: {y1}->{x1}, {y2}->{x2}");
        }
    }

    #[test]
    fn backward_matches_finite_differences_in_every_parameter() {
        let cfg = config();
        let k = cfg.bins;
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let fd_h = 1e-6;
        for trial in 0..100 {
            let raw: Vec<f64> =
                (0..cfg.raw_param_count()).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let params = SplineParams::from_raw(&raw, &cfg);
            let x: f64 = rng.gen_range(-2.9..2.9);
            let (gy, gl): (f64, f64) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));

            let mut gw = vec![0.0; k];
            let mut gh = vec![0.0; k];
            let mut gd = vec![0.0; k - 1];
            let gx = backward(x, &params, cfg.tail_bound, gy, gl, &mut gw, &mut gh, &mut gd);

            let eval = |x: f64, p: &SplineParams| -> f64 {
                let (y, ld) = forward(x, p, cfg.tail_bound);
                gy * y + gl * ld
            };
            let check = |analytic: f64, fd: f64, what: &str| {
                let denom = fd.abs().max(analytic.abs()).max(1e-6);
                assert!(
                    (analytic - fd).abs() / denom < 1e-4,
                    "trial {trial} {what}: analytic {analytic} vs fd {fd}"
                );
            };

            check(gx, (eval(x + fd_h, &params) - eval(x - fd_h, &params)) / (2.0 * fd_h), "x");
            for i in 0..k {
                let mut plus = params.clone();
                plus.widths[i] += fd_h;
                let mut minus = params.clone();
                minus.widths[i] -= fd_h;
                check(gw[i], (eval(x, &plus) - eval(x, &minus)) / (2.0 * fd_h), "width");
                let mut plus = params.clone();
                plus.heights[i] += fd_h;
                let mut minus = params.clone();
                minus.heights[i] -= fd_h;
                check(gh[i], (eval(x, &plus) - eval(x, &minus)) / (2.0 * fd_h), "height");
            }
            for i in 0..k - 1 {
                let mut plus = params.clone();
                plus.interior_derivs[i] += fd_h;
                let mut minus = params.clone();
                minus.interior_derivs[i] -= fd_h;
                check(gd[i], (eval(x, &plus) - eval(x, &minus)) / (2.0 * fd_h), "deriv");
            }
        }
    }
}
