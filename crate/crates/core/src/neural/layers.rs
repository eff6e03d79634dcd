//! Masked 1-D layers over channel-major activations: a tensor with `c`
//! channels over `b` sequences of length `t` is stored as `c × (b·t)`,
//! element `[ch][seq·t + pos]`. Masked positions are kept at zero.

use crate::nn::gemm;

pub const BN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape {
    pub b: usize,
    pub t: usize,
}

impl Shape {
    pub fn n(self) -> usize {
        self.b * self.t
    }
}

pub fn apply_mask(x: &mut [f64], mask: &[f64]) {
    let n = mask.len();
    for row in x.chunks_mut(n) {
        for (v, &m) in row.iter_mut().zip(mask) {
            if m == 0.0 {
                *v = 0.0;
            }
        }
    }
}

/// `(cin·k) × n` patch matrix for a same-padded odd kernel.
pub fn im2col(x: &[f64], cin: usize, s: Shape, k: usize) -> Vec<f64> {
    let n = s.n();
    let pad = k / 2;
    let mut cols = vec![0.0; cin * k * n];
    for ci in 0..cin {
        for j in 0..k {
            let dst = &mut cols[(ci * k + j) * n..(ci * k + j + 1) * n];
            for b in 0..s.b {
                let src = &x[ci * n + b * s.t..ci * n + (b + 1) * s.t];
                let out = &mut dst[b * s.t..(b + 1) * s.t];
                // out[p] = src[p + j - pad]
                let lo = pad.saturating_sub(j);
                let hi = (s.t + pad).saturating_sub(j).min(s.t);
                if lo < hi {
                    out[lo..hi].copy_from_slice(&src[lo + j - pad..hi + j - pad]);
                }
            }
        }
    }
    cols
}

pub fn col2im(cols: &[f64], cin: usize, s: Shape, k: usize) -> Vec<f64> {
    let n = s.n();
    let pad = k / 2;
    let mut x = vec![0.0; cin * n];
    for ci in 0..cin {
        for j in 0..k {
            let src = &cols[(ci * k + j) * n..(ci * k + j + 1) * n];
            for b in 0..s.b {
                let dst = &mut x[ci * n + b * s.t..ci * n + (b + 1) * s.t];
                let inp = &src[b * s.t..(b + 1) * s.t];
                let lo = pad.saturating_sub(j);
                let hi = (s.t + pad).saturating_sub(j).min(s.t);
                for p in lo..hi {
                    dst[p + j - pad] += inp[p];
                }
            }
        }
    }
    x
}

/// Bias-free same-padded convolution; `w` is `cout × (cin·k)`.
pub fn conv_forward(x: &[f64], cin: usize, w: &[f64], cout: usize, k: usize, s: Shape, mask: &[f64]) -> Vec<f64> {
    let n = s.n();
    let mut out = vec![0.0; cout * n];
    if k == 1 {
        gemm(cout, cin, n, w, false, x, false, &mut out, 0.0);
    } else {
        let cols = im2col(x, cin, s, k);
        gemm(cout, cin * k, n, w, false, &cols, false, &mut out, 0.0);
    }
    apply_mask(&mut out, mask);
    out
}

/// Accumulates the weight gradient into `dw` and returns the input gradient.
#[allow(clippy::too_many_arguments)]
pub fn conv_backward(
    dout: &[f64],
    x: &[f64],
    cin: usize,
    w: &[f64],
    cout: usize,
    k: usize,
    s: Shape,
    dw: &mut [f64],
) -> Vec<f64> {
    let n = s.n();
    if k == 1 {
        gemm(cout, n, cin, dout, false, x, true, dw, 1.0);
        let mut dx = vec![0.0; cin * n];
        gemm(cin, cout, n, w, true, dout, false, &mut dx, 0.0);
        dx
    } else {
        let cols = im2col(x, cin, s, k);
        gemm(cout, n, cin * k, dout, false, &cols, true, dw, 1.0);
        let mut dcols = vec![0.0; cin * k * n];
        gemm(cin * k, cout, n, w, true, dout, false, &mut dcols, 0.0);
        col2im(&dcols, cin, s, k)
    }
}

/// Width-3, stride-1 max pooling over valid neighbours only. Returns the
/// output and, per element, the source position.
pub fn maxpool3_forward(x: &[f64], c: usize, s: Shape, mask: &[f64]) -> (Vec<f64>, Vec<u32>) {
    let n = s.n();
    let mut y = vec![0.0; c * n];
    let mut arg = vec![0u32; c * n];
    for ch in 0..c {
        for b in 0..s.b {
            let base = b * s.t;
            for p in 0..s.t {
                let i = base + p;
                if mask[i] == 0.0 {
                    arg[ch * n + i] = i as u32;
                    continue;
                }
                let mut best = i;
                for q in [p.wrapping_sub(1), p + 1] {
                    if q < s.t && mask[base + q] != 0.0 && x[ch * n + base + q] > x[ch * n + best] {
                        best = base + q;
                    }
                }
                y[ch * n + i] = x[ch * n + best];
                arg[ch * n + i] = best as u32;
            }
        }
    }
    (y, arg)
}

pub fn maxpool3_backward(dy: &[f64], arg: &[u32], c: usize, n: usize, mask: &[f64]) -> Vec<f64> {
    let mut dx = vec![0.0; c * n];
    for ch in 0..c {
        for i in 0..n {
            if mask[i] != 0.0 {
                dx[ch * n + arg[ch * n + i] as usize] += dy[ch * n + i];
            }
        }
    }
    dx
}

pub struct BnCache {
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
    count: f64,
}

/// Batch statistics over valid positions. Returns the output, the cache,
/// and the per-channel mean and (biased) variance.
pub fn bn_forward_train(
    x: &[f64],
    c: usize,
    mask: &[f64],
    gamma: &[f64],
    beta: &[f64],
) -> (Vec<f64>, BnCache, Vec<f64>, Vec<f64>) {
    let n = mask.len();
    let count: f64 = mask.iter().sum();
    let mut y = vec![0.0; c * n];
    let mut xhat = vec![0.0; c * n];
    let mut means = vec![0.0; c];
    let mut vars = vec![0.0; c];
    let mut inv_std = vec![0.0; c];
    for ch in 0..c {
        let row = &x[ch * n..(ch + 1) * n];
        let mean = row.iter().zip(mask).map(|(v, m)| v * m).sum::<f64>() / count;
        let var = row
            .iter()
            .zip(mask)
            .map(|(v, m)| m * (v - mean) * (v - mean))
            .sum::<f64>()
            / count;
        let is = 1.0 / (var + BN_EPS).sqrt();
        for i in 0..n {
            if mask[i] != 0.0 {
                let h = (row[i] - mean) * is;
                xhat[ch * n + i] = h;
                y[ch * n + i] = gamma[ch] * h + beta[ch];
            }
        }
        means[ch] = mean;
        vars[ch] = var;
        inv_std[ch] = is;
    }
    (y, BnCache { xhat, inv_std, count }, means, vars)
}

pub fn bn_forward_eval(
    x: &[f64],
    c: usize,
    mask: &[f64],
    gamma: &[f64],
    beta: &[f64],
    mean: &[f64],
    var: &[f64],
) -> Vec<f64> {
    let n = mask.len();
    let mut y = vec![0.0; c * n];
    for ch in 0..c {
        let is = 1.0 / (var[ch] + BN_EPS).sqrt();
        for i in 0..n {
            if mask[i] != 0.0 {
                y[ch * n + i] = gamma[ch] * (x[ch * n + i] - mean[ch]) * is + beta[ch];
            }
        }
    }
    y
}

pub fn bn_backward(
    dy: &[f64],
    cache: &BnCache,
    c: usize,
    mask: &[f64],
    gamma: &[f64],
    dgamma: &mut [f64],
    dbeta: &mut [f64],
) -> Vec<f64> {
    let n = mask.len();
    let m = cache.count;
    let mut dx = vec![0.0; c * n];
    for ch in 0..c {
        let (mut sum_d, mut sum_dx) = (0.0, 0.0);
        let (mut dg, mut db) = (0.0, 0.0);
        for i in 0..n {
            if mask[i] != 0.0 {
                let d = dy[ch * n + i];
                let h = cache.xhat[ch * n + i];
                dg += d * h;
                db += d;
                sum_d += d * gamma[ch];
                sum_dx += d * gamma[ch] * h;
            }
        }
        dgamma[ch] += dg;
        dbeta[ch] += db;
        let is = cache.inv_std[ch];
        for i in 0..n {
            if mask[i] != 0.0 {
                let dh = dy[ch * n + i] * gamma[ch];
                let h = cache.xhat[ch * n + i];
                dx[ch * n + i] = is / m * (m * dh - sum_d - h * sum_dx);
            }
        }
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{finite_diff_grad, RngState};

    fn rand_vec(n: usize, r: &mut RngState) -> Vec<f64> {
        (0..n).map(|_| r.normal()).collect()
    }

    fn naive_conv(x: &[f64], cin: usize, w: &[f64], cout: usize, k: usize, s: Shape) -> Vec<f64> {
        let n = s.n();
        let pad = k as isize / 2;
        let mut out = vec![0.0; cout * n];
        for co in 0..cout {
            for b in 0..s.b {
                for p in 0..s.t as isize {
                    let mut acc = 0.0;
                    for ci in 0..cin {
                        for j in 0..k as isize {
                            let q = p + j - pad;
                            if q >= 0 && q < s.t as isize {
                                acc += w[co * cin * k + ci * k + j as usize] * x[ci * n + b * s.t + q as usize];
                            }
                        }
                    }
                    out[co * n + b * s.t + p as usize] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn conv_matches_direct_sum() {
        let mut r = RngState::new(1);
        let s = Shape { b: 2, t: 7 };
        for k in [1, 3, 9] {
            let x = rand_vec(3 * s.n(), &mut r);
            let w = rand_vec(2 * 3 * k, &mut r);
            let got = conv_forward(&x, 3, &w, 2, k, s, &vec![1.0; s.n()]);
            let want = naive_conv(&x, 3, &w, 2, k, s);
            for (a, b) in got.iter().zip(&want) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn conv_backward_matches_finite_differences() {
        let mut r = RngState::new(2);
        let s = Shape { b: 2, t: 5 };
        let mask = vec![1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0];
        for k in [1, 3, 7] {
            let mut x = rand_vec(2 * s.n(), &mut r);
            apply_mask(&mut x, &mask);
            let w = rand_vec(3 * 2 * k, &mut r);
            let mut g = rand_vec(3 * s.n(), &mut r);
            apply_mask(&mut g, &mask);
            let loss = |w: &[f64]| conv_forward(&x, 2, w, 3, k, s, &mask).iter().zip(&g).map(|(a, b)| a * b).sum::<f64>();
            let mut dw = vec![0.0; w.len()];
            let dx = conv_backward(&g, &x, 2, &w, 3, k, s, &mut dw);
            for (a, b) in dw.iter().zip(finite_diff_grad(loss, &w, 1e-6)) {
                assert!((a - b).abs() < 1e-7);
            }
            let loss_x = |x: &[f64]| conv_forward(x, 2, &w, 3, k, s, &mask).iter().zip(&g).map(|(a, b)| a * b).sum::<f64>();
            for (a, b) in dx.iter().zip(finite_diff_grad(loss_x, &x, 1e-6)) {
                assert!((a - b).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn maxpool_ignores_masked_neighbours() {
        let s = Shape { b: 1, t: 4 };
        let mask = [1.0, 1.0, 1.0, 0.0];
        let x = [1.0, 3.0, 2.0, 0.0];
        let (y, _) = maxpool3_forward(&x, 1, s, &mask);
        assert_eq!(y, vec![3.0, 3.0, 3.0, 0.0]);
        let neg = [-1.0, -3.0, -2.0, 0.0];
        let (y, _) = maxpool3_forward(&neg, 1, s, &mask);
        // the masked zero must not win the max
        assert_eq!(y, vec![-1.0, -1.0, -2.0, 0.0]);
    }

    #[test]
    fn batchnorm_backward_matches_finite_differences() {
        let mut r = RngState::new(3);
        let mask = vec![1.0, 1.0, 0.0, 1.0, 1.0, 1.0];
        let c = 2;
        let mut x = rand_vec(c * 6, &mut r);
        apply_mask(&mut x, &mask);
        let gamma = vec![1.3, 0.7];
        let beta = vec![0.1, -0.2];
        let mut g = rand_vec(c * 6, &mut r);
        apply_mask(&mut g, &mask);
        let (_, cache, _, _) = bn_forward_train(&x, c, &mask, &gamma, &beta);
        let mut dg = vec![0.0; c];
        let mut db = vec![0.0; c];
        let dx = bn_backward(&g, &cache, c, &mask, &gamma, &mut dg, &mut db);
        let f = |x: &[f64]| {
            bn_forward_train(x, c, &mask, &gamma, &beta).0.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>()
        };
        for (i, (a, b)) in dx.iter().zip(finite_diff_grad(f, &x, 1e-6)).enumerate() {
            if mask[i % 6] != 0.0 {
                assert!((a - b).abs() < 1e-6, "{a} {b}");
            }
        }
    }
}
