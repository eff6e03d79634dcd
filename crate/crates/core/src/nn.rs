//! Small dense-network toolkit shared by the GAN and the CNN: a row-major
//! GEMM front, the Adam optimiser and a multilayer perceptron over a flat
//! parameter vector.

use serde::{Deserialize, Serialize};

use crate::numeric::RngState;

/// `C = op(A)·op(B) + beta·C` for row-major buffers, where `op(A)` is
/// `m × k` and `op(B)` is `k × n`. With `ta`, `a` holds the `k × m` matrix
/// whose transpose is used (same for `tb`).
#[allow(clippy::too_many_arguments)]
pub fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    ta: bool,
    b: &[f64],
    tb: bool,
    c: &mut [f64],
    beta: f64,
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if ta { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if tb { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the strides above address exactly the asserted buffer extents.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, lr: f64, beta1: f64, beta2: f64) -> Self {
        Adam {
            lr,
            beta1,
            beta2,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "slope", rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Leaky(f64),
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Leaky(s) => {
                if x > 0.0 {
                    x
                } else {
                    s * x
                }
            }
        }
    }

    fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Leaky(s) => {
                if pre > 0.0 {
                    1.0
                } else {
                    s
                }
            }
        }
    }
}

/// Fully connected network `in → hidden… → out` with the same activation on
/// every hidden layer and a linear output. Layer `l` stores its weights
/// (`out × in`, row-major) followed by its bias in [`Mlp::params`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Mlp {
    pub sizes: Vec<usize>,
    pub activation: Activation,
    #[serde(skip)]
    pub params: Vec<f64>,
}

/// Activations kept from the forward pass.
pub struct MlpCache {
    batch: usize,
    /// Input of each layer (post-activation of the previous one).
    inputs: Vec<Vec<f64>>,
    /// Pre-activation of each hidden layer.
    pre: Vec<Vec<f64>>,
}

impl Mlp {
    /// He-normal weights, zero biases.
    pub fn new(sizes: Vec<usize>, activation: Activation, rng: &mut RngState) -> Self {
        assert!(sizes.len() >= 2);
        let n = Self::param_count_for(&sizes);
        let mut params = vec![0.0; n];
        let mut off = 0;
        for w in sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let scale = (2.0 / fan_in as f64).sqrt();
            for p in &mut params[off..off + fan_in * fan_out] {
                *p = scale * rng.normal();
            }
            off += fan_in * fan_out + fan_out;
        }
        Mlp {
            sizes,
            activation,
            params,
        }
    }

    pub fn param_count_for(sizes: &[usize]) -> usize {
        sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn param_count(&self) -> usize {
        Self::param_count_for(&self.sizes)
    }

    pub fn input_width(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_width(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    fn layer_offsets(&self) -> Vec<usize> {
        let mut offs = Vec::with_capacity(self.sizes.len() - 1);
        let mut off = 0;
        for w in self.sizes.windows(2) {
            offs.push(off);
            off += w[0] * w[1] + w[1];
        }
        offs
    }

    /// `x` is `batch × input_width`.
    pub fn forward(&self, x: &[f64], batch: usize) -> (Vec<f64>, MlpCache) {
        let offs = self.layer_offsets();
        let nl = self.sizes.len() - 1;
        let mut cache = MlpCache {
            batch,
            inputs: Vec::with_capacity(nl),
            pre: Vec::with_capacity(nl - 1),
        };
        let mut cur = x.to_vec();
        for l in 0..nl {
            let (fi, fo) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.params[offs[l]..offs[l] + fi * fo];
            let b = &self.params[offs[l] + fi * fo..offs[l] + fi * fo + fo];
            let mut y = vec![0.0; batch * fo];
            for row in y.chunks_mut(fo) {
                row.copy_from_slice(b);
            }
            gemm(batch, fi, fo, &cur, false, w, true, &mut y, 1.0);
            cache.inputs.push(cur);
            if l + 1 < nl {
                let act = y.iter().map(|&v| self.activation.apply(v)).collect();
                cache.pre.push(y);
                cur = act;
            } else {
                cur = y;
            }
        }
        (cur, cache)
    }

    /// Accumulates parameter gradients into `grads` and returns the gradient
    /// with respect to the input.
    pub fn backward(&self, cache: &MlpCache, dout: &[f64], grads: &mut [f64]) -> Vec<f64> {
        let offs = self.layer_offsets();
        let nl = self.sizes.len() - 1;
        let batch = cache.batch;
        let mut d = dout.to_vec();
        for l in (0..nl).rev() {
            let (fi, fo) = (self.sizes[l], self.sizes[l + 1]);
            if l + 1 < nl {
                for (dv, &p) in d.iter_mut().zip(&cache.pre[l]) {
                    *dv *= self.activation.derivative(p);
                }
            }
            let x = &cache.inputs[l];
            let (gw, rest) = grads[offs[l]..].split_at_mut(fi * fo);
            gemm(fo, batch, fi, &d, true, x, false, gw, 1.0);
            for row in d.chunks(fo) {
                for (g, v) in rest[..fo].iter_mut().zip(row) {
                    *g += v;
                }
            }
            let w = &self.params[offs[l]..offs[l] + fi * fo];
            let mut dx = vec![0.0; batch * fi];
            gemm(batch, fo, fi, &d, false, w, false, &mut dx, 0.0);
            d = dx;
        }
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::finite_diff_grad;

    #[test]
    fn gemm_matches_naive_for_all_transpositions() {
        let mut r = RngState::new(1);
        let (m, k, n) = (3, 4, 5);
        let a: Vec<f64> = (0..m * k).map(|_| r.normal()).collect();
        let b: Vec<f64> = (0..k * n).map(|_| r.normal()).collect();
        let mut naive = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    naive[i * n + j] += a[i * k + p] * b[p * n + j];
                }
            }
        }
        let at: Vec<f64> = (0..k * m).map(|idx| a[(idx % m) * k + idx / m]).collect();
        let bt: Vec<f64> = (0..n * k).map(|idx| b[(idx % k) * n + idx / k]).collect();
        for (aa, ta) in [(&a, false), (&at, true)] {
            for (bb, tb) in [(&b, false), (&bt, true)] {
                let mut c = vec![0.0; m * n];
                gemm(m, k, n, aa, ta, bb, tb, &mut c, 0.0);
                for (x, y) in c.iter().zip(&naive) {
                    assert!((x - y).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn mlp_gradients_match_finite_differences() {
        let mut r = RngState::new(4);
        let mut mlp = Mlp::new(vec![3, 5, 4, 2], Activation::Leaky(0.2), &mut r);
        let batch = 3;
        let x: Vec<f64> = (0..batch * 3).map(|_| r.normal()).collect();
        let target: Vec<f64> = (0..batch * 2).map(|_| r.normal()).collect();
        let loss = |m: &Mlp| {
            let (y, _) = m.forward(&x, batch);
            0.5 * y.iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
        };
        let (y, cache) = mlp.forward(&x, batch);
        let dout: Vec<f64> = y.iter().zip(&target).map(|(a, b)| a - b).collect();
        let mut grads = vec![0.0; mlp.param_count()];
        mlp.backward(&cache, &dout, &mut grads);
        let p0 = mlp.params.clone();
        let fd = finite_diff_grad(
            |p| {
                mlp.params.copy_from_slice(p);
                loss(&mlp)
            },
            &p0,
            1e-6,
        );
        for (a, b) in grads.iter().zip(&fd) {
            assert!((a - b).abs() <= 1e-6 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }

    #[test]
    fn adam_minimises_a_quadratic() {
        let mut p = vec![3.0, -2.0];
        let mut opt = Adam::new(2, 0.1, 0.9, 0.999);
        for _ in 0..500 {
            let g = vec![2.0 * p[0], 2.0 * p[1]];
            opt.step(&mut p, &g);
        }
        assert!(p[0].abs() < 1e-2 && p[1].abs() < 1e-2);
    }
}
