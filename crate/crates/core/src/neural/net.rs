use serde::{Deserialize, Serialize};

use super::layers::{
    apply_mask, bn_backward, bn_forward_eval, bn_forward_train, conv_backward, conv_forward,
    maxpool3_backward, maxpool3_forward, BnCache, Shape,
};
use crate::error::{Error, Result};
use crate::numeric::RngState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetConfig {
    pub in_channels: usize,
    pub n_classes: usize,
    pub depth: usize,
    /// Filters per branch; a module outputs `4 × filters` channels.
    pub filters: usize,
    pub bottleneck: usize,
    /// Odd kernel sizes of the parallel convolutions.
    pub kernels: Vec<usize>,
    /// A residual shortcut closes after every this many modules.
    pub residual_every: usize,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            in_channels: 4,
            n_classes: 4,
            depth: 6,
            filters: 32,
            bottleneck: 32,
            kernels: vec![9, 19, 39],
            residual_every: 3,
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.in_channels == 0 || self.n_classes < 2 || self.depth == 0 {
            return bad("network needs input channels, two classes and one module");
        }
        if self.filters == 0 || self.bottleneck == 0 || self.residual_every == 0 {
            return bad("filters, bottleneck and residual spacing must be positive");
        }
        if self.kernels.is_empty() || self.kernels.iter().any(|k| k % 2 == 0) {
            return bad("kernel sizes must be odd");
        }
        Ok(())
    }

    pub fn module_channels(&self) -> usize {
        (self.kernels.len() + 1) * self.filters
    }
}

#[derive(Debug, Clone, Copy)]
struct Conv {
    off: usize,
    cin: usize,
    cout: usize,
    k: usize,
}

impl Conv {
    fn len(self) -> usize {
        self.cin * self.cout * self.k
    }
}

#[derive(Debug, Clone, Copy)]
struct Bn {
    off: usize,
    c: usize,
    slot: usize,
}

#[derive(Debug, Clone)]
struct ModuleLayout {
    cin: usize,
    bottleneck: Option<Conv>,
    branches: Vec<Conv>,
    pool: Conv,
    bn: Bn,
    shortcut: Option<(Conv, Bn)>,
}

#[derive(Debug, Clone)]
struct Layout {
    modules: Vec<ModuleLayout>,
    head_w: usize,
    head_b: usize,
    c_last: usize,
    n_params: usize,
    bn_channels: Vec<usize>,
}

impl Layout {
    fn new(cfg: &NetConfig) -> Self {
        let mut off = 0;
        let mut bn_channels = Vec::new();
        let conv = |cin, cout, k, off: &mut usize| {
            let c = Conv { off: *off, cin, cout, k };
            *off += c.len();
            c
        };
        let bn = |c, off: &mut usize, bn_channels: &mut Vec<usize>| {
            let b = Bn { off: *off, c, slot: bn_channels.len() };
            *off += 2 * c;
            bn_channels.push(c);
            b
        };
        let mc = cfg.module_channels();
        let mut modules = Vec::with_capacity(cfg.depth);
        let mut cin = cfg.in_channels;
        let mut res_c = cfg.in_channels;
        for m in 0..cfg.depth {
            let bottleneck = (cin > 1).then(|| conv(cin, cfg.bottleneck, 1, &mut off));
            let zc = if bottleneck.is_some() { cfg.bottleneck } else { cin };
            let branches = cfg
                .kernels
                .iter()
                .map(|&k| conv(zc, cfg.filters, k, &mut off))
                .collect();
            let pool = conv(cin, cfg.filters, 1, &mut off);
            let bnl = bn(mc, &mut off, &mut bn_channels);
            let shortcut = ((m + 1) % cfg.residual_every == 0).then(|| {
                let c = conv(res_c, mc, 1, &mut off);
                (c, bn(mc, &mut off, &mut bn_channels))
            });
            if shortcut.is_some() {
                res_c = mc;
            }
            modules.push(ModuleLayout {
                cin,
                bottleneck,
                branches,
                pool,
                bn: bnl,
                shortcut,
            });
            cin = mc;
        }
        let head_w = off;
        off += cfg.n_classes * mc;
        let head_b = off;
        off += cfg.n_classes;
        Layout {
            modules,
            head_w,
            head_b,
            c_last: mc,
            n_params: off,
            bn_channels,
        }
    }
}

/// A batch in network layout: `channels × (b·t)` values and a `b·t` mask.
#[derive(Debug, Clone, PartialEq)]
pub struct SeqBatch {
    pub shape: Shape,
    pub channels: usize,
    pub values: Vec<f64>,
    pub mask: Vec<f64>,
}

impl SeqBatch {
    pub fn lengths(&self) -> Vec<f64> {
        self.mask.chunks(self.shape.t).map(|m| m.iter().sum()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics in batch-norm.
    Train,
    /// Running statistics in batch-norm.
    Eval,
}

struct ModuleCache {
    input: Vec<f64>,
    z: Option<Vec<f64>>,
    pooled: Vec<f64>,
    pool_arg: Vec<u32>,
    bn: Option<BnCache>,
    out: Vec<f64>,
    shortcut: Option<ShortcutCache>,
}

struct ShortcutCache {
    input: Vec<f64>,
    bn: Option<BnCache>,
    out: Vec<f64>,
}

pub struct Cache {
    modules: Vec<ModuleCache>,
    gap: Vec<f64>,
    lengths: Vec<f64>,
    /// Batch mean and variance per batch-norm slot (training mode only).
    pub batch_stats: Vec<(Vec<f64>, Vec<f64>)>,
}

/// InceptionTime-style network over a flat parameter vector.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InceptionNet {
    pub config: NetConfig,
    #[serde(skip)]
    pub params: Vec<f64>,
    #[serde(skip)]
    pub running_mean: Vec<Vec<f64>>,
    #[serde(skip)]
    pub running_var: Vec<Vec<f64>>,
    #[serde(skip)]
    layout: Option<Layout>,
}

pub const BN_MOMENTUM: f64 = 0.1;

fn relu_in_place(x: &mut [f64]) {
    x.iter_mut().for_each(|v| *v = v.max(0.0));
}

fn relu_backward(d: &mut [f64], out: &[f64]) {
    for (g, &o) in d.iter_mut().zip(out) {
        if o <= 0.0 {
            *g = 0.0;
        }
    }
}

impl InceptionNet {
    pub fn new(config: NetConfig, rng: &mut RngState) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        let mut params = vec![0.0; layout.n_params];
        let mut he = |c: Conv, params: &mut [f64]| {
            let sd = (2.0 / (c.cin * c.k) as f64).sqrt();
            params[c.off..c.off + c.len()]
                .iter_mut()
                .for_each(|w| *w = sd * rng.normal());
        };
        for m in &layout.modules {
            if let Some(b) = m.bottleneck {
                he(b, &mut params);
            }
            for &b in &m.branches {
                he(b, &mut params);
            }
            he(m.pool, &mut params);
            if let Some((c, _)) = m.shortcut {
                he(c, &mut params);
            }
            for bn in std::iter::once(m.bn).chain(m.shortcut.map(|s| s.1)) {
                params[bn.off..bn.off + bn.c].iter_mut().for_each(|g| *g = 1.0);
            }
        }
        let sd = (1.0 / layout.c_last as f64).sqrt();
        params[layout.head_w..layout.head_b]
            .iter_mut()
            .for_each(|w| *w = sd * rng.normal());
        let running_mean = layout.bn_channels.iter().map(|&c| vec![0.0; c]).collect();
        let running_var = layout.bn_channels.iter().map(|&c| vec![1.0; c]).collect();
        Ok(InceptionNet {
            config,
            params,
            running_mean,
            running_var,
            layout: Some(layout),
        })
    }

    /// Rebuilds a network from its parts (used when loading weights).
    pub fn from_parts(
        config: NetConfig,
        params: Vec<f64>,
        running_mean: Vec<Vec<f64>>,
        running_var: Vec<Vec<f64>>,
    ) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        let shapes_ok = params.len() == layout.n_params
            && running_mean.len() == layout.bn_channels.len()
            && running_var.len() == layout.bn_channels.len()
            && running_mean
                .iter()
                .chain(&running_var)
                .zip(layout.bn_channels.iter().chain(&layout.bn_channels))
                .all(|(v, &c)| v.len() == c);
        if !shapes_ok {
            return Err(Error::ShapeMismatch(
                "weights do not match the network configuration".into(),
            ));
        }
        Ok(InceptionNet {
            config,
            params,
            running_mean,
            running_var,
            layout: Some(layout),
        })
    }

    fn layout(&self) -> &Layout {
        self.layout.as_ref().expect("layout is built on construction")
    }

    pub fn param_count(&self) -> usize {
        self.layout().n_params
    }

    pub fn bn_channels(&self) -> &[usize] {
        &self.layout().bn_channels
    }

    fn batch_norm(
        &self,
        x: &[f64],
        bn: Bn,
        mask: &[f64],
        mode: Mode,
        stats: &mut Vec<(Vec<f64>, Vec<f64>)>,
    ) -> (Vec<f64>, Option<BnCache>) {
        let gamma = &self.params[bn.off..bn.off + bn.c];
        let beta = &self.params[bn.off + bn.c..bn.off + 2 * bn.c];
        match mode {
            Mode::Train => {
                let (y, cache, mean, var) = bn_forward_train(x, bn.c, mask, gamma, beta);
                stats[bn.slot] = (mean, var);
                (y, Some(cache))
            }
            Mode::Eval => (
                bn_forward_eval(
                    x,
                    bn.c,
                    mask,
                    gamma,
                    beta,
                    &self.running_mean[bn.slot],
                    &self.running_var[bn.slot],
                ),
                None,
            ),
        }
    }

    fn conv(&self, x: &[f64], c: Conv, s: Shape, mask: &[f64]) -> Vec<f64> {
        conv_forward(x, c.cin, &self.params[c.off..c.off + c.len()], c.cout, c.k, s, mask)
    }

    /// Logits, row-major `b × n_classes`.
    pub fn forward(&self, batch: &SeqBatch, mode: Mode) -> Result<(Vec<f64>, Cache)> {
        let lay = self.layout();
        let s = batch.shape;
        let n = s.n();
        if batch.channels != self.config.in_channels
            || batch.values.len() != batch.channels * n
            || batch.mask.len() != n
        {
            return Err(Error::ShapeMismatch(format!(
                "batch of {} channels × {} positions does not fit a {}-channel network",
                batch.channels, n, self.config.in_channels
            )));
        }
        let mask = &batch.mask;
        let mut stats = vec![(Vec::new(), Vec::new()); lay.bn_channels.len()];
        let mut h = batch.values.clone();
        apply_mask(&mut h, mask);
        let mut res = h.clone();
        let mut caches = Vec::with_capacity(lay.modules.len());
        let f = self.config.filters;
        for m in &lay.modules {
            let z = m.bottleneck.map(|b| self.conv(&h, b, s, mask));
            let zin = z.as_deref().unwrap_or(&h);
            let mut cat = Vec::with_capacity(self.config.module_channels() * n);
            for &b in &m.branches {
                cat.extend(self.conv(zin, b, s, mask));
            }
            let (pooled, pool_arg) = maxpool3_forward(&h, m.cin, s, mask);
            cat.extend(self.conv(&pooled, m.pool, s, mask));
            debug_assert_eq!(cat.len(), (m.branches.len() + 1) * f * n);
            let (mut out, bn) = self.batch_norm(&cat, m.bn, mask, mode, &mut stats);
            relu_in_place(&mut out);
            let shortcut = m.shortcut.map(|(c, b)| {
                let proj = self.conv(&res, c, s, mask);
                let (mut sum, bn) = self.batch_norm(&proj, b, mask, mode, &mut stats);
                sum.iter_mut().zip(&out).for_each(|(a, o)| *a += o);
                relu_in_place(&mut sum);
                ShortcutCache {
                    input: std::mem::take(&mut res),
                    bn,
                    out: sum,
                }
            });
            let next = shortcut.as_ref().map_or(&out, |sc| &sc.out).clone();
            if shortcut.is_some() {
                res = next.clone();
            }
            caches.push(ModuleCache {
                input: std::mem::replace(&mut h, next),
                z,
                pooled,
                pool_arg,
                bn,
                out,
                shortcut,
            });
        }
        // masked global average pooling
        let c = lay.c_last;
        let lengths = batch.lengths();
        let mut gap = vec![0.0; s.b * c];
        for ch in 0..c {
            for b in 0..s.b {
                if lengths[b] > 0.0 {
                    let row = &h[ch * n + b * s.t..ch * n + (b + 1) * s.t];
                    gap[b * c + ch] = row.iter().sum::<f64>() / lengths[b];
                }
            }
        }
        let k = self.config.n_classes;
        let mut logits = vec![0.0; s.b * k];
        for b in 0..s.b {
            logits[b * k..(b + 1) * k].copy_from_slice(&self.params[lay.head_b..lay.head_b + k]);
        }
        crate::nn::gemm(s.b, c, k, &gap, false, &self.params[lay.head_w..lay.head_b], true, &mut logits, 1.0);
        Ok((
            logits,
            Cache {
                modules: caches,
                gap,
                lengths,
                batch_stats: stats,
            },
        ))
    }

    /// Gradients of the loss with respect to every parameter, given the
    /// gradient with respect to the logits (`b × n_classes`).
    pub fn backward(&self, batch: &SeqBatch, cache: &Cache, dlogits: &[f64]) -> Vec<f64> {
        let lay = self.layout();
        let s = batch.shape;
        let n = s.n();
        let mask = &batch.mask;
        let k = self.config.n_classes;
        let c = lay.c_last;
        let mut grads = vec![0.0; lay.n_params];

        // head
        {
            let (gw, gb) = grads[lay.head_w..].split_at_mut(lay.head_b - lay.head_w);
            crate::nn::gemm(k, s.b, c, dlogits, true, &cache.gap, false, gw, 1.0);
            for b in 0..s.b {
                for j in 0..k {
                    gb[j] += dlogits[b * k + j];
                }
            }
        }
        let mut dgap = vec![0.0; s.b * c];
        crate::nn::gemm(s.b, k, c, dlogits, false, &self.params[lay.head_w..lay.head_b], false, &mut dgap, 0.0);
        let mut d = vec![0.0; c * n];
        for ch in 0..c {
            for b in 0..s.b {
                if cache.lengths[b] > 0.0 {
                    let g = dgap[b * c + ch] / cache.lengths[b];
                    for p in 0..s.t {
                        d[ch * n + b * s.t + p] = g * mask[b * s.t + p];
                    }
                }
            }
        }

        // gradients waiting for the tensor that fed a shortcut, keyed by
        // module index (None = network input, which needs no gradient)
        let mut pending: Vec<Option<Vec<f64>>> = vec![None; lay.modules.len()];
        let re = self.config.residual_every;
        for (mi, (m, mc)) in lay.modules.iter().zip(&cache.modules).enumerate().rev() {
            if let Some(p) = pending[mi].take() {
                d.iter_mut().zip(&p).for_each(|(a, b)| *a += b);
            }
            if let (Some((conv, bn)), Some(sc)) = (m.shortcut, &mc.shortcut) {
                relu_backward(&mut d, &sc.out);
                let (gg, gb) = split_bn(&mut grads, bn);
                let dproj = bn_backward(&d, sc.bn.as_ref().unwrap(), bn.c, mask, &self.params[bn.off..bn.off + bn.c], gg, gb);
                let mut dres = self.conv_back(&dproj, &sc.input, conv, s, &mut grads);
                apply_mask(&mut dres, mask);
                if mi + 1 > re {
                    let src = mi - re;
                    match &mut pending[src] {
                        Some(p) => p.iter_mut().zip(&dres).for_each(|(a, b)| *a += b),
                        slot => *slot = Some(dres),
                    }
                }
            }
            relu_backward(&mut d, &mc.out);
            let (gg, gb) = split_bn(&mut grads, m.bn);
            let dcat = bn_backward(&d, mc.bn.as_ref().unwrap(), m.bn.c, mask, &self.params[m.bn.off..m.bn.off + m.bn.c], gg, gb);
            let f = self.config.filters;
            let zin = mc.z.as_deref().unwrap_or(&mc.input);
            let zc = m.branches[0].cin;
            let mut dz = vec![0.0; zc * n];
            for (bi, &b) in m.branches.iter().enumerate() {
                let part = &dcat[bi * f * n..(bi + 1) * f * n];
                let g = self.conv_back(part, zin, b, s, &mut grads);
                dz.iter_mut().zip(&g).for_each(|(a, v)| *a += v);
            }
            apply_mask(&mut dz, mask);
            let nb = m.branches.len();
            let dp = self.conv_back(&dcat[nb * f * n..], &mc.pooled, m.pool, s, &mut grads);
            let mut dh = maxpool3_backward(&dp, &mc.pool_arg, m.cin, n, mask);
            match m.bottleneck {
                Some(b) => {
                    let g = self.conv_back(&dz, &mc.input, b, s, &mut grads);
                    dh.iter_mut().zip(&g).for_each(|(a, v)| *a += v);
                }
                None => dh.iter_mut().zip(&dz).for_each(|(a, v)| *a += v),
            }
            apply_mask(&mut dh, mask);
            d = dh;
        }
        grads
    }

    fn conv_back(&self, dout: &[f64], x: &[f64], c: Conv, s: Shape, grads: &mut [f64]) -> Vec<f64> {
        conv_backward(
            dout,
            x,
            c.cin,
            &self.params[c.off..c.off + c.len()],
            c.cout,
            c.k,
            s,
            &mut grads[c.off..c.off + c.len()],
        )
    }

    /// Moves the running batch-norm statistics towards a training batch.
    pub fn update_running(&mut self, cache: &Cache, batch: &SeqBatch) {
        let count: f64 = batch.mask.iter().sum();
        let unbias = if count > 1.0 { count / (count - 1.0) } else { 1.0 };
        for (slot, (mean, var)) in cache.batch_stats.iter().enumerate() {
            for (i, (&m, &v)) in mean.iter().zip(var).enumerate() {
                let rm = &mut self.running_mean[slot][i];
                *rm = (1.0 - BN_MOMENTUM) * *rm + BN_MOMENTUM * m;
                let rv = &mut self.running_var[slot][i];
                *rv = (1.0 - BN_MOMENTUM) * *rv + BN_MOMENTUM * v * unbias;
            }
        }
    }

    pub fn head_bias_range(&self) -> std::ops::Range<usize> {
        let lay = self.layout();
        lay.head_b..lay.head_b + self.config.n_classes
    }

    pub fn head_weight_range(&self) -> std::ops::Range<usize> {
        let lay = self.layout();
        lay.head_w..lay.head_b
    }
}

fn split_bn(grads: &mut [f64], bn: Bn) -> (&mut [f64], &mut [f64]) {
    grads[bn.off..bn.off + 2 * bn.c].split_at_mut(bn.c)
}

/// Mean cross-entropy and its gradient with respect to the logits.
pub fn cross_entropy(logits: &[f64], labels: &[usize], k: usize) -> (f64, Vec<f64>) {
    let b = labels.len();
    let mut grad = logits.to_vec();
    let mut loss = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let row = &mut grad[i * k..(i + 1) * k];
        let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = mx + row.iter().map(|v| (v - mx).exp()).sum::<f64>().ln();
        loss += lse - row[y];
        for (j, v) in row.iter_mut().enumerate() {
            *v = ((*v - lse).exp() - if j == y { 1.0 } else { 0.0 }) / b as f64;
        }
    }
    (loss / b as f64, grad)
}
