use serde::{Deserialize, Serialize};

use super::{check_width, check_xy, midpoint, Node, Tree};
use crate::error::{Error, Result};
use crate::numeric::{argmax, softmax_in_place};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum Binning {
    /// Every midpoint between adjacent distinct values is a candidate.
    Exact,
    /// At most `max_bins` quantile bins per feature.
    Hist { max_bins: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "kebab-case")]
pub enum Growth {
    DepthWise { max_depth: Option<usize> },
    /// Repeatedly split the leaf with the largest gain.
    LeafWise { num_leaves: usize, max_depth: Option<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtParams {
    pub n_classes: usize,
    pub rounds: usize,
    pub learning_rate: f64,
    pub lambda: f64,
    pub min_samples_leaf: usize,
    pub growth: Growth,
    pub binning: Binning,
}

impl GbdtParams {
    /// Exact depth-wise boosting.
    pub fn gb() -> Self {
        GbdtParams {
            n_classes: 4,
            rounds: 100,
            learning_rate: 0.1,
            lambda: 1.0,
            min_samples_leaf: 1,
            growth: Growth::DepthWise { max_depth: Some(3) },
            binning: Binning::Exact,
        }
    }

    /// Histogram depth-wise boosting.
    pub fn hgb() -> Self {
        GbdtParams {
            min_samples_leaf: 20,
            binning: Binning::Hist { max_bins: 255 },
            ..Self::gb()
        }
    }

    /// Histogram leaf-wise boosting.
    pub fn lgbm() -> Self {
        GbdtParams {
            growth: Growth::LeafWise {
                num_leaves: 31,
                max_depth: None,
            },
            ..Self::hgb()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n_classes < 2 {
            return bad("boosting needs at least two classes".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad(format!("learning rate {} outside (0, 1]", self.learning_rate));
        }
        if !(self.lambda >= 0.0) {
            return bad("lambda must be non-negative".into());
        }
        if let Binning::Hist { max_bins } = self.binning {
            if !(2..=255).contains(&max_bins) {
                return bad(format!("max_bins {max_bins} outside 2..=255"));
            }
        }
        if let Growth::LeafWise { num_leaves, .. } = self.growth {
            if num_leaves < 2 {
                return bad("num_leaves must be at least 2".into());
            }
        }
        Ok(())
    }
}

/// Per-feature split thresholds; a value's bin is the number of
/// thresholds strictly below it, so `bin <= b` iff `x <= edges[b]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Binner {
    pub edges: Vec<Vec<f64>>,
}

impl Binner {
    pub fn fit(x: &[Vec<f64>], binning: Binning) -> Self {
        let d = x[0].len();
        let edges = (0..d)
            .map(|f| {
                let mut v: Vec<f64> = x.iter().map(|r| r[f]).collect();
                v.sort_by(f64::total_cmp);
                let mut distinct = v.clone();
                distinct.dedup();
                let all = || distinct.windows(2).map(|w| midpoint(w[0], w[1])).collect();
                match binning {
                    Binning::Hist { max_bins } if distinct.len() > max_bins => {
                        let n = v.len();
                        let mut e: Vec<f64> = (1..max_bins)
                            .map(|i| i * n / max_bins)
                            .filter(|&p| p > 0 && p < n && v[p - 1] < v[p])
                            .map(|p| midpoint(v[p - 1], v[p]))
                            .collect();
                        e.dedup();
                        e
                    }
                    _ => all(),
                }
            })
            .collect();
        Binner { edges }
    }

    pub fn bin(&self, f: usize, v: f64) -> usize {
        self.edges[f].partition_point(|&e| e < v)
    }

    pub fn n_bins(&self, f: usize) -> usize {
        self.edges[f].len() + 1
    }
}

/// Split gain `G_L²/(H_L+λ) + G_R²/(H_R+λ) − G²/(H+λ)`.
pub fn gbdt_gain(gl: f64, hl: f64, gr: f64, hr: f64, lambda: f64) -> f64 {
    let g = gl + gr;
    let h = hl + hr;
    gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - g * g / (h + lambda)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    pub n_features: usize,
    pub n_classes: usize,
    pub learning_rate: f64,
    /// Log class priors.
    pub init: Vec<f64>,
    /// `trees[round][class]`; leaves hold the unscaled Newton step.
    pub trees: Vec<Vec<Tree>>,
    pub binner: Binner,
    pub params: GbdtParams,
    /// Training log-loss after each round (index 0 is before boosting).
    pub train_loss: Vec<f64>,
}

#[derive(Clone, Copy)]
struct Candidate {
    feature: usize,
    bin: usize,
    gain: f64,
}

struct TreeFit<'a> {
    bins: &'a [Vec<usize>],
    binner: &'a Binner,
    g: &'a [f64],
    h: &'a [f64],
    lambda: f64,
    min_leaf: usize,
}

impl TreeFit<'_> {
    fn sums(&self, idx: &[usize]) -> (f64, f64) {
        idx.iter()
            .fold((0.0, 0.0), |(g, h), &i| (g + self.g[i], h + self.h[i]))
    }

    fn leaf(&self, idx: &[usize]) -> Node {
        let (g, h) = self.sums(idx);
        Node::Leaf {
            value: vec![-g / (h + self.lambda)],
        }
    }

    /// Best split of the (ascending) rows `idx`; features and bins scanned
    /// ascending, only strictly larger gains replace.
    fn best(&self, idx: &[usize]) -> Option<Candidate> {
        let n = idx.len();
        if n < 2 * self.min_leaf {
            return None;
        }
        let (g, h) = self.sums(idx);
        let mut best: Option<Candidate> = None;
        for (f, col) in self.bins.iter().enumerate() {
            let nb = self.binner.n_bins(f);
            if nb < 2 {
                continue;
            }
            let mut hg = vec![0.0; nb];
            let mut hh = vec![0.0; nb];
            let mut hc = vec![0usize; nb];
            for &i in idx {
                let b = col[i];
                hg[b] += self.g[i];
                hh[b] += self.h[i];
                hc[b] += 1;
            }
            let (mut gl, mut hl, mut cl) = (0.0, 0.0, 0usize);
            for b in 0..nb - 1 {
                gl += hg[b];
                hl += hh[b];
                cl += hc[b];
                if hc[b] == 0 || cl < self.min_leaf {
                    continue;
                }
                if n - cl < self.min_leaf {
                    break;
                }
                let gain = gbdt_gain(gl, hl, g - gl, h - hl, self.lambda);
                if gain > 0.0 && best.map_or(true, |c| gain > c.gain) {
                    best = Some(Candidate { feature: f, bin: b, gain });
                }
            }
        }
        best
    }

    fn partition(&self, idx: &[usize], c: Candidate) -> (Vec<usize>, Vec<usize>) {
        idx.iter().partition(|&&i| self.bins[c.feature][i] <= c.bin)
    }

    fn split_node(&self, c: Candidate, left: usize, right: usize) -> Node {
        Node::Split {
            feature: c.feature,
            threshold: self.binner.edges[c.feature][c.bin],
            left,
            right,
        }
    }

    fn depth_wise(&self, idx: Vec<usize>, max_depth: Option<usize>) -> Tree {
        fn grow(t: &TreeFit, nodes: &mut Vec<Node>, idx: Vec<usize>, depth: usize, max: Option<usize>) -> usize {
            let at = nodes.len();
            nodes.push(t.leaf(&idx));
            if max.map_or(false, |m| depth >= m) {
                return at;
            }
            if let Some(c) = t.best(&idx) {
                let (l, r) = t.partition(&idx, c);
                let li = grow(t, nodes, l, depth + 1, max);
                let ri = grow(t, nodes, r, depth + 1, max);
                nodes[at] = t.split_node(c, li, ri);
            }
            at
        }
        let mut nodes = Vec::new();
        grow(self, &mut nodes, idx, 0, max_depth);
        Tree { nodes }
    }

    fn leaf_wise(&self, idx: Vec<usize>, num_leaves: usize, max_depth: Option<usize>) -> Tree {
        struct Open {
            node: usize,
            depth: usize,
            idx: Vec<usize>,
            cand: Option<Candidate>,
        }
        let cand = |idx: &[usize], depth: usize| {
            if max_depth.map_or(false, |m| depth >= m) {
                None
            } else {
                self.best(idx)
            }
        };
        let mut nodes = vec![self.leaf(&idx)];
        let mut open = vec![Open {
            node: 0,
            cand: cand(&idx, 0),
            depth: 0,
            idx,
        }];
        let mut leaves = 1;
        while leaves < num_leaves {
            // largest gain; the earliest-created leaf wins ties
            let mut pick: Option<usize> = None;
            for (k, o) in open.iter().enumerate() {
                if let Some(c) = o.cand {
                    if pick.map_or(true, |p| c.gain > open[p].cand.unwrap().gain) {
                        pick = Some(k);
                    }
                }
            }
            let Some(k) = pick else { break };
            let o = open.remove(k);
            let c = o.cand.unwrap();
            let (l, r) = self.partition(&o.idx, c);
            let (li, ri) = (nodes.len(), nodes.len() + 1);
            nodes.push(self.leaf(&l));
            nodes.push(self.leaf(&r));
            nodes[o.node] = self.split_node(c, li, ri);
            for (node, part) in [(li, l), (ri, r)] {
                open.push(Open {
                    node,
                    cand: cand(&part, o.depth + 1),
                    depth: o.depth + 1,
                    idx: part,
                });
            }
            leaves += 1;
        }
        Tree { nodes }
    }
}

fn log_loss(scores: &[Vec<f64>], y: &[usize]) -> f64 {
    let mut p = Vec::new();
    scores
        .iter()
        .zip(y)
        .map(|(s, &c)| {
            p.clear();
            p.extend_from_slice(s);
            softmax_in_place(&mut p);
            -p[c].max(1e-300).ln()
        })
        .sum::<f64>()
        / y.len() as f64
}

/// Newton-boosted trees with softmax gradients, `K` trees per round.
pub fn fit_gbdt(x: &[Vec<f64>], y: &[usize], params: &GbdtParams) -> Result<GbdtModel> {
    params.validate()?;
    let d = check_xy(x, y, params.n_classes)?;
    let n = x.len();
    let k = params.n_classes;
    let binner = Binner::fit(x, params.binning);
    let bins: Vec<Vec<usize>> = (0..d)
        .map(|f| x.iter().map(|r| binner.bin(f, r[f])).collect())
        .collect();

    let mut counts = vec![0usize; k];
    y.iter().for_each(|&c| counts[c] += 1);
    // an absent class gets a very small but finite prior
    let init: Vec<f64> = counts
        .iter()
        .map(|&c| if c > 0 { (c as f64 / n as f64).ln() } else { -30.0 })
        .collect();
    let mut scores = vec![init.clone(); n];
    let mut train_loss = vec![log_loss(&scores, y)];
    let mut trees = Vec::with_capacity(params.rounds);
    let mut g = vec![0.0; n];
    let mut h = vec![0.0; n];
    let mut probs = vec![vec![0.0; k]; n];
    let rows: Vec<usize> = (0..n).collect();
    for _ in 0..params.rounds {
        for (p, s) in probs.iter_mut().zip(&scores) {
            p.copy_from_slice(s);
            softmax_in_place(p);
        }
        let mut round = Vec::with_capacity(k);
        for class in 0..k {
            for i in 0..n {
                let p = probs[i][class];
                g[i] = p - if y[i] == class { 1.0 } else { 0.0 };
                h[i] = (p * (1.0 - p)).max(1e-16);
            }
            let fit = TreeFit {
                bins: &bins,
                binner: &binner,
                g: &g,
                h: &h,
                lambda: params.lambda,
                min_leaf: params.min_samples_leaf.max(1),
            };
            let tree = match params.growth {
                Growth::DepthWise { max_depth } => fit.depth_wise(rows.clone(), max_depth),
                Growth::LeafWise { num_leaves, max_depth } => fit.leaf_wise(rows.clone(), num_leaves, max_depth),
            };
            round.push(tree);
        }
        for (s, row) in scores.iter_mut().zip(x) {
            for (c, t) in round.iter().enumerate() {
                s[c] += params.learning_rate * t.predict(row)[0];
            }
        }
        train_loss.push(log_loss(&scores, y));
        trees.push(round);
    }
    Ok(GbdtModel {
        n_features: d,
        n_classes: k,
        learning_rate: params.learning_rate,
        init,
        trees,
        binner,
        params: params.clone(),
        train_loss,
    })
}

/// [`fit_gbdt`] over at most `max_bins` quantile bins per feature.
pub fn fit_hist_gbdt(x: &[Vec<f64>], y: &[usize], params: &GbdtParams, max_bins: usize) -> Result<GbdtModel> {
    fit_gbdt(
        x,
        y,
        &GbdtParams {
            binning: Binning::Hist { max_bins },
            ..params.clone()
        },
    )
}

impl GbdtModel {
    pub fn raw_scores(&self, row: &[f64]) -> Vec<f64> {
        let mut s = self.init.clone();
        for round in &self.trees {
            for (c, t) in round.iter().enumerate() {
                s[c] += self.learning_rate * t.predict(row)[0];
            }
        }
        s
    }

    pub fn predict_proba(&self, x: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        check_width(x, self.n_features)?;
        Ok(x
            .iter()
            .map(|r| {
                let mut s = self.raw_scores(r);
                softmax_in_place(&mut s);
                s
            })
            .collect())
    }

    pub fn predict(&self, x: &[Vec<f64>]) -> Result<Vec<usize>> {
        Ok(self.predict_proba(x)?.iter().map(|p| argmax(p)).collect())
    }
}
