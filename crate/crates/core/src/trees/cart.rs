use super::{check_xy, midpoint, Node, Tree};
use crate::error::Result;
use crate::numeric::RngState;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CartParams {
    pub n_classes: usize,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    /// Features examined per split; `None` examines all of them.
    pub max_features: Option<usize>,
}

impl Default for CartParams {
    fn default() -> Self {
        CartParams {
            n_classes: 4,
            max_depth: None,
            min_samples_leaf: 1,
            max_features: None,
        }
    }
}

pub fn gini(counts: &[usize]) -> f64 {
    let n: usize = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
    /// Weighted impurity decrease.
    pub gain: f64,
}

/// Best Gini split of the rows `idx` over `features` (scanned in the given
/// order, thresholds ascending; only strictly better gains replace).
pub fn best_gini_split(
    x: &[Vec<f64>],
    y: &[usize],
    idx: &[usize],
    features: &[usize],
    n_classes: usize,
    min_leaf: usize,
) -> Option<Split> {
    let n = idx.len();
    let mut total = vec![0usize; n_classes];
    idx.iter().for_each(|&i| total[y[i]] += 1);
    let parent = gini(&total);
    let mut best: Option<Split> = None;
    let mut order = idx.to_vec();
    let mut left = vec![0usize; n_classes];
    let mut right = vec![0usize; n_classes];
    for &f in features {
        order.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]));
        left.iter_mut().for_each(|c| *c = 0);
        right.copy_from_slice(&total);
        for p in 0..n - 1 {
            let c = y[order[p]];
            left[c] += 1;
            right[c] -= 1;
            let (a, b) = (x[order[p]][f], x[order[p + 1]][f]);
            if a == b || p + 1 < min_leaf || n - p - 1 < min_leaf {
                continue;
            }
            let nl = (p + 1) as f64;
            let nr = (n - p - 1) as f64;
            let gain = parent - (nl * gini(&left) + nr * gini(&right)) / n as f64;
            if best.map_or(true, |s| gain > s.gain) {
                best = Some(Split {
                    feature: f,
                    threshold: midpoint(a, b),
                    gain,
                });
            }
        }
    }
    best
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [usize],
    params: &'a CartParams,
    d: usize,
    nodes: Vec<Node>,
}

impl Builder<'_> {
    fn distribution(&self, idx: &[usize]) -> (Vec<usize>, Vec<f64>) {
        let mut counts = vec![0usize; self.params.n_classes];
        idx.iter().for_each(|&i| counts[self.y[i]] += 1);
        let n = idx.len() as f64;
        let dist = counts.iter().map(|&c| c as f64 / n).collect();
        (counts, dist)
    }

    fn choose_split(&self, idx: &[usize], rng: &mut RngState) -> Option<Split> {
        let min_leaf = self.params.min_samples_leaf.max(1);
        match self.params.max_features {
            Some(m) if m < self.d => {
                // sample m features; keep drawing past m only while none of
                // the drawn ones admits a split
                let mut perm: Vec<usize> = (0..self.d).collect();
                rng.shuffle(&mut perm);
                let mut drawn: Vec<usize> = perm[..m].to_vec();
                drawn.sort_unstable();
                let mut best = best_gini_split(self.x, self.y, idx, &drawn, self.params.n_classes, min_leaf);
                let mut k = m;
                while best.is_none() && k < self.d {
                    best = best_gini_split(self.x, self.y, idx, &perm[k..k + 1], self.params.n_classes, min_leaf);
                    k += 1;
                }
                best
            }
            _ => {
                let all: Vec<usize> = (0..self.d).collect();
                best_gini_split(self.x, self.y, idx, &all, self.params.n_classes, min_leaf)
            }
        }
    }

    fn grow(&mut self, idx: Vec<usize>, depth: usize, rng: &mut RngState) -> usize {
        let at = self.nodes.len();
        let (counts, dist) = self.distribution(&idx);
        self.nodes.push(Node::Leaf { value: dist });
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let depth_ok = self.params.max_depth.map_or(true, |m| depth < m);
        if pure || !depth_ok || idx.len() < 2 * self.params.min_samples_leaf.max(1) {
            return at;
        }
        let Some(split) = self.choose_split(&idx, rng) else {
            return at;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = idx
            .iter()
            .partition(|&&i| self.x[i][split.feature] <= split.threshold);
        let left = self.grow(l, depth + 1, rng);
        let right = self.grow(r, depth + 1, rng);
        self.nodes[at] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        at
    }
}

/// Classification tree on the rows `sample` (duplicates allowed, as in a
/// bootstrap draw). Leaves hold class fractions.
pub(crate) fn fit_cart_on(
    x: &[Vec<f64>],
    y: &[usize],
    sample: Vec<usize>,
    params: &CartParams,
    rng: &mut RngState,
) -> Tree {
    let mut b = Builder {
        x,
        y,
        params,
        d: x[0].len(),
        nodes: Vec::new(),
    };
    b.grow(sample, 0, rng);
    Tree { nodes: b.nodes }
}

pub fn fit_cart(x: &[Vec<f64>], y: &[usize], params: &CartParams, rng: &mut RngState) -> Result<Tree> {
    check_xy(x, y, params.n_classes)?;
    Ok(fit_cart_on(x, y, (0..x.len()).collect(), params, rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::argmax;

    fn params(k: usize, depth: Option<usize>) -> CartParams {
        CartParams {
            n_classes: k,
            max_depth: depth,
            ..CartParams::default()
        }
    }

    #[test]
    fn gini_extremes() {
        assert_eq!(gini(&[5, 0, 0]), 0.0);
        assert!((gini(&[3, 3, 3, 3]) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn pure_labels_give_a_single_leaf() {
        let x = vec![vec![1.0], vec![2.0], vec![3.0]];
        let t = fit_cart(&x, &[2, 2, 2], &params(3, None), &mut RngState::new(0)).unwrap();
        assert_eq!(t.nodes.len(), 1);
        assert_eq!(argmax(t.predict(&[9.0])), 2);
    }

    #[test]
    fn threshold_separable_gives_depth_one() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let y: Vec<usize> = (0..10).map(|i| usize::from(i >= 6)).collect();
        let t = fit_cart(&x, &y, &params(2, None), &mut RngState::new(0)).unwrap();
        assert_eq!(t.depth(), 1);
        assert_eq!(t.nodes[0], Node::Split { feature: 0, threshold: 5.5, left: 1, right: 2 });
        for (xi, &yi) in x.iter().zip(&y) {
            assert_eq!(argmax(t.predict(xi)), yi);
        }
    }

    fn brute_best(x: &[Vec<f64>], y: &[usize], k: usize) -> (f64, usize, f64) {
        // every (feature, midpoint) pair, impurity decrease from scratch
        let n = y.len() as f64;
        let mut counts = vec![0; k];
        y.iter().for_each(|&c| counts[c] += 1);
        let parent = gini(&counts);
        let mut best = (f64::NEG_INFINITY, 0, 0.0);
        for f in 0..x[0].len() {
            let mut vals: Vec<f64> = x.iter().map(|r| r[f]).collect();
            vals.sort_by(f64::total_cmp);
            vals.dedup();
            for w in vals.windows(2) {
                let t = (w[0] + w[1]) / 2.0;
                let mut l = vec![0; k];
                let mut r = vec![0; k];
                for (xi, &yi) in x.iter().zip(y) {
                    if xi[f] <= t { l[yi] += 1 } else { r[yi] += 1 }
                }
                let nl: usize = l.iter().sum();
                let nr: usize = r.iter().sum();
                let g = parent - (nl as f64 * gini(&l) + nr as f64 * gini(&r)) / n;
                if g > best.0 + 1e-12 {
                    best = (g, f, t);
                }
            }
        }
        best
    }

    #[test]
    fn xor_is_solved_at_depth_two_and_root_matches_brute_force() {
        let x = vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]];
        let y = vec![0, 1, 1, 0];
        let t = fit_cart(&x, &y, &params(2, Some(2)), &mut RngState::new(0)).unwrap();
        for (xi, &yi) in x.iter().zip(&y) {
            assert_eq!(argmax(t.predict(xi)), yi);
        }
        let s = best_gini_split(&x, &y, &[0, 1, 2, 3], &[0, 1], 2, 1).unwrap();
        let (g, f, th) = brute_best(&x, &y, 2);
        assert!((s.gain - g).abs() < 1e-12);
        assert_eq!((s.feature, s.threshold), (f, th));
    }

    #[test]
    fn best_split_matches_brute_force_on_random_data() {
        let mut r = RngState::new(4);
        for _ in 0..50 {
            let n = 5 + r.below(20);
            let d = 1 + r.below(4);
            let x: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| r.below(6) as f64).collect()).collect();
            let y: Vec<usize> = (0..n).map(|_| r.below(3)).collect();
            let idx: Vec<usize> = (0..n).collect();
            let feats: Vec<usize> = (0..d).collect();
            let ours = best_gini_split(&x, &y, &idx, &feats, 3, 1);
            let (g, _, _) = brute_best(&x, &y, 3);
            match ours {
                Some(s) => assert!((s.gain - g).abs() < 1e-12),
                None => assert_eq!(g, f64::NEG_INFINITY),
            }
        }
    }

    #[test]
    fn min_samples_leaf_is_respected() {
        let mut r = RngState::new(2);
        let x: Vec<Vec<f64>> = (0..60).map(|_| vec![r.normal(), r.normal()]).collect();
        let y: Vec<usize> = (0..60).map(|_| r.below(2)).collect();
        let p = CartParams { n_classes: 2, min_samples_leaf: 7, ..CartParams::default() };
        let t = fit_cart(&x, &y, &p, &mut RngState::new(0)).unwrap();
        let mut per_leaf = std::collections::HashMap::new();
        for xi in &x {
            *per_leaf.entry(t.predict(xi).as_ptr() as usize).or_insert(0) += 1;
        }
        assert!(per_leaf.values().all(|&c| c >= 7));
    }
}
