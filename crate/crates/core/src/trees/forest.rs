use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cart::{fit_cart_on, CartParams};
use super::{check_width, check_xy, Tree};
use crate::error::{Error, Result};
use crate::numeric::{argmax, RngState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_trees: usize,
    pub n_classes: usize,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    /// Features per split; `None` means `⌈√d⌉`.
    pub max_features: Option<usize>,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 200,
            n_classes: 4,
            max_depth: None,
            min_samples_leaf: 1,
            max_features: None,
            bootstrap: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub n_features: usize,
    pub n_classes: usize,
    pub max_features: usize,
    /// Seed of each tree's generator, recorded for reproducibility.
    pub tree_seeds: Vec<(u64, u64)>,
    pub trees: Vec<Tree>,
}

/// Random forest: bootstrap resamples, per-split feature subsampling, tree
/// `i` driven by `rng.split(i)`. Trees are fitted in parallel.
pub fn fit_random_forest(
    x: &[Vec<f64>],
    y: &[usize],
    params: &ForestParams,
    rng: &RngState,
) -> Result<ForestModel> {
    if params.n_trees == 0 {
        return Err(Error::InvalidConfig("a forest needs at least one tree".into()));
    }
    let d = check_xy(x, y, params.n_classes)?;
    let m = params
        .max_features
        .unwrap_or_else(|| (d as f64).sqrt().ceil() as usize)
        .clamp(1, d);
    let cart = CartParams {
        n_classes: params.n_classes,
        max_depth: params.max_depth,
        min_samples_leaf: params.min_samples_leaf,
        max_features: Some(m),
    };
    let n = x.len();
    let trees: Vec<(Tree, (u64, u64))> = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut r = rng.split(t as u64);
            let id = (r.seed(), r.stream());
            let sample = if params.bootstrap {
                (0..n).map(|_| r.below(n)).collect()
            } else {
                (0..n).collect()
            };
            (fit_cart_on(x, y, sample, &cart, &mut r), id)
        })
        .collect();
    let (trees, tree_seeds) = trees.into_iter().unzip();
    Ok(ForestModel {
        n_features: d,
        n_classes: params.n_classes,
        max_features: m,
        tree_seeds,
        trees,
    })
}

impl ForestModel {
    /// Vote fractions per class; each tree votes for its leaf's majority
    /// class (lowest index on ties).
    pub fn predict_proba(&self, x: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        check_width(x, self.n_features)?;
        let share = 1.0 / self.trees.len() as f64;
        Ok(x
            .iter()
            .map(|row| {
                let mut votes = vec![0usize; self.n_classes];
                for t in &self.trees {
                    votes[argmax(t.predict(row))] += 1;
                }
                votes.iter().map(|&v| v as f64 * share).collect()
            })
            .collect())
    }

    pub fn predict(&self, x: &[Vec<f64>]) -> Result<Vec<usize>> {
        Ok(self.predict_proba(x)?.iter().map(|p| argmax(p)).collect())
    }
}
