//! Tree ensembles over dense feature rows.

mod cart;
mod forest;
mod gbdt;

use serde::{Deserialize, Serialize};

pub use cart::{best_gini_split, fit_cart, gini, CartParams, Split};
pub use forest::{fit_random_forest, ForestModel, ForestParams};
pub use gbdt::{
    fit_gbdt, fit_hist_gbdt, gbdt_gain, Binner, Binning, GbdtModel, GbdtParams, Growth,
};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "lowercase")]
pub enum Node {
    /// `x[feature] <= threshold` goes to `left`.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    /// Class distribution (classification) or a single score (regression).
    Leaf { value: Vec<f64> },
}

/// A tree stored as a node arena; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf(value: Vec<f64>) -> Self {
        Tree {
            nodes: vec![Node::Leaf { value }],
        }
    }

    pub fn predict(&self, x: &[f64]) -> &[f64] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[*feature] <= *threshold { *left } else { *right },
                Node::Leaf { value } => return value,
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            match &t.nodes[i] {
                Node::Split { left, right, .. } => 1 + go(t, *left).max(go(t, *right)),
                Node::Leaf { .. } => 0,
            }
        }
        go(self, 0)
    }
}

pub(crate) fn check_xy(x: &[Vec<f64>], y: &[usize], n_classes: usize) -> Result<usize> {
    if x.is_empty() || x.len() != y.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} feature rows for {} labels",
            x.len(),
            y.len()
        )));
    }
    let d = x[0].len();
    check_width(x, d)?;
    if let Some(&bad) = y.iter().find(|&&c| c >= n_classes) {
        return Err(Error::InvalidConfig(format!(
            "label {bad} outside 0..{n_classes}"
        )));
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Domain {
            value: f64::NAN,
            domain: "finite features",
        });
    }
    Ok(d)
}

pub(crate) fn check_width(x: &[Vec<f64>], d: usize) -> Result<()> {
    match x.iter().find(|r| r.len() != d) {
        Some(r) => Err(Error::FeatureWidthMismatch {
            expected: d,
            got: r.len(),
        }),
        None => Ok(()),
    }
}

/// Midpoint of two adjacent distinct values that still sends `a` left and
/// `b` right.
pub(crate) fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    if m >= b {
        a
    } else {
        m
    }
}
