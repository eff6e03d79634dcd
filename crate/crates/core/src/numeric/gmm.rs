use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::RngState;
use crate::error::{Error, Result};

/// Lower bound applied to every component standard deviation.
pub const STD_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixture1D {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl GaussianMixture1D {
    pub fn k(&self) -> usize {
        self.weights.len()
    }

    fn log_joint(&self, x: f64, out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            let w = self.weights[j];
            *o = if w > 0.0 {
                let s = self.stds[j];
                let z = (x - self.means[j]) / s;
                w.ln() - 0.5 * z * z - s.ln() - 0.5 * (2.0 * PI).ln()
            } else {
                f64::NEG_INFINITY
            };
        }
    }

    /// Log density of the mixture at `x`.
    pub fn log_pdf(&self, x: f64) -> f64 {
        let mut lj = vec![0.0; self.k()];
        self.log_joint(x, &mut lj);
        log_sum_exp(&lj)
    }

    /// Posterior component probabilities at `x`.
    pub fn responsibilities(&self, x: f64) -> Vec<f64> {
        let mut lj = vec![0.0; self.k()];
        self.log_joint(x, &mut lj);
        let lse = log_sum_exp(&lj);
        lj.iter().map(|l| (l - lse).exp()).collect()
    }

    pub fn log_likelihood(&self, xs: &[f64]) -> f64 {
        xs.iter().map(|&x| self.log_pdf(x)).sum()
    }

    /// Drops components below `min_weight` and renormalises. At least the
    /// heaviest component is always kept.
    pub fn pruned(&self, min_weight: f64) -> GaussianMixture1D {
        let heaviest = super::argmax(&self.weights);
        let keep: Vec<usize> = (0..self.k())
            .filter(|&j| self.weights[j] >= min_weight || j == heaviest)
            .collect();
        let total: f64 = keep.iter().map(|&j| self.weights[j]).sum();
        GaussianMixture1D {
            weights: keep.iter().map(|&j| self.weights[j] / total).collect(),
            means: keep.iter().map(|&j| self.means[j]).collect(),
            stds: keep.iter().map(|&j| self.stds[j]).collect(),
        }
    }
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Fitted mixture plus the log-likelihood after each E-step.
#[derive(Debug, Clone)]
pub struct GmmFit {
    pub mixture: GaussianMixture1D,
    pub log_likelihoods: Vec<f64>,
}

/// EM for a 1-D Gaussian mixture with k-means++ seeding.
pub fn gmm_fit_em(
    samples: &[f64],
    k: usize,
    max_iter: usize,
    tol: f64,
    rng: &mut RngState,
) -> Result<GaussianMixture1D> {
    gmm_fit_em_traced(samples, k, max_iter, tol, rng).map(|f| f.mixture)
}

pub fn gmm_fit_em_traced(
    samples: &[f64],
    k: usize,
    max_iter: usize,
    tol: f64,
    rng: &mut RngState,
) -> Result<GmmFit> {
    let n = samples.len();
    if k == 0 {
        return Err(Error::InvalidConfig("mixture needs k >= 1".into()));
    }
    if n < k {
        return Err(Error::InsufficientData { needed: k, got: n });
    }
    if let Some(bad) = samples.iter().find(|x| !x.is_finite()) {
        return Err(Error::Domain {
            value: *bad,
            domain: "finite reals",
        });
    }

    let overall_std = super::std_pop(samples).max(STD_FLOOR);
    let mut mix = GaussianMixture1D {
        weights: vec![1.0 / k as f64; k],
        means: kmeans_pp_seeds(samples, k, rng),
        stds: vec![overall_std; k],
    };

    let mut resp = vec![0.0; n * k];
    let mut lj = vec![0.0; k];
    let mut trace = Vec::new();
    for iter in 0..=max_iter {
        // E-step
        let mut ll = 0.0;
        for (i, &x) in samples.iter().enumerate() {
            mix.log_joint(x, &mut lj);
            let lse = log_sum_exp(&lj);
            ll += lse;
            for j in 0..k {
                resp[i * k + j] = (lj[j] - lse).exp();
            }
        }
        let converged = trace
            .last()
            .is_some_and(|prev: &f64| (ll - prev).abs() < tol);
        trace.push(ll);
        if converged || iter == max_iter {
            break;
        }

        // M-step
        for j in 0..k {
            let nk: f64 = (0..n).map(|i| resp[i * k + j]).sum();
            mix.weights[j] = nk / n as f64;
            if nk <= 0.0 {
                continue;
            }
            let mean = (0..n).map(|i| resp[i * k + j] * samples[i]).sum::<f64>() / nk;
            let var = (0..n)
                .map(|i| resp[i * k + j] * (samples[i] - mean).powi(2))
                .sum::<f64>()
                / nk;
            mix.means[j] = mean;
            mix.stds[j] = var.sqrt().max(STD_FLOOR);
        }
        let wsum: f64 = mix.weights.iter().sum();
        mix.weights.iter_mut().for_each(|w| *w /= wsum);
    }
    Ok(GmmFit {
        mixture: mix,
        log_likelihoods: trace,
    })
}

fn kmeans_pp_seeds(samples: &[f64], k: usize, rng: &mut RngState) -> Vec<f64> {
    let mut centers = vec![samples[rng.below(samples.len())]];
    let mut d2: Vec<f64> = samples.iter().map(|x| (x - centers[0]).powi(2)).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let c = if total > 0.0 {
            samples[rng.categorical(&d2)]
        } else {
            samples[rng.below(samples.len())]
        };
        centers.push(c);
        for (d, x) in d2.iter_mut().zip(samples) {
            *d = d.min((x - c).powi(2));
        }
    }
    centers
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_samples_hit_the_floor() {
        let xs = vec![5.0; 40];
        let m = gmm_fit_em(&xs, 1, 100, 1e-9, &mut RngState::new(1)).unwrap();
        assert_eq!(m.means, vec![5.0]);
        assert_eq!(m.stds, vec![STD_FLOOR]);
        assert_eq!(m.weights, vec![1.0]);
    }

    #[test]
    fn single_component_is_sample_mean() {
        let mut r = RngState::new(8);
        let xs: Vec<f64> = (0..300).map(|_| r.normal() * 3.0 + r.uniform() * 10.0).collect();
        let m = gmm_fit_em(&xs, 1, 50, 1e-12, &mut RngState::new(2)).unwrap();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        assert!((m.means[0] - mean).abs() < 1e-9);
    }

    #[test]
    fn separated_clusters_are_recovered() {
        // planted parameters: N(0, 0.5²) and N(10, 0.5²), equal mass
        let mut r = RngState::new(99);
        let xs: Vec<f64> = (0..1000)
            .map(|i| if i % 2 == 0 { 0.0 } else { 10.0 } + 0.5 * r.normal())
            .collect();
        let m = gmm_fit_em(&xs, 2, 200, 1e-9, &mut RngState::new(4)).unwrap();
        let mut means = m.means.clone();
        means.sort_by(f64::total_cmp);
        assert!((means[0] - 0.0).abs() < 0.1, "{means:?}");
        assert!((means[1] - 10.0).abs() < 0.1, "{means:?}");
        assert!((m.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn too_few_samples() {
        assert!(matches!(
            gmm_fit_em(&[1.0, 2.0], 3, 10, 1e-6, &mut RngState::new(0)),
            Err(Error::InsufficientData { needed: 3, got: 2 })
        ));
    }

    #[test]
    fn pruning_renormalises() {
        let m = GaussianMixture1D {
            weights: vec![0.7, 0.299, 0.001],
            means: vec![0.0, 1.0, 2.0],
            stds: vec![1.0; 3],
        };
        let p = m.pruned(0.005);
        assert_eq!(p.k(), 2);
        assert!((p.weights.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }
}
