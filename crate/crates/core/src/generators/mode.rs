use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::numeric::{gmm_fit_em, GaussianMixture1D, RngState};

/// Offsets are expressed in units of `SCALE` component standard deviations.
pub const SCALE: f64 = 4.0;

/// Mode-specific normalisation of one continuous column: a value is
/// represented by a mixture component and its offset
/// `α = (x − μ_m) / (4σ_m)`, clamped to `[−1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeNormalizer {
    pub column: usize,
    pub mixture: GaussianMixture1D,
}

impl ModeNormalizer {
    /// EM fit with up to `max_modes` components (never more than the number
    /// of distinct values); components lighter than `min_weight` are pruned.
    pub fn fit(
        column: usize,
        values: &[f64],
        max_modes: usize,
        min_weight: f64,
        rng: &mut RngState,
    ) -> Result<Self> {
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        sorted.dedup();
        let k = max_modes.min(sorted.len()).max(1);
        let mixture = gmm_fit_em(values, k, 100, 1e-6, rng)?.pruned(min_weight);
        Ok(ModeNormalizer { column, mixture })
    }

    pub fn k(&self) -> usize {
        self.mixture.k()
    }

    pub fn alpha(&self, x: f64, mode: usize) -> f64 {
        ((x - self.mixture.means[mode]) / (SCALE * self.mixture.stds[mode])).clamp(-1.0, 1.0)
    }

    /// Mode drawn from the posterior responsibilities at `x`.
    pub fn encode(&self, x: f64, rng: &mut RngState) -> (usize, f64) {
        let mode = rng.categorical(&self.mixture.responsibilities(x));
        (mode, self.alpha(x, mode))
    }

    /// Most probable mode.
    pub fn encode_map(&self, x: f64) -> (usize, f64) {
        let mode = crate::numeric::argmax(&self.mixture.responsibilities(x));
        (mode, self.alpha(x, mode))
    }

    pub fn decode(&self, mode: usize, alpha: f64) -> f64 {
        self.mixture.means[mode] + SCALE * self.mixture.stds[mode] * alpha
    }
}
