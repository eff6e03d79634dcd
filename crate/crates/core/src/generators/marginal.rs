use serde::{Deserialize, Serialize};

use crate::numeric::{std_normal_cdf, std_normal_quantile};

/// Empirical marginal of one continuous column.
///
/// The CDF is piecewise linear in the order statistics: the `i`-th sorted
/// value sits at probability `(i + 0.5) / n` (tied values share the mid
/// position of their run), so both directions are monotone, continuous and
/// strictly inside `(0, 1)`. The inverse clamps to `[min, max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalModel {
    pub column: usize,
    pub sorted: Vec<f64>,
}

impl MarginalModel {
    pub fn fit(column: usize, values: &[f64]) -> Self {
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        MarginalModel { column, sorted }
    }

    pub fn n(&self) -> usize {
        self.sorted.len()
    }

    pub fn min(&self) -> f64 {
        self.sorted[0]
    }

    pub fn max(&self) -> f64 {
        self.sorted[self.n() - 1]
    }

    pub fn distinct(&self) -> usize {
        1 + self.sorted.windows(2).filter(|w| w[1] > w[0]).count()
    }

    fn position(&self, x: f64) -> f64 {
        let s = &self.sorted;
        let n = s.len();
        let lo = s.partition_point(|&v| v < x);
        let hi = s.partition_point(|&v| v <= x);
        if hi > lo {
            // x is a sample value; mid position of its tie run
            return (lo + hi - 1) as f64 / 2.0;
        }
        if lo == 0 {
            return 0.0;
        }
        if lo == n {
            return (n - 1) as f64;
        }
        let (a, b) = (s[lo - 1], s[lo]);
        (lo - 1) as f64 + (x - a) / (b - a)
    }

    /// Probability in `(0, 1)`.
    pub fn cdf(&self, x: f64) -> f64 {
        (self.position(x) + 0.5) / self.n() as f64
    }

    pub fn inverse_cdf(&self, u: f64) -> f64 {
        let n = self.n();
        let pos = (u * n as f64 - 0.5).clamp(0.0, (n - 1) as f64);
        let i = pos.floor() as usize;
        if i + 1 >= n {
            return self.sorted[n - 1];
        }
        let f = pos - i as f64;
        let (a, b) = (self.sorted[i], self.sorted[i + 1]);
        (a + f * (b - a)).clamp(a, b)
    }

    /// `Φ⁻¹(F(x))`.
    pub fn to_normal(&self, x: f64) -> f64 {
        // cdf is strictly inside (0, 1) by construction
        std_normal_quantile(self.cdf(x)).expect("marginal cdf in (0, 1)")
    }

    /// `F⁻¹(Φ(z))`.
    pub fn from_normal(&self, z: f64) -> f64 {
        self.inverse_cdf(std_normal_cdf(z))
    }
}
