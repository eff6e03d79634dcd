use super::ScanpathSample;
use crate::numeric::{mean, median, std_pop};

/// Length of [`featurize_summary`] output.
pub const SUMMARY_WIDTH: usize = 20;

/// Summary statistics per channel, in channel order `(x, y, duration, pupil)`
/// and statistic order `(mean, population std, min, max, median)`.
pub fn featurize_summary(sample: &ScanpathSample) -> Vec<f64> {
    let mut out = Vec::with_capacity(SUMMARY_WIDTH);
    for c in 0..4 {
        let v = sample.channel(c);
        out.push(mean(&v));
        out.push(std_pop(&v));
        out.push(v.iter().copied().fold(f64::INFINITY, f64::min));
        out.push(v.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        out.push(median(&v));
    }
    out
}

/// A scanpath cut or zero-padded to a fixed number of steps.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedLengthSeq {
    pub len: usize,
    /// Channel-major, `4 × len`.
    pub values: Vec<f64>,
    /// `1.0` on real fixations, `0.0` on padding.
    pub mask: Vec<f64>,
}

/// Keeps the first `t` fixations and zero-pads shorter sequences at the tail.
pub fn to_fixed_length(sample: &ScanpathSample, t: usize) -> FixedLengthSeq {
    assert!(t >= 1, "fixed length must be positive");
    let mut values = vec![0.0; 4 * t];
    let mut mask = vec![0.0; t];
    for (i, f) in sample.fixations.iter().take(t).enumerate() {
        for (c, v) in f.channels().into_iter().enumerate() {
            values[c * t + i] = v;
        }
        mask[i] = 1.0;
    }
    FixedLengthSeq {
        len: t,
        values,
        mask,
    }
}
