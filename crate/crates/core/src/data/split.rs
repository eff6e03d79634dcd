use serde::{Deserialize, Serialize};

use super::{Dataset, TaskLabel};
use crate::error::{Error, Result};
use crate::numeric::RngState;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub stratified: bool,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_fraction: 0.8,
            stratified: true,
            seed: 0,
        }
    }
}

fn train_count(n: usize, fraction: f64) -> usize {
    ((n as f64 * fraction).round() as usize).clamp(1, n - 1)
}

/// Train/holdout partition. With `stratified`, each task is split on its
/// own so per-task train counts are within one sample of the exact fraction.
/// Both halves keep the original sample order.
pub fn stratified_split(dataset: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset)> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "train fraction {} outside (0, 1)",
            spec.train_fraction
        )));
    }
    let mut rng = RngState::new(spec.seed);
    let mut in_train = vec![false; dataset.len()];
    if spec.stratified {
        let counts = dataset.task_counts();
        for task in TaskLabel::ALL {
            let c = counts[task.index()];
            if c < 2 {
                return Err(Error::TooFewSamples {
                    task: task.code(),
                    count: c,
                    needed: 2,
                });
            }
        }
        for task in TaskLabel::ALL {
            let mut idx: Vec<usize> = (0..dataset.len())
                .filter(|&i| dataset.samples[i].task == task)
                .collect();
            let k = train_count(idx.len(), spec.train_fraction);
            rng.shuffle(&mut idx);
            for &i in &idx[..k] {
                in_train[i] = true;
            }
        }
    } else {
        if dataset.len() < 2 {
            return Err(Error::InsufficientData {
                needed: 2,
                got: dataset.len(),
            });
        }
        let mut idx: Vec<usize> = (0..dataset.len()).collect();
        let k = train_count(idx.len(), spec.train_fraction);
        rng.shuffle(&mut idx);
        for &i in &idx[..k] {
            in_train[i] = true;
        }
    }
    let pick = |want: bool| Dataset {
        samples: dataset
            .samples
            .iter()
            .zip(&in_train)
            .filter(|(_, &t)| t == want)
            .map(|(s, _)| s.clone())
            .collect(),
        provenance: dataset.provenance,
        recording_rate_hz: dataset.recording_rate_hz,
    };
    Ok((pick(true), pick(false)))
}
