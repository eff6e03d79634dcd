use serde::{Deserialize, Serialize};

use super::{Dataset, FixationRecord, Provenance, RowTable, ScanpathSample, TaskLabel};
use crate::error::{Error, Result};
use crate::numeric::RngState;

/// Per-task empirical distribution of scanpath lengths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthModel {
    pub lengths: [Vec<usize>; 4],
}

impl LengthModel {
    pub fn fit(dataset: &Dataset) -> LengthModel {
        let mut lengths: [Vec<usize>; 4] = Default::default();
        for s in &dataset.samples {
            lengths[s.task.index()].push(s.len());
        }
        LengthModel { lengths }
    }

    pub fn mean_length(&self, task: TaskLabel) -> f64 {
        let l = &self.lengths[task.index()];
        if l.is_empty() {
            return 0.0;
        }
        l.iter().sum::<usize>() as f64 / l.len() as f64
    }

    pub fn max_length(&self, task: TaskLabel) -> usize {
        self.lengths[task.index()].iter().copied().max().unwrap_or(0)
    }
}

/// Splits `n` into four counts that differ by at most one, larger counts first.
pub fn balanced_counts(n: usize) -> [usize; 4] {
    let mut c = [n / 4; 4];
    for slot in c.iter_mut().take(n % 4) {
        *slot += 1;
    }
    c
}

/// Groups synthetic fixation rows into scanpaths.
///
/// For each task, `counts[task.index()]` samples are built; lengths are drawn
/// from that task's empirical lengths and fixations are taken from a shuffled
/// pool of that task's rows without replacement.
pub fn assemble_scanpaths(
    rows: &RowTable,
    lengths: &LengthModel,
    counts: &[usize; 4],
    rng: &mut RngState,
) -> Result<Dataset> {
    let schema = &rows.schema;
    let col = |name: &str| {
        schema
            .index_of(name)
            .ok_or_else(|| Error::SchemaMismatch(format!("row table has no `{name}` column")))
    };
    let (cx, cy, cd, cp, ct) = (col("x")?, col("y")?, col("duration")?, col("pupil")?, col("task")?);

    let mut pools: [Vec<usize>; 4] = Default::default();
    for (i, r) in rows.rows.iter().enumerate() {
        let code = r[ct];
        if let Some(t) = (code.fract() == 0.0 && code >= 1.0 && code <= 4.0)
            .then(|| TaskLabel::from_code(code as u8))
            .flatten()
        {
            pools[t.index()].push(i);
        }
    }

    let mut samples = Vec::new();
    for task in TaskLabel::ALL {
        let n = counts[task.index()];
        if n == 0 {
            continue;
        }
        let lens = &lengths.lengths[task.index()];
        if lens.is_empty() {
            return Err(Error::InsufficientData { needed: 1, got: 0 }
                .context(format!("no length model for task {task}")));
        }
        let mut r = rng.split(task.index() as u64);
        let drawn: Vec<usize> = (0..n).map(|_| lens[r.below(lens.len())]).collect();
        let needed: usize = drawn.iter().sum();
        let pool = &mut pools[task.index()];
        if pool.len() < needed {
            return Err(Error::InsufficientRows {
                task: task.code(),
                needed,
                available: pool.len(),
            });
        }
        r.shuffle(pool);
        let mut next = 0;
        for (k, &len) in drawn.iter().enumerate() {
            let fixations = pool[next..next + len]
                .iter()
                .map(|&i| {
                    let row = &rows.rows[i];
                    FixationRecord {
                        x: row[cx],
                        y: row[cy],
                        duration: row[cd],
                        pupil: row[cp],
                    }
                })
                .collect();
            next += len;
            samples.push(ScanpathSample {
                participant_id: "synthetic".into(),
                image_id: format!("t{}-{:05}", task.code(), k),
                task,
                fixations,
            });
        }
    }
    Ok(Dataset::new(samples, Provenance::Synthetic))
}
