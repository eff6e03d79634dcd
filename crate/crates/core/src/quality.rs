//! Two-sample Kolmogorov-Smirnov statistics and the aggregate
//! synthetic-quality score (`1 − D`, averaged over continuous columns).

use serde::{Deserialize, Serialize};

use crate::data::RowTable;
use crate::error::{Error, Result};

/// Sorted sample with a right-continuous step CDF.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn new(samples: &[f64]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptySample);
        }
        if samples.iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain {
                value: f64::NAN,
                domain: "finite samples",
            });
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(EmpiricalCdf { sorted })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// Fraction of samples `<= x`.
    pub fn eval(&self, x: f64) -> f64 {
        self.sorted.partition_point(|&v| v <= x) as f64 / self.sorted.len() as f64
    }

    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }
}

/// `sup_x |F_a(x) − F_b(x)|`, computed exactly by merging the sorted samples
/// and comparing the two ECDFs just after each distinct value.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> Result<f64> {
    let fa = EmpiricalCdf::new(a)?;
    let fb = EmpiricalCdf::new(b)?;
    Ok(ks_sorted(fa.sorted(), fb.sorted()))
}

fn ks_sorted(a: &[f64], b: &[f64]) -> f64 {
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < n || j < m {
        let v = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        while i < n && a[i] == v {
            i += 1;
        }
        while j < m && b[j] == v {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    d
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnKs {
    pub column: String,
    pub statistic: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KsReport {
    pub columns: Vec<ColumnKs>,
    /// Unweighted mean of per-column scores.
    pub aggregate: f64,
}

impl KsReport {
    pub fn to_table(&self) -> String {
        let mut s = String::from("column        D        score\n");
        for c in &self.columns {
            s.push_str(&format!("{:<12} {:>7.4}  {:>7.4}\n", c.column, c.statistic, c.score));
        }
        s.push_str(&format!("aggregate             {:>7.4}\n", self.aggregate));
        s
    }
}

/// KS statistic for every continuous column of two tables with equal schemas.
pub fn ks_report(real: &RowTable, synth: &RowTable) -> Result<KsReport> {
    if real.schema != synth.schema {
        return Err(Error::SchemaMismatch(
            "real and synthetic tables have different schemas".into(),
        ));
    }
    if real.n_rows() == 0 || synth.n_rows() == 0 {
        return Err(Error::EmptySample);
    }
    let mut columns = Vec::new();
    for j in real.schema.continuous_indices() {
        let d = ks_statistic(&real.column(j), &synth.column(j))?;
        columns.push(ColumnKs {
            column: real.schema.columns[j].name.clone(),
            statistic: d,
            score: 1.0 - d,
        });
    }
    if columns.is_empty() {
        return Err(Error::SchemaMismatch("no continuous columns to compare".into()));
    }
    let aggregate = columns.iter().map(|c| c.score).sum::<f64>() / columns.len() as f64;
    Ok(KsReport { columns, aggregate })
}
