use serde::{Deserialize, Serialize};

use super::marginal::MarginalModel;
use crate::data::{ColumnKind, RowTable, TableSchema};
use crate::error::{Error, Result};
use crate::numeric::{cholesky_with_jitter, sample_mvn, CholeskyFactor, Matrix, RngState};

/// How one column is reproduced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ColumnModel {
    /// Continuous column driven by latent dimension `latent`.
    Marginal { latent: usize, marginal: MarginalModel },
    /// Continuous column with a single value.
    Constant { value: f64 },
    /// Category frequencies, in schema category order.
    Categorical { categories: Vec<i64>, counts: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianCopulaModel {
    pub schema: TableSchema,
    pub columns: Vec<ColumnModel>,
    /// Latent correlation over the non-constant continuous columns.
    pub correlation: Matrix,
    pub factor: Option<CholeskyFactor>,
}

fn pearson_matrix(z: &[Vec<f64>]) -> Matrix {
    let d = z.len();
    let n = z.first().map_or(0, Vec::len) as f64;
    let means: Vec<f64> = z.iter().map(|c| c.iter().sum::<f64>() / n).collect();
    let sds: Vec<f64> = z
        .iter()
        .zip(&means)
        .map(|(c, m)| c.iter().map(|v| (v - m).powi(2)).sum::<f64>().sqrt())
        .collect();
    let mut r = Matrix::identity(d);
    for i in 0..d {
        for j in 0..i {
            let s: f64 = z[i]
                .iter()
                .zip(&z[j])
                .map(|(a, b)| (a - means[i]) * (b - means[j]))
                .sum();
            let rho = (s / (sds[i] * sds[j])).clamp(-1.0, 1.0);
            r[(i, j)] = rho;
            r[(j, i)] = rho;
        }
    }
    r
}

/// Fits per-column empirical marginals, the Pearson correlation of the
/// normal scores, and independent category frequencies.
pub fn fit_gaussian_copula(table: &RowTable) -> Result<GaussianCopulaModel> {
    if table.n_rows() < 10 {
        return Err(Error::InsufficientData {
            needed: 10,
            got: table.n_rows(),
        });
    }
    if table.schema.continuous_indices().is_empty() {
        return Err(Error::SchemaMismatch("copula needs a continuous column".into()));
    }
    table.validate()?;

    let mut columns = Vec::with_capacity(table.schema.width());
    let mut latent_cols: Vec<Vec<f64>> = Vec::new();
    for (j, col) in table.schema.columns.iter().enumerate() {
        let values = table.column(j);
        match &col.kind {
            ColumnKind::Continuous => {
                let marginal = MarginalModel::fit(j, &values);
                if marginal.distinct() < 2 {
                    log::warn!("column `{}` is constant; reproduced as a constant", col.name);
                    columns.push(ColumnModel::Constant { value: values[0] });
                } else {
                    latent_cols.push(values.iter().map(|&x| marginal.to_normal(x)).collect());
                    columns.push(ColumnModel::Marginal {
                        latent: latent_cols.len() - 1,
                        marginal,
                    });
                }
            }
            ColumnKind::Discrete { categories } => {
                let mut counts = vec![0; categories.len()];
                for v in &values {
                    let k = categories.iter().position(|&c| c as f64 == *v).unwrap();
                    counts[k] += 1;
                }
                columns.push(ColumnModel::Categorical {
                    categories: categories.clone(),
                    counts,
                });
            }
        }
    }

    let correlation = pearson_matrix(&latent_cols);
    let factor = if latent_cols.is_empty() {
        None
    } else {
        Some(cholesky_with_jitter(&correlation)?)
    };
    Ok(GaussianCopulaModel {
        schema: table.schema.clone(),
        columns,
        correlation,
        factor,
    })
}

impl GaussianCopulaModel {
    /// Latent dimension of column `j`, if it is a non-constant continuous one.
    pub fn latent_index(&self, j: usize) -> Option<usize> {
        match &self.columns[j] {
            ColumnModel::Marginal { latent, .. } => Some(*latent),
            _ => None,
        }
    }
}

/// Draws `n` rows. With `condition = (column, category)`, that discrete
/// column is fixed; since discrete columns are independent of the latent
/// Gaussian this equals rejection sampling on the condition.
pub fn sample_gaussian_copula(
    model: &GaussianCopulaModel,
    n: usize,
    rng: &mut RngState,
    condition: Option<(usize, i64)>,
) -> Result<RowTable> {
    if n == 0 {
        return Err(Error::InvalidConfig("sample count must be positive".into()));
    }
    let latent = model
        .factor
        .as_ref()
        .map(|f| sample_mvn(f, n, &mut rng.split(0)));
    let mut disc_rng = rng.split(1);
    let mut rows = vec![vec![0.0; model.schema.width()]; n];
    for (j, cm) in model.columns.iter().enumerate() {
        match cm {
            ColumnModel::Marginal { latent: k, marginal } => {
                let z = latent.as_ref().unwrap();
                for (i, row) in rows.iter_mut().enumerate() {
                    row[j] = marginal.from_normal(z[(i, *k)]);
                }
            }
            ColumnModel::Constant { value } => rows.iter_mut().for_each(|r| r[j] = *value),
            ColumnModel::Categorical { categories, counts } => {
                if let Some((cj, cat)) = condition.filter(|(cj, _)| *cj == j) {
                    if !categories.contains(&cat) {
                        return Err(Error::InvalidConfig(format!(
                            "category {cat} is not recorded for column {cj}"
                        )));
                    }
                    rows.iter_mut().for_each(|r| r[j] = cat as f64);
                } else {
                    let w: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
                    for row in rows.iter_mut() {
                        row[j] = categories[disc_rng.categorical(&w)] as f64;
                    }
                }
            }
        }
    }
    Ok(RowTable {
        schema: model.schema.clone(),
        rows,
    })
}
