//! GAN fitted in copula space: continuous columns pass through their
//! empirical CDF and the normal quantile before training, and samples are
//! mapped back through the inverse.

use serde::{Deserialize, Serialize};

use super::ctgan::{fit_ctgan, sample_ctgan, CtganModel};
use super::marginal::MarginalModel;
use super::GanConfig;
use crate::data::RowTable;
use crate::error::Result;
use crate::numeric::RngState;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CopulaGanModel {
    /// One entry per schema column; `None` for discrete and constant columns.
    pub marginals: Vec<Option<MarginalModel>>,
    pub inner: CtganModel,
}

fn fit_marginals(table: &RowTable) -> Vec<Option<MarginalModel>> {
    table
        .schema
        .columns
        .iter()
        .enumerate()
        .map(|(j, c)| {
            if !c.is_continuous() {
                return None;
            }
            let m = MarginalModel::fit(j, &table.column(j));
            (m.distinct() >= 2).then_some(m)
        })
        .collect()
}

pub fn forward_transform(marginals: &[Option<MarginalModel>], table: &RowTable) -> RowTable {
    let rows = table
        .rows
        .iter()
        .map(|r| {
            r.iter()
                .zip(marginals)
                .map(|(&v, m)| m.as_ref().map_or(v, |m| m.to_normal(v)))
                .collect()
        })
        .collect();
    RowTable {
        schema: table.schema.clone(),
        rows,
    }
}

pub fn inverse_transform(marginals: &[Option<MarginalModel>], table: &mut RowTable) {
    for r in &mut table.rows {
        for (v, m) in r.iter_mut().zip(marginals) {
            if let Some(m) = m {
                *v = m.from_normal(*v);
            }
        }
    }
}

pub fn fit_copula_gan(table: &RowTable, config: &GanConfig, rng: &mut RngState) -> Result<CopulaGanModel> {
    table.validate()?;
    let marginals = fit_marginals(table);
    let inner = fit_ctgan(&forward_transform(&marginals, table), config, rng)?;
    Ok(CopulaGanModel { marginals, inner })
}

pub fn sample_copula_gan(
    model: &CopulaGanModel,
    n: usize,
    rng: &mut RngState,
    condition: Option<i64>,
) -> Result<RowTable> {
    let mut t = sample_ctgan(&model.inner, n, rng, condition)?;
    inverse_transform(&model.marginals, &mut t);
    Ok(t)
}
