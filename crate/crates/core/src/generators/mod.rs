//! Synthetic tabular data generators.

mod copula;
mod copula_gan;
mod ctgan;
mod marginal;
mod mode;

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use copula::{fit_gaussian_copula, sample_gaussian_copula, ColumnModel, GaussianCopulaModel};
pub use copula_gan::{fit_copula_gan, sample_copula_gan, CopulaGanModel};
pub use ctgan::{epoch_condition_schedule, fit_ctgan, sample_ctgan, ColumnSpan, CtganModel, EpochLoss};
pub use marginal::MarginalModel;
pub use mode::{ModeNormalizer, SCALE};

use crate::container::{read_container, write_container};
use crate::data::RowTable;
use crate::error::{Error, Result};
use crate::nn::Mlp;
use crate::numeric::RngState;

const MAGIC: &[u8; 8] = b"GZAUGGEN";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GanConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub noise_dim: usize,
    pub generator_hidden: Vec<usize>,
    pub discriminator_hidden: Vec<usize>,
    pub leaky_slope: f64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub gumbel_tau: f64,
    pub max_modes: usize,
    pub mode_min_weight: f64,
    /// Decay of the moving average of generator weights that is kept for
    /// sampling; 0 samples from the last iterate.
    pub ema_decay: f64,
    /// Discrete column the generator is conditioned on.
    pub condition_column: String,
}

impl Default for GanConfig {
    fn default() -> Self {
        GanConfig {
            epochs: 300,
            batch_size: 64,
            noise_dim: 32,
            generator_hidden: vec![128, 128],
            discriminator_hidden: vec![128, 128],
            leaky_slope: 0.2,
            learning_rate: 2e-4,
            beta1: 0.5,
            beta2: 0.9,
            gumbel_tau: 0.2,
            max_modes: 10,
            mode_min_weight: 0.005,
            ema_decay: 0.995,
            condition_column: "task".into(),
        }
    }
}

impl GanConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.epochs == 0 || self.batch_size == 0 || self.noise_dim == 0 {
            return bad("epochs, batch size and noise dim must be positive");
        }
        if self.generator_hidden.contains(&0) || self.discriminator_hidden.contains(&0) {
            return bad("hidden layer widths must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("adam betas must lie in [0, 1)");
        }
        if !(self.gumbel_tau > 0.0) {
            return bad("gumbel temperature must be positive");
        }
        if !(0.0..1.0).contains(&self.ema_decay) {
            return bad("ema decay must lie in [0, 1)");
        }
        if self.max_modes == 0 || !(0.0..1.0).contains(&self.mode_min_weight) {
            return bad("max modes must be positive and the prune weight in [0, 1)");
        }
        Ok(())
    }

    pub fn steps_per_epoch(&self, n_rows: usize) -> usize {
        (n_rows / self.batch_size).max(1)
    }
}

/// Larger-budget variant of `base`: 4× epochs, 2× hidden widths, half the
/// learning rate.
pub fn tuned_from(base: &GanConfig) -> GanConfig {
    GanConfig {
        epochs: base.epochs * 4,
        generator_hidden: base.generator_hidden.iter().map(|w| w * 2).collect(),
        discriminator_hidden: base.discriminator_hidden.iter().map(|w| w * 2).collect(),
        learning_rate: base.learning_rate * 0.5,
        ..base.clone()
    }
}

/// The tuned copula-GAN preset.
pub fn tuned_preset() -> GanConfig {
    tuned_from(&GanConfig::default())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorKind {
    GaussianCopula,
    CtganLite,
    CopulaGanLite,
    /// Copula-GAN trained with [`tuned_from`] the configured GAN budget.
    Tuned,
}

impl GeneratorKind {
    pub const ALL: [GeneratorKind; 4] = [
        GeneratorKind::GaussianCopula,
        GeneratorKind::CtganLite,
        GeneratorKind::CopulaGanLite,
        GeneratorKind::Tuned,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GeneratorKind::GaussianCopula => "gaussian-copula",
            GeneratorKind::CtganLite => "ctgan-lite",
            GeneratorKind::CopulaGanLite => "copula-gan-lite",
            GeneratorKind::Tuned => "tuned",
        }
    }
}

impl fmt::Display for GeneratorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GeneratorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = match s {
            "ctgan" => "ctgan-lite",
            "copula-gan" => "copula-gan-lite",
            other => other,
        };
        GeneratorKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown generator `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub kind: GeneratorKind,
    #[serde(default)]
    pub gan: GanConfig,
    /// Fit one model per condition category instead of one conditional model.
    #[serde(default)]
    pub per_task: bool,
}

impl GeneratorSpec {
    pub fn new(kind: GeneratorKind) -> Self {
        GeneratorSpec {
            kind,
            gan: GanConfig::default(),
            per_task: false,
        }
    }

    /// GAN config actually trained for this kind.
    pub fn effective_gan(&self) -> GanConfig {
        match self.kind {
            GeneratorKind::Tuned => tuned_from(&self.gan),
            _ => self.gan.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum Generator {
    GaussianCopula(GaussianCopulaModel),
    Ctgan(CtganModel),
    CopulaGan(CopulaGanModel),
    PerTask {
        column: usize,
        categories: Vec<i64>,
        counts: Vec<usize>,
        models: Vec<Generator>,
    },
}

fn fit_single(table: &RowTable, spec: &GeneratorSpec, rng: &mut RngState) -> Result<Generator> {
    Ok(match spec.kind {
        GeneratorKind::GaussianCopula => Generator::GaussianCopula(fit_gaussian_copula(table)?),
        GeneratorKind::CtganLite => Generator::Ctgan(fit_ctgan(table, &spec.gan, rng)?),
        GeneratorKind::CopulaGanLite | GeneratorKind::Tuned => {
            Generator::CopulaGan(fit_copula_gan(table, &spec.effective_gan(), rng)?)
        }
    })
}

/// Fits the generator described by `spec`.
pub fn fit_generator(table: &RowTable, spec: &GeneratorSpec, rng: &mut RngState) -> Result<Generator> {
    spec.effective_gan().validate()?;
    if !spec.per_task {
        return fit_single(table, spec, rng);
    }
    let column = table
        .schema
        .index_of(&spec.gan.condition_column)
        .filter(|&j| !table.schema.columns[j].is_continuous())
        .ok_or_else(|| Error::InvalidConfig("per-task fitting needs a discrete condition column".into()))?;
    let all = table.schema.columns[column].categories().unwrap();
    let mut categories = Vec::new();
    let mut counts = Vec::new();
    let mut models = Vec::new();
    for (k, &cat) in all.iter().enumerate() {
        let rows: Vec<Vec<f64>> = table
            .rows
            .iter()
            .filter(|r| r[column] == cat as f64)
            .cloned()
            .collect();
        if rows.is_empty() {
            continue;
        }
        categories.push(cat);
        counts.push(rows.len());
        let sub = RowTable {
            schema: table.schema.clone(),
            rows,
        };
        models.push(
            fit_single(&sub, spec, &mut rng.split(k as u64))
                .map_err(|e| e.context(format!("fitting category {cat}")))?,
        );
    }
    Ok(Generator::PerTask {
        column,
        categories,
        counts,
        models,
    })
}

impl Generator {
    pub fn schema(&self) -> &crate::data::TableSchema {
        match self {
            Generator::GaussianCopula(m) => &m.schema,
            Generator::Ctgan(m) => &m.schema,
            Generator::CopulaGan(m) => &m.inner.schema,
            Generator::PerTask { models, .. } => models[0].schema(),
        }
    }

    /// Draws `n` rows, optionally with the condition column fixed to one
    /// category.
    pub fn sample(&self, n: usize, rng: &mut RngState, condition: Option<i64>) -> Result<RowTable> {
        match self {
            Generator::GaussianCopula(m) => {
                let cond = match condition {
                    Some(c) => {
                        let j = m
                            .schema
                            .columns
                            .iter()
                            .position(|col| !col.is_continuous())
                            .ok_or_else(|| Error::InvalidConfig("model has no discrete column".into()))?;
                        Some((j, c))
                    }
                    None => None,
                };
                sample_gaussian_copula(m, n, rng, cond)
            }
            Generator::Ctgan(m) => sample_ctgan(m, n, rng, condition),
            Generator::CopulaGan(m) => sample_copula_gan(m, n, rng, condition),
            Generator::PerTask {
                categories,
                counts,
                models,
                ..
            } => {
                if n == 0 {
                    return Err(Error::InvalidConfig("sample count must be positive".into()));
                }
                if let Some(c) = condition {
                    let k = categories.iter().position(|&x| x == c).ok_or_else(|| {
                        Error::InvalidConfig(format!("no model was fitted for category {c}"))
                    })?;
                    return models[k].sample(n, rng, Some(c));
                }
                let w: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
                let picks: Vec<usize> = (0..n).map(|_| rng.categorical(&w)).collect();
                let mut per = vec![0usize; models.len()];
                picks.iter().for_each(|&k| per[k] += 1);
                let mut drawn: Vec<std::vec::IntoIter<Vec<f64>>> = Vec::new();
                for (k, m) in models.iter().enumerate() {
                    let rows = if per[k] > 0 {
                        m.sample(per[k], &mut rng.split(k as u64), Some(categories[k]))?.rows
                    } else {
                        Vec::new()
                    };
                    drawn.push(rows.into_iter());
                }
                let rows = picks.iter().map(|&k| drawn[k].next().unwrap()).collect();
                Ok(RowTable {
                    schema: self.schema().clone(),
                    rows,
                })
            }
        }
    }

    /// Per-epoch losses of every adversarially trained component.
    pub fn loss_history(&self) -> Vec<&[EpochLoss]> {
        match self {
            Generator::GaussianCopula(_) => Vec::new(),
            Generator::Ctgan(m) => vec![&m.loss_history],
            Generator::CopulaGan(m) => vec![&m.inner.loss_history],
            Generator::PerTask { models, .. } => models.iter().flat_map(Generator::loss_history).collect(),
        }
    }

    fn networks(&self) -> Vec<&Mlp> {
        match self {
            Generator::GaussianCopula(_) => Vec::new(),
            Generator::Ctgan(m) => vec![&m.generator, &m.discriminator],
            Generator::CopulaGan(m) => vec![&m.inner.generator, &m.inner.discriminator],
            Generator::PerTask { models, .. } => models.iter().flat_map(Generator::networks).collect(),
        }
    }

    fn networks_mut(&mut self) -> Vec<&mut Mlp> {
        match self {
            Generator::GaussianCopula(_) => Vec::new(),
            Generator::Ctgan(m) => vec![&mut m.generator, &mut m.discriminator],
            Generator::CopulaGan(m) => vec![&mut m.inner.generator, &mut m.inner.discriminator],
            Generator::PerTask { models, .. } => models.iter_mut().flat_map(Generator::networks_mut).collect(),
        }
    }

    /// Writes the model: JSON description plus network weights as
    /// little-endian `f64` blobs.
    pub fn save<W: Write>(&self, w: W) -> Result<()> {
        let nets = self.networks();
        let blobs: Vec<&[f64]> = nets.iter().map(|m| m.params.as_slice()).collect();
        write_container(w, MAGIC, self, &blobs)
    }

    pub fn load<R: Read>(r: R) -> Result<Self> {
        let (mut g, blobs): (Generator, _) = read_container(r, MAGIC)?;
        let mut nets = g.networks_mut();
        if nets.len() != blobs.len() {
            return Err(Error::Format(format!(
                "model lists {} networks but the file holds {} weight blobs",
                nets.len(),
                blobs.len()
            )));
        }
        for (net, blob) in nets.iter_mut().zip(blobs) {
            let want = Mlp::param_count_for(&net.sizes);
            if blob.len() != want {
                return Err(Error::Format(format!(
                    "weight blob has {} values, network needs {want}",
                    blob.len()
                )));
            }
            if blob.iter().any(|v| !v.is_finite()) {
                return Err(Error::Format("non-finite network weight".into()));
            }
            net.params = blob;
        }
        Ok(g)
    }
}
