//! The augmentation sweep: generators × synthetic sizes × decoders ×
//! repetitions, with table, CSV, JSON and SVG output.

mod report;
mod svg;

use std::collections::{BTreeMap, HashSet};
use std::path::PathBuf;

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use report::{format_cell, render_csv, render_markdown, write_outputs};
pub use svg::{render_bars, render_scatter};

use crate::data::{
    assemble_scanpaths, balanced_counts, load_csv, simulate_surrogate, stratified_split,
    to_row_table, Dataset, LengthModel, Provenance, RowTable, SampleKey, ScanpathSample,
    SplitSpec, SurrogateConfig, TaskLabel,
};
use crate::decoders::{fit_decoder, DecoderConfig, DecoderKind, DecoderModel};
use crate::error::{Error, Result};
use crate::generators::{fit_generator, GeneratorKind, GeneratorSpec};
use crate::numeric::RngState;
use crate::quality::{ks_report, KsReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DataSource {
    Csv {
        path: PathBuf,
    },
    Surrogate {
        #[serde(default)]
        config: SurrogateConfig,
        /// Optional task overlap control; 1 keeps the configured tasks.
        #[serde(default)]
        separation: Option<f64>,
        #[serde(default)]
        seed: u64,
    },
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Surrogate {
            config: SurrogateConfig::default(),
            separation: None,
            seed: 0,
        }
    }
}

impl DataSource {
    pub fn load(&self) -> Result<Dataset> {
        match self {
            DataSource::Csv { path } => load_csv(path),
            DataSource::Surrogate {
                config,
                separation,
                seed,
            } => {
                let cfg = match separation {
                    Some(s) => config.with_separation(*s),
                    None => config.clone(),
                };
                simulate_surrogate(&cfg, &mut RngState::new(*seed))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestComposition {
    /// Holdout holds real scanpaths only.
    RealOnly,
    /// Synthetic scanpaths are split with the same fraction and their
    /// holdout part joins the real holdout.
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub data: DataSource,
    pub generators: Vec<GeneratorSpec>,
    pub sizes: Vec<usize>,
    pub decoders: Vec<DecoderKind>,
    pub decoder_config: DecoderConfig,
    pub repetitions: usize,
    pub master_seed: u64,
    pub test_composition: TestComposition,
    pub train_fraction: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            data: DataSource::default(),
            generators: GeneratorKind::ALL.into_iter().map(GeneratorSpec::new).collect(),
            sizes: vec![0, 320, 640, 960, 1600],
            decoders: DecoderKind::ALL.to_vec(),
            decoder_config: DecoderConfig::default(),
            repetitions: 5,
            master_seed: 0,
            test_composition: TestComposition::RealOnly,
            train_fraction: 0.8,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.repetitions == 0 {
            return bad("repetitions must be at least 1");
        }
        if self.sizes.is_empty() {
            return bad("at least one augmentation size is required");
        }
        if self.sizes.iter().any(|&s| s > 0) && self.generators.is_empty() {
            return bad("positive augmentation sizes need a generator");
        }
        let mut seen = HashSet::new();
        if !self.sizes.iter().all(|s| seen.insert(*s)) {
            return bad("augmentation sizes must be distinct");
        }
        let mut seen = HashSet::new();
        if !self.decoders.iter().all(|d| seen.insert(*d)) {
            return bad("decoders must be distinct");
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad("train fraction must lie in (0, 1)");
        }
        for g in &self.generators {
            g.effective_gan().validate()?;
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serialises");
        Sha256::digest(&json)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub generator: String,
    pub size: usize,
    pub decoder: DecoderKind,
    pub mean: f64,
    /// Population standard deviation over repetitions.
    pub std: f64,
    pub accuracies: Vec<f64>,
    /// Sequence length used by the CNN, per repetition.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub seq_lens: Vec<usize>,
    /// Decoder seed per repetition.
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorQuality {
    pub generator: String,
    /// Aggregate KS score per repetition.
    pub aggregate_scores: Vec<f64>,
    pub mean_score: f64,
    /// Per-column report of the first repetition.
    pub report: KsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub n_real: usize,
    pub cells: Vec<CellResult>,
    pub quality: Vec<GeneratorQuality>,
}

impl ResultTable {
    pub fn cell(&self, generator: &str, size: usize, decoder: DecoderKind) -> Option<&CellResult> {
        self.cells
            .iter()
            .find(|c| c.generator == generator && c.size == size && c.decoder == decoder)
    }
}

fn derive_seed(r: &RngState) -> u64 {
    r.clone().next_u64()
}

/// Synthesises `counts` scanpaths by conditional sampling per task and
/// assembly with training-set lengths. Starts from the expected row count
/// and doubles it whenever a task runs short.
pub fn synthesize(
    generator: &crate::generators::Generator,
    lengths: &LengthModel,
    counts: &[usize; 4],
    rng: &RngState,
) -> Result<(Dataset, RowTable)> {
    let mut factor = 1.5;
    for attempt in 0..8u64 {
        let mut rows = Vec::new();
        for task in TaskLabel::ALL {
            let c = counts[task.index()];
            if c == 0 {
                continue;
            }
            let want = (c as f64 * lengths.max_length(task).max(1) as f64 * factor).ceil() as usize;
            let mut r = rng.split(attempt).split(task.index() as u64);
            rows.extend(generator.sample(want, &mut r, Some(task.code() as i64))?.rows);
        }
        let table = RowTable {
            schema: generator.schema().clone(),
            rows,
        };
        if table.rows.is_empty() {
            return Ok((Dataset::new(Vec::new(), Provenance::Synthetic), table));
        }
        match assemble_scanpaths(&table, lengths, counts, &mut rng.split(100 + attempt)) {
            Ok(ds) => return Ok((ds, table)),
            Err(Error::InsufficientRows { .. }) => factor *= 2.0,
            Err(e) => return Err(e),
        }
    }
    Err(Error::InsufficientRows {
        task: 0,
        needed: counts.iter().sum(),
        available: 0,
    })
}

/// First `counts[t]` synthetic scanpaths of each task.
fn balanced_prefix(synth: &Dataset, counts: &[usize; 4]) -> Vec<ScanpathSample> {
    let mut taken = [0usize; 4];
    synth
        .samples
        .iter()
        .filter(|s| {
            let t = s.task.index();
            let keep = taken[t] < counts[t];
            taken[t] += usize::from(keep);
            keep
        })
        .cloned()
        .collect()
}

struct Repetition {
    seed: RngState,
    train: Dataset,
    test: Dataset,
}

struct Synth {
    data: Dataset,
    quality: KsReport,
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct CellKey {
    rep: usize,
    /// `None` for the shared real-only cells.
    generator: Option<usize>,
    size: usize,
    decoder: DecoderKind,
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub table: ResultTable,
    /// Two labelled scanpath sets for the scatter figure: the first
    /// repetition's real training split and the first generator's synthetic
    /// scanpaths (or the real holdout when nothing was synthesised).
    pub scatter: [(String, Dataset); 2],
}

/// Runs the sweep on a pool of `workers` threads. The result does not
/// depend on `workers`.
pub fn run_experiment(config: &ExperimentConfig, workers: usize) -> Result<ExperimentOutput> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("worker pool: {e}")))?;
    let data = config.data.load()?;
    pool.install(|| run_on(config, &data))
}

fn run_on(config: &ExperimentConfig, data: &Dataset) -> Result<ExperimentOutput> {
    let master = RngState::new(config.master_seed);
    let reps: Vec<Repetition> = (0..config.repetitions)
        .map(|r| {
            let seed = master.split(r as u64);
            let spec = SplitSpec {
                train_fraction: config.train_fraction,
                stratified: true,
                seed: derive_seed(&seed.split(0)),
            };
            let (train, test) = stratified_split(data, &spec)
                .map_err(|e| e.context(format!("repetition {r}: split")))?;
            let train_keys: HashSet<SampleKey> = train.samples.iter().map(ScanpathSample::key).collect();
            if test.samples.iter().any(|s| train_keys.contains(&s.key())) {
                return Err(Error::SchemaMismatch(format!(
                    "repetition {r}: holdout scanpath identity also appears in training data"
                )));
            }
            Ok(Repetition { seed, train, test })
        })
        .collect::<Result<_>>()?;

    let max_size = config.sizes.iter().copied().max().unwrap_or(0);
    let gen_units: Vec<(usize, usize)> = if max_size > 0 {
        (0..reps.len())
            .flat_map(|r| (0..config.generators.len()).map(move |g| (r, g)))
            .collect()
    } else {
        Vec::new()
    };
    let synths: BTreeMap<(usize, usize), Synth> = gen_units
        .par_iter()
        .map(|&(r, g)| {
            let rep = &reps[r];
            let spec = &config.generators[g];
            let annotate = |e: Error| e.context(format!("repetition {r}, generator {}", spec.kind));
            let table = to_row_table(&rep.train);
            let rng = rep.seed.split(1).split(g as u64);
            let model = fit_generator(&table, spec, &mut rng.split(0)).map_err(annotate)?;
            let lengths = LengthModel::fit(&rep.train);
            let (data, rows) = synthesize(&model, &lengths, &balanced_counts(max_size), &rng.split(1)).map_err(annotate)?;
            let quality = ks_report(&table, &rows).map_err(annotate)?;
            Ok(((r, g), Synth { data, quality }))
        })
        .collect::<Result<_>>()?;

    let mut cells: Vec<CellKey> = Vec::new();
    for rep in 0..reps.len() {
        for &size in &config.sizes {
            let gens: Vec<Option<usize>> = if size == 0 {
                vec![None]
            } else {
                (0..config.generators.len()).map(Some).collect()
            };
            for generator in gens {
                for &decoder in &config.decoders {
                    cells.push(CellKey { rep, generator, size, decoder });
                }
            }
        }
    }
    let outcomes: BTreeMap<CellKey, (f64, Option<usize>, u64)> = cells
        .par_iter()
        .map(|&key| {
            let rep = &reps[key.rep];
            let mut train = rep.train.samples.clone();
            let mut test = rep.test.samples.clone();
            if let Some(g) = key.generator {
                let synth = balanced_prefix(&synths[&(key.rep, g)].data, &balanced_counts(key.size));
                match config.test_composition {
                    TestComposition::RealOnly => train.extend(synth),
                    TestComposition::Mixed => {
                        let ds = Dataset::new(synth, Provenance::Synthetic);
                        let spec = SplitSpec {
                            train_fraction: config.train_fraction,
                            stratified: true,
                            seed: derive_seed(&rep.seed.split(3).split(g as u64)),
                        };
                        let (s_train, s_test) = if ds.task_counts().iter().all(|&c| c >= 2) {
                            stratified_split(&ds, &spec)?
                        } else {
                            (ds, Dataset::new(Vec::new(), Provenance::Synthetic))
                        };
                        train.extend(s_train.samples);
                        test.extend(s_test.samples);
                    }
                }
            }
            let drng = rep.seed.split(2).split(key.decoder.canonical_index());
            let annotate = |e: Error| {
                e.context(format!(
                    "repetition {}, size {}, decoder {}",
                    key.rep, key.size, key.decoder
                ))
            };
            let model = fit_decoder(key.decoder, &train, &config.decoder_config, &drng).map_err(annotate)?;
            let acc = model.accuracy(&test).map_err(annotate)?;
            let seq_len = match &model {
                DecoderModel::Itc(e) => Some(e.seq_len),
                _ => None,
            };
            Ok((key, (acc, seq_len, derive_seed(&drng))))
        })
        .collect::<Result<_>>()?;

    let mut results = Vec::new();
    for (g, spec) in config.generators.iter().enumerate() {
        for &size in &config.sizes {
            for &decoder in &config.decoders {
                let gk = (size > 0).then_some(g);
                let per: Vec<&(f64, Option<usize>, u64)> = (0..reps.len())
                    .map(|rep| &outcomes[&CellKey { rep, generator: gk, size, decoder }])
                    .collect();
                results.push(summarise(spec.kind.name(), size, decoder, &per));
            }
        }
    }
    if config.generators.is_empty() {
        for &decoder in &config.decoders {
            let per: Vec<_> = (0..reps.len())
                .map(|rep| &outcomes[&CellKey { rep, generator: None, size: 0, decoder }])
                .collect();
            results.push(summarise("none", 0, decoder, &per));
        }
    }

    let quality = if max_size > 0 {
        config
            .generators
            .iter()
            .enumerate()
            .map(|(g, spec)| {
                let scores: Vec<f64> = (0..reps.len()).map(|r| synths[&(r, g)].quality.aggregate).collect();
                GeneratorQuality {
                    generator: spec.kind.name().into(),
                    mean_score: scores.iter().sum::<f64>() / scores.len() as f64,
                    aggregate_scores: scores,
                    report: synths[&(0, g)].quality.clone(),
                }
            })
            .collect()
    } else {
        Vec::new()
    };

    let first = &reps[0];
    let right = match synths.get(&(0, 0)) {
        Some(s) => (format!("synthetic ({})", config.generators[0].kind), s.data.clone()),
        None => ("real holdout".to_string(), first.test.clone()),
    };
    Ok(ExperimentOutput {
        table: ResultTable {
            config: config.clone(),
            config_hash: config.hash(),
            n_real: data.len(),
            cells: results,
            quality,
        },
        scatter: [("real training".to_string(), first.train.clone()), right],
    })
}

fn summarise(generator: &str, size: usize, decoder: DecoderKind, per: &[&(f64, Option<usize>, u64)]) -> CellResult {
    let accuracies: Vec<f64> = per.iter().map(|p| p.0).collect();
    let n = accuracies.len() as f64;
    let mean = accuracies.iter().sum::<f64>() / n;
    let std = (accuracies.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n).sqrt();
    CellResult {
        generator: generator.into(),
        size,
        decoder,
        mean,
        std,
        accuracies,
        seq_lens: per.iter().filter_map(|p| p.1).collect(),
        seeds: per.iter().map(|p| p.2).collect(),
    }
}
