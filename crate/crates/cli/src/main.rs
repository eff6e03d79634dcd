use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use gazeaug_core::bench::{render_bars, write_outputs};
use gazeaug_core::data::{
    assemble_scanpaths, load_csv, load_rows_csv, simulate_surrogate, stratified_split, to_row_table, write_csv,
    write_rows_csv, LengthModel, Provenance, SplitSpec, SurrogateConfig, CSV_HEADER,
};
use gazeaug_core::decoders::{fit_decoder, DecoderConfig};
use gazeaug_core::quality::ks_report;
use gazeaug_core::{
    run_experiment, Dataset, DecoderKind, Error, ErrorClass, ExperimentConfig, Generator, GeneratorKind, GeneratorSpec,
    ResultTable, Result, RngState, RowTable, TaskLabel,
};
use serde_json::json;

#[derive(Parser)]
#[command(name = "gazeaug", version, about = "Synthetic fixation data augmentation for task decoding")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a surrogate fixation dataset.
    Simulate {
        /// Surrogate configuration (JSON); omitted fields take defaults.
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Rescale task differences (1 keeps the configured tasks, 0 makes them identical).
        #[arg(long)]
        separation: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a fixation CSV and print per-task counts.
    Ingest {
        #[arg(long = "in")]
        input: PathBuf,
        /// Also validate every fixation value (always on; kept for scripts).
        #[arg(long)]
        validate: bool,
    },
    /// Fit a generator on the fixation rows of a dataset.
    FitGen {
        /// gaussian-copula, ctgan, copula-gan or tuned.
        #[arg(long)]
        kind: GeneratorKind,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Override the number of GAN epochs.
        #[arg(long)]
        epochs: Option<usize>,
        /// One unconditional model per task instead of one conditional model.
        #[arg(long)]
        per_task: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw fixation rows from a fitted generator.
    Sample {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        n: usize,
        /// Condition every row on this task.
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4))]
        task: Option<u8>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-column two-sample KS report of synthetic against real rows.
    EvaluateKs {
        /// Fixation CSV or row CSV.
        #[arg(long)]
        real: PathBuf,
        /// Fixation CSV or row CSV.
        #[arg(long)]
        synth: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a decoder on a stratified split and report holdout accuracy.
    Decode {
        #[arg(long)]
        train: PathBuf,
        /// Extra synthetic data added to the training split only.
        #[arg(long)]
        aug: Option<PathBuf>,
        #[arg(long)]
        decoder: DecoderKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Decoder hyperparameters (JSON); omitted fields take defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0.8)]
        train_fraction: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an augmentation sweep and write its tables and figures.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Append a timestamp to the run directory name.
        #[arg(long)]
        timestamp: bool,
    },
    /// Render the accuracy bar chart of a results.json.
    Plot {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn exit_code(class: ErrorClass) -> u8 {
    match class {
        ErrorClass::Usage => 1,
        ErrorClass::Data => 2,
        ErrorClass::Numerical => 3,
        ErrorClass::Io => 4,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.class()))
        }
    }
}

fn run(command: Command) -> Result<()> {
    if let Command::Bench {
        config,
        out_dir,
        workers,
        timestamp,
    } = command
    {
        return bench(&config, &out_dir, workers, timestamp);
    }
    // Everything else runs on one thread.
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    pool.install(|| run_single(command))
}

fn run_single(command: Command) -> Result<()> {
    match command {
        Command::Simulate {
            config,
            seed,
            separation,
            out,
        } => {
            let mut cfg: SurrogateConfig = read_json(&config)?;
            if let Some(s) = separation {
                cfg = cfg.with_separation(s);
            }
            let ds = simulate_surrogate(&cfg, &mut RngState::new(seed))?;
            write_csv(&ds, &out)?;
            log::info!("wrote {} scanpaths to {}", ds.len(), out.display());
            Ok(())
        }
        Command::Ingest { input, .. } => {
            let ds = load_csv(&input)?;
            for s in &ds.samples {
                for f in &s.fixations {
                    f.validate()?;
                }
            }
            println!("{}", summary(&ds));
            Ok(())
        }
        Command::FitGen {
            kind,
            data,
            seed,
            epochs,
            per_task,
            out,
        } => {
            let table = to_row_table(&load_csv(&data)?);
            let mut spec = GeneratorSpec::new(kind);
            spec.per_task = per_task;
            if let Some(e) = epochs {
                spec.gan.epochs = e;
            }
            let model = gazeaug_core::generators::fit_generator(&table, &spec, &mut RngState::new(seed))?;
            let file = File::create(&out).map_err(|e| Error::file(&out, e))?;
            model.save(BufWriter::new(file))
        }
        Command::Sample {
            model,
            n,
            task,
            seed,
            out,
        } => {
            let file = File::open(&model).map_err(|e| Error::file(&model, e))?;
            let generator = Generator::load(BufReader::new(file)).map_err(|e| e.context(model.display().to_string()))?;
            let rows = generator.sample(n, &mut RngState::new(seed), task.map(i64::from))?;
            write_rows_csv(&rows, &out)
        }
        Command::EvaluateKs { real, synth, out } => {
            let report = ks_report(&load_any_rows(&real)?, &load_any_rows(&synth)?)?;
            write_json(&out, &serde_json::to_value(&report)?)?;
            println!("{}", report.to_table());
            Ok(())
        }
        Command::Decode {
            train,
            aug,
            decoder,
            seed,
            config,
            train_fraction,
            out,
        } => decode(&train, aug.as_deref(), decoder, seed, config.as_deref(), train_fraction, &out),
        Command::Plot { results, out } => {
            let table: ResultTable = read_json(&results)?;
            fs::write(&out, render_bars(&table)).map_err(|e| Error::file(&out, e))
        }
        Command::Bench { .. } => unreachable!("handled by run"),
    }
}

fn bench(config: &Path, out_dir: &Path, workers: usize, timestamp: bool) -> Result<()> {
    if workers == 0 {
        return Err(Error::InvalidConfig("--workers must be at least 1".into()));
    }
    let cfg: ExperimentConfig = read_json(config)?;
    let mut name = format!("run-{}", &cfg.hash()[..12]);
    if timestamp {
        let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        name.push_str(&format!("-{secs}"));
    }
    let dir = out_dir.join(name);
    let output = run_experiment(&cfg, workers)?;
    fs::create_dir_all(&dir).map_err(|e| Error::file(&dir, e))?;
    write_outputs(&output, &dir)?;
    println!("{}", dir.display());
    Ok(())
}

fn decode(
    train: &Path,
    aug: Option<&Path>,
    decoder: DecoderKind,
    seed: u64,
    config: Option<&Path>,
    train_fraction: f64,
    out: &Path,
) -> Result<()> {
    let cfg: DecoderConfig = match config {
        Some(p) => read_json(p)?,
        None => DecoderConfig::default(),
    };
    let rng = RngState::new(seed);
    let data = load_csv(train)?;
    let spec = SplitSpec {
        train_fraction,
        stratified: true,
        seed,
    };
    let (real_train, test) = stratified_split(&data, &spec)?;
    let mut train_samples = real_train.samples.clone();
    let n_aug = match aug {
        Some(p) => {
            let extra = load_augmentation(p, &real_train, &mut rng.split(1))?;
            let n = extra.len();
            train_samples.extend(extra.samples);
            n
        }
        None => 0,
    };
    let model = fit_decoder(decoder, &train_samples, &cfg, &rng.split(2))?;
    let predicted = model.predict(&test.samples)?;
    let mut confusion = [[0usize; 4]; 4];
    for (s, &p) in test.samples.iter().zip(&predicted) {
        confusion[s.task.index()][p] += 1;
    }
    let correct: usize = (0..4).map(|i| confusion[i][i]).sum();
    let accuracy = correct as f64 / test.len() as f64;
    let report = json!({
        "decoder": decoder.name(),
        "seed": seed,
        "train_fraction": train_fraction,
        "n_train_real": real_train.len(),
        "n_train_synthetic": n_aug,
        "n_test": test.len(),
        "accuracy": accuracy,
        "confusion": confusion,
    });
    write_json(out, &report)?;
    println!("{} holdout accuracy: {:.4}", decoder.label(), accuracy);
    Ok(())
}

/// Synthetic scanpaths from either a fixation CSV or a row CSV. Rows are
/// assembled into as many scanpaths per task as the rows surely cover,
/// with lengths drawn from the real training split.
fn load_augmentation(path: &Path, real_train: &Dataset, rng: &mut RngState) -> Result<Dataset> {
    if is_fixation_csv(path)? {
        let mut ds = load_csv(path)?;
        ds.provenance = Provenance::Synthetic;
        return Ok(ds);
    }
    let rows = load_rows_csv(path)?;
    let lengths = LengthModel::fit(real_train);
    let mut per_task = [0usize; 4];
    for r in &rows.rows {
        per_task[r[4] as usize - 1] += 1;
    }
    let mut counts = [0usize; 4];
    for t in TaskLabel::ALL {
        counts[t.index()] = per_task[t.index()] / lengths.max_length(t).max(1);
    }
    assemble_scanpaths(&rows, &lengths, &counts, rng)
}

fn is_fixation_csv(path: &Path) -> Result<bool> {
    let file = File::open(path).map_err(|e| Error::file(path, e))?;
    let mut first = String::new();
    BufReader::new(file).read_line(&mut first).map_err(|e| Error::file(path, e))?;
    Ok(first.trim_end().split(',').eq(CSV_HEADER.iter().copied()))
}

fn load_any_rows(path: &Path) -> Result<RowTable> {
    if is_fixation_csv(path)? {
        Ok(to_row_table(&load_csv(path)?))
    } else {
        load_rows_csv(path)
    }
}

fn summary(ds: &Dataset) -> String {
    let counts = ds.task_counts();
    let mut s = format!("{} scanpaths, {} fixations", ds.len(), ds.total_fixations());
    for t in TaskLabel::ALL {
        s.push_str(&format!("\n  task {} ({}): {}", t.code(), t.name(), counts[t.index()]));
    }
    s
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::from(e).context(path.display().to_string()))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::file(path, e))
}
