use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{ExperimentOutput, ResultTable, TestComposition};
use crate::error::{Error, Result};

/// `mean ± std` in percent with one decimal.
pub fn format_cell(mean: f64, std: f64) -> String {
    format!("{:.1} ± {:.1}", mean * 100.0, std * 100.0)
}

fn row_label(n_real: usize, size: usize) -> String {
    if size == 0 {
        format!("{n_real}R")
    } else {
        format!("{n_real}R+{size}S")
    }
}

pub fn render_markdown(table: &ResultTable) -> String {
    let cfg = &table.config;
    let mut s = String::new();
    writeln!(s, "# Augmentation sweep\n").unwrap();
    let holdout = match cfg.test_composition {
        TestComposition::RealOnly => "real scanpaths only",
        TestComposition::Mixed => "real and synthetic scanpaths (mixed)",
    };
    writeln!(
        s,
        "Holdout accuracy in percent, mean ± std over {} repetitions. Holdout: {holdout}. \
         {} real scanpaths; master seed {}; config {}.\n",
        cfg.repetitions,
        table.n_real,
        cfg.master_seed,
        &table.config_hash[..12.min(table.config_hash.len())]
    )
    .unwrap();

    let mut generators: Vec<&str> = Vec::new();
    for c in &table.cells {
        if !generators.contains(&c.generator.as_str()) {
            generators.push(&c.generator);
        }
    }
    if generators.is_empty() {
        generators.extend(cfg.generators.iter().map(|g| g.kind.name()));
    }
    for g in generators {
        writeln!(s, "## {g}\n").unwrap();
        let mut header = String::from("| Training data |");
        let mut rule = String::from("|---|");
        for d in &cfg.decoders {
            write!(header, " {} |", d.label()).unwrap();
            rule.push_str("---|");
        }
        writeln!(s, "{header}\n{rule}").unwrap();
        if !cfg.decoders.is_empty() {
            for &size in &cfg.sizes {
                let mut line = format!("| {} |", row_label(table.n_real, size));
                for &d in &cfg.decoders {
                    match table.cell(g, size, d) {
                        Some(c) => write!(line, " {} |", format_cell(c.mean, c.std)).unwrap(),
                        None => line.push_str(" – |"),
                    }
                }
                writeln!(s, "{line}").unwrap();
            }
        }
        s.push('\n');
    }

    if !table.quality.is_empty() {
        writeln!(s, "## Synthetic data quality (KS score, first repetition)\n").unwrap();
        let cols: Vec<&str> = table.quality[0].report.columns.iter().map(|c| c.column.as_str()).collect();
        let mut header = String::from("| Generator |");
        let mut rule = String::from("|---|");
        for c in &cols {
            write!(header, " {c} |").unwrap();
            rule.push_str("---|");
        }
        writeln!(s, "{header} aggregate | mean over repetitions |\n{rule}---|---|").unwrap();
        for q in &table.quality {
            let mut line = format!("| {} |", q.generator);
            for c in &q.report.columns {
                write!(line, " {:.3} |", c.score).unwrap();
            }
            writeln!(line, " {:.3} | {:.3} |", q.report.aggregate, q.mean_score).unwrap();
            s.push_str(&line);
        }
    }
    s
}

/// One line per cell at full precision; repetition values joined by `;`.
pub fn render_csv(table: &ResultTable) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["generator", "size", "decoder", "mean", "std", "accuracies", "seq_lens", "seeds"])?;
    for c in &table.cells {
        let join = |v: Vec<String>| v.join(";");
        w.write_record([
            c.generator.clone(),
            c.size.to_string(),
            c.decoder.name().to_string(),
            c.mean.to_string(),
            c.std.to_string(),
            join(c.accuracies.iter().map(f64::to_string).collect()),
            join(c.seq_lens.iter().map(usize::to_string).collect()),
            join(c.seeds.iter().map(u64::to_string).collect()),
        ])?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Format(format!("csv buffer: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Writes `results.json`, `results.csv`, `results.md`,
/// `figure_scatter.svg` and `figure_bars.svg` into `dir`.
pub fn write_outputs(out: &ExperimentOutput, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
    let write = |name: &str, body: &[u8]| {
        let p = dir.join(name);
        fs::write(&p, body).map_err(|e| Error::file(&p, e))
    };
    let mut json = serde_json::to_string_pretty(&out.table)?;
    json.push('\n');
    write("results.json", json.as_bytes())?;
    write("results.csv", render_csv(&out.table)?.as_bytes())?;
    write("results.md", render_markdown(&out.table).as_bytes())?;
    let [(lt, l), (rt, r)] = &out.scatter;
    write("figure_scatter.svg", super::render_scatter(l, lt, r, rt)?.as_bytes())?;
    write("figure_bars.svg", super::render_bars(&out.table).as_bytes())?;
    Ok(())
}
