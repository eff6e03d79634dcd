use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::{Dataset, FixationRecord, Provenance, ScanpathSample, TaskLabel};
use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 8] = [
    "participant_id",
    "image_id",
    "task",
    "fix_index",
    "x",
    "y",
    "duration_ms",
    "pupil",
];

pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::file(path, e))?;
    read_csv(file).map_err(|e| e.context(path.display().to_string()))
}

/// Parses the fixation CSV. One sample per distinct
/// `(participant_id, image_id, task)`, in order of first appearance, with
/// fixations ordered by `fix_index`.
pub fn read_csv<R: Read>(reader: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(Error::SchemaMismatch(format!(
            "expected header `{}`, found `{}`",
            CSV_HEADER.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }

    let mut groups: Vec<(ScanpathSample, Vec<usize>)> = Vec::new();
    let mut index: HashMap<(String, String, TaskLabel), usize> = HashMap::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != CSV_HEADER.len() {
            return Err(Error::SchemaMismatch(format!(
                "line {line}: expected {} fields, found {}",
                CSV_HEADER.len(),
                record.len()
            )));
        }
        let task_raw = record[2].trim();
        let task = task_raw
            .parse::<u8>()
            .ok()
            .and_then(TaskLabel::from_code)
            .ok_or_else(|| Error::UnknownTask {
                line,
                value: task_raw.to_string(),
            })?;
        let fix_index: usize = record[3].trim().parse().map_err(|_| {
            Error::SchemaMismatch(format!("line {line}: fix_index `{}` is not an integer", &record[3]))
        })?;
        let mut vals = [0.0; 4];
        for (k, v) in vals.iter_mut().enumerate() {
            let col = CSV_HEADER[4 + k];
            let raw = record[4 + k].trim();
            *v = raw.parse::<f64>().map_err(|_| {
                Error::SchemaMismatch(format!("line {line}: `{col}` value `{raw}` is not a number"))
            })?;
            if !v.is_finite() {
                return Err(Error::NonFiniteValue {
                    line,
                    column: col.to_string(),
                });
            }
        }
        let fix = FixationRecord {
            x: vals[0],
            y: vals[1],
            duration: vals[2],
            pupil: vals[3],
        };
        if fix.duration <= 0.0 || fix.pupil <= 0.0 {
            return Err(Error::SchemaMismatch(format!(
                "line {line}: duration_ms and pupil must be positive"
            )));
        }
        let key = (record[0].to_string(), record[1].to_string(), task);
        let slot = *index.entry(key.clone()).or_insert_with(|| {
            groups.push((
                ScanpathSample {
                    participant_id: key.0.clone(),
                    image_id: key.1.clone(),
                    task,
                    fixations: Vec::new(),
                },
                Vec::new(),
            ));
            groups.len() - 1
        });
        groups[slot].0.fixations.push(fix);
        groups[slot].1.push(fix_index);
    }

    let mut samples = Vec::with_capacity(groups.len());
    for (mut sample, order) in groups {
        if sample.fixations.is_empty() {
            return Err(Error::EmptyGroup(format!("{:?}", sample.key())));
        }
        let mut idx: Vec<usize> = (0..order.len()).collect();
        idx.sort_by_key(|&i| order[i]);
        if idx.iter().enumerate().any(|(pos, &i)| order[i] != pos) {
            return Err(Error::SchemaMismatch(format!(
                "fix_index of {}/{}/{} is not 0-based and contiguous",
                sample.participant_id, sample.image_id, sample.task
            )));
        }
        sample.fixations = idx.iter().map(|&i| sample.fixations[i]).collect();
        samples.push(sample);
    }
    Ok(Dataset::new(samples, Provenance::Ingested))
}

pub fn write_csv_to<W: Write>(dataset: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CSV_HEADER)?;
    for s in &dataset.samples {
        for (i, f) in s.fixations.iter().enumerate() {
            w.write_record([
                s.participant_id.clone(),
                s.image_id.clone(),
                s.task.code().to_string(),
                i.to_string(),
                f.x.to_string(),
                f.y.to_string(),
                f.duration.to_string(),
                f.pupil.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::file(path, e))?;
    write_csv_to(dataset, std::io::BufWriter::new(file))
}
