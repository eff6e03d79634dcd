use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ColumnKind {
    Continuous,
    /// Values are category codes, stored as `f64` in the rows.
    Discrete { categories: Vec<i64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    #[serde(flatten)]
    pub kind: ColumnKind,
}

impl Column {
    pub fn continuous(name: &str) -> Self {
        Column {
            name: name.into(),
            kind: ColumnKind::Continuous,
        }
    }

    pub fn discrete(name: &str, categories: Vec<i64>) -> Self {
        Column {
            name: name.into(),
            kind: ColumnKind::Discrete { categories },
        }
    }

    pub fn is_continuous(&self) -> bool {
        matches!(self.kind, ColumnKind::Continuous)
    }

    pub fn categories(&self) -> Option<&[i64]> {
        match &self.kind {
            ColumnKind::Discrete { categories } => Some(categories),
            ColumnKind::Continuous => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableSchema {
    pub columns: Vec<Column>,
}

impl TableSchema {
    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn continuous_indices(&self) -> Vec<usize> {
        (0..self.width())
            .filter(|&j| self.columns[j].is_continuous())
            .collect()
    }

    /// The fixation-level schema: four continuous channels plus the task.
    pub fn fixation_schema() -> Self {
        TableSchema {
            columns: vec![
                Column::continuous("x"),
                Column::continuous("y"),
                Column::continuous("duration"),
                Column::continuous("pupil"),
                Column::discrete("task", vec![1, 2, 3, 4]),
            ],
        }
    }
}

/// Flat table; each row has one value per schema column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowTable {
    pub schema: TableSchema,
    pub rows: Vec<Vec<f64>>,
}

impl RowTable {
    pub fn new(schema: TableSchema, rows: Vec<Vec<f64>>) -> Result<Self> {
        let t = RowTable { schema, rows };
        t.validate()?;
        Ok(t)
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let w = self.schema.width();
        for (i, r) in self.rows.iter().enumerate() {
            if r.len() != w {
                return Err(Error::SchemaMismatch(format!(
                    "row {i} has {} values, schema has {w} columns",
                    r.len()
                )));
            }
            for (j, col) in self.schema.columns.iter().enumerate() {
                if !r[j].is_finite() {
                    return Err(Error::NonFiniteValue {
                        line: i as u64,
                        column: col.name.clone(),
                    });
                }
                if let Some(cats) = col.categories() {
                    if r[j].fract() != 0.0 || !cats.contains(&(r[j] as i64)) {
                        return Err(Error::SchemaMismatch(format!(
                            "row {i}: `{}` value {} is not a recorded category",
                            col.name, r[j]
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// One row per fixation: `(x, y, duration, pupil, task)`.
pub fn to_row_table(dataset: &Dataset) -> RowTable {
    let rows = dataset
        .samples
        .iter()
        .flat_map(|s| {
            s.fixations.iter().map(move |f| {
                vec![f.x, f.y, f.duration, f.pupil, s.task.code() as f64]
            })
        })
        .collect();
    RowTable {
        schema: TableSchema::fixation_schema(),
        rows,
    }
}

pub fn write_rows_csv_to<W: Write>(table: &RowTable, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(table.schema.columns.iter().map(|c| c.name.as_str()))?;
    for r in &table.rows {
        w.write_record(table.schema.columns.iter().zip(r).map(|(c, v)| {
            if c.is_continuous() {
                v.to_string()
            } else {
                (*v as i64).to_string()
            }
        }))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_rows_csv(table: &RowTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::file(path, e))?;
    write_rows_csv_to(table, std::io::BufWriter::new(file))
}

/// Reads a fixation row table (`x,y,duration,pupil,task`).
pub fn read_rows_csv<R: Read>(reader: R) -> Result<RowTable> {
    let schema = TableSchema::fixation_schema();
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let expected: Vec<&str> = schema.columns.iter().map(|c| c.name.as_str()).collect();
    if header != expected {
        return Err(Error::SchemaMismatch(format!(
            "expected header `{}`, found `{}`",
            expected.join(","),
            header.join(",")
        )));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i as u64 + 2;
        if rec.len() != expected.len() {
            return Err(Error::SchemaMismatch(format!("line {line}: expected {} fields", expected.len())));
        }
        let mut row = Vec::with_capacity(rec.len());
        for (j, field) in rec.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::SchemaMismatch(format!("line {line}: `{}` is not a number: {field}", expected[j]))
            })?;
            if !v.is_finite() {
                return Err(Error::NonFiniteValue { line, column: expected[j].to_string() });
            }
            row.push(v);
        }
        rows.push(row);
    }
    RowTable::new(schema, rows)
}

pub fn load_rows_csv(path: impl AsRef<Path>) -> Result<RowTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::file(path, e))?;
    read_rows_csv(file).map_err(|e| e.context(path.display().to_string()))
}
