//! Fixation-level data model, CSV ingestion, the surrogate simulator and the
//! views consumed by generators (row tables) and decoders (summary vectors
//! and fixed-length channel matrices).

mod assemble;
mod csv_io;
mod featurize;
mod split;
mod surrogate;
mod table;
mod types;

pub use assemble::{assemble_scanpaths, balanced_counts, LengthModel};
pub use csv_io::{load_csv, read_csv, write_csv, write_csv_to, CSV_HEADER};
pub use featurize::{featurize_summary, to_fixed_length, FixedLengthSeq, SUMMARY_WIDTH};
pub use split::{stratified_split, SplitSpec};
pub use surrogate::{simulate_surrogate, SpatialComponent, SurrogateConfig, TaskDistribution};
pub use table::{
    load_rows_csv, read_rows_csv, to_row_table, write_rows_csv, write_rows_csv_to, Column, ColumnKind, RowTable,
    TableSchema,
};
pub use types::{Dataset, FixationRecord, Provenance, SampleKey, ScanpathSample, TaskLabel};
