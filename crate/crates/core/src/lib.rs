//! Synthetic-data-augmented task decoding from eye-movement fixations.
//!
//! The crate is organised bottom-up:
//!
//! - [`numeric`]: seedable RNG, small dense linear algebra, normal
//!   distribution functions, 1-D Gaussian mixtures, finite differences.
//! - [`data`]: scanpath data model, CSV ingestion, surrogate simulator,
//!   stratified splitting and featurisation.
//! - [`generators`]: Gaussian copula, conditional tabular GAN and the
//!   copula-transformed GAN over fixation rows.
//! - [`quality`]: two-sample Kolmogorov-Smirnov statistics.
//! - [`trees`]: CART, random forest and gradient-boosted trees.
//! - [`neural`]: InceptionTime-style 1-D CNN ensemble with hand-written
//!   backpropagation.
//! - [`decoders`]: a common front for the five task decoders.
//! - [`bench`]: the augmentation sweep and its reports.

pub mod error;
pub mod numeric;
pub mod data;
pub mod quality;
pub mod nn;
pub mod container;
pub mod generators;
pub mod trees;
pub mod neural;
pub mod decoders;
pub mod bench;

pub use bench::{run_experiment, ExperimentConfig, ResultTable};
pub use data::{Dataset, FixationRecord, RowTable, ScanpathSample, TaskLabel};
pub use decoders::DecoderKind;
pub use error::{Error, ErrorClass, Result};
pub use generators::{Generator, GeneratorKind, GeneratorSpec};
pub use numeric::RngState;
