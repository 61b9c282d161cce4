//! Data ingestion, experiment runner and reporting for the `nnsvd` CLI.

pub mod data;
pub mod error;
pub mod experiment;

pub use data::{load, make_synthetic, DataSource, Dataset, DatasetKind, Format, SyntheticSpec};
pub use error::{BenchError, Result};
pub use experiment::{
    emit_csv, emit_plotdata, parse_csv, run_experiment, ExperimentFile, ExperimentSpec, PostStep,
    ResultRow, RunOutput,
};
