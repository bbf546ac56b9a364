//! Interaction-log ingestion, feature vocabularies, release intervals and
//! train/validation/test splits.

mod ingest;
pub mod kuairand;
mod records;
mod schema;
mod split;

pub use ingest::{detect_unit, ingest_csv, ingest_reader, parse_label, write_csv, ColumnConfig, IngestSummary, ReleaseColumn, TimeUnit, MILLIS_THRESHOLD};
pub use records::{compute_interval, InteractionRecord, ReleaseInterval, SECONDS_PER_DAY};
pub use schema::{
    build_schema, CategoricalField, DenseField, EncodedExample, EncodedSet, FeatureSchema, Side, OOV_INDEX, SCHEMA_VERSION,
    USER_ID_FIELD, VIDEO_ID_FIELD,
};
pub use split::{holdout, interaction_day, split, DatasetSplit, RecordSplit, SplitMode};

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("declared column `{0}` not found in header")]
    MissingColumn(String),
    #[error("no usable rows")]
    EmptyResult,
    #[error("horizon must be at least 1")]
    InvalidHorizon,
    #[error("release time {release_time} is after interaction time {interaction_time}")]
    NegativeInterval { interaction_time: i64, release_time: i64 },
    #[error("dense field `{0}` has non-numeric values in the training split")]
    NonNumericDense(String),
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("{0} split is empty")]
    EmptySplit(&'static str),
    #[error("{path}: {message}")]
    Context { path: PathBuf, message: String },
}

impl DataError {
    pub(crate) fn with_path(self, path: &Path) -> Self {
        match self {
            DataError::Csv(e) => DataError::Context { path: path.to_path_buf(), message: e.to_string() },
            other => other,
        }
    }
}

pub const MANIFEST_VERSION: u32 = 1;

/// Schema plus split description, written next to every training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub schema_hash: String,
    pub schema: FeatureSchema,
    pub split: SplitMode,
    pub sizes: [usize; 3],
    pub ingest: IngestSummary,
}

impl DatasetManifest {
    pub fn new(schema: &FeatureSchema, split: &SplitMode, sizes: [usize; 3], ingest: IngestSummary) -> Self {
        Self {
            version: MANIFEST_VERSION,
            schema_hash: schema.hash(),
            schema: schema.clone(),
            split: split.clone(),
            sizes,
            ingest,
        }
    }
}
