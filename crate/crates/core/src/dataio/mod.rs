//! Dataset schemas and CSV ingestion, the dimensionless feature pipeline,
//! metrics and k-fold splitting.

mod features;
mod metrics;
mod records;
mod split;

use std::path::Path;

pub use features::{dr_features, preprocess_dr, Dataset, DimensionlessSample, TargetTransform, Units};
pub use metrics::{compute_metrics, within_factor, Metrics};
pub use records::{
    load_conditions, load_dataset, read_conditions, read_records, write_records, FatigueRecord, OperatingCondition,
    BUNDLED_DATASETS, CONDITION_COLUMNS, DATA_DIR_ENV, RECORD_COLUMNS,
};
pub use split::{kfold_split, Fold};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DataError {
    #[error("schema mismatch: column {column:?} (header was {found:?})")]
    SchemaMismatch { column: String, found: String },
    #[error("row {row}: {message}")]
    Value { row: usize, message: String },
    #[error("dataset {name:?} is not bundled: {hint}")]
    NotBundled { name: String, hint: String },
    #[error("observed has {observed} values but predicted has {predicted}")]
    LengthMismatch { observed: usize, predicted: usize },
    #[error("cannot split {n} records into {k} folds")]
    InvalidK { k: usize, n: usize },
    #[error("{0}")]
    Config(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl DataError {
    fn io(path: &Path, e: std::io::Error) -> Self {
        DataError::Io(format!("{}: {e}", path.display()))
    }

    fn csv(e: csv::Error) -> Self {
        DataError::Io(e.to_string())
    }
}
