//! Dataset ingestion, encoding, balanced splitting and the on-disk archive.

mod archive;
mod encode;
mod har;
mod presets;
mod split;
pub mod synthetic;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Matrix;

pub use archive::{
    read_archive, read_matrix, write_archive, write_matrix, Archive, ARCHIVE_VERSION,
};
pub use encode::{
    binary_encode, bits_for, load_csv, ColumnKind, ColumnSpec, CsvSchema, RawColumn, RawTable,
    RawValues,
};
pub use har::load_har_dir;
pub use presets::DatasetId;
pub use split::{balanced_sample, stratified_folds, SplitSpec, Splits, Standardizer};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("file not found: {}", .0.display())]
    FileNotFound(PathBuf),
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("parse error in {} line {line}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("no rows left after dropping {dropped} rows with missing fields")]
    EmptyAfterDropping { dropped: usize },
    #[error("categorical column `{0}` has fewer than two observed categories")]
    SingleCategoryColumn(String),
    #[error("unknown target `{0}`")]
    UnknownTarget(String),
    #[error("combination ({utility}, {privacy}) has {available} rows, {required} required")]
    InsufficientSamples {
        utility: String,
        privacy: String,
        available: usize,
        required: usize,
    },
    #[error("invalid dataset: {0}")]
    Invalid(String),
    #[error("archive error: {0}")]
    Archive(String),
}

pub type Result<T> = std::result::Result<T, DatasetError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitRole {
    Training,
    Testing,
    Adversary,
}

impl SplitRole {
    pub const ALL: [SplitRole; 3] = [
        SplitRole::Training,
        SplitRole::Testing,
        SplitRole::Adversary,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SplitRole::Training => "training",
            SplitRole::Testing => "testing",
            SplitRole::Adversary => "adversary",
        }
    }
}

/// One classification target: class names plus a class index per row.
///
/// Class indices are zero-based and contiguous: `labels[i] < classes.len()`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub name: String,
    pub classes: Vec<String>,
    pub labels: Vec<usize>,
}

impl Target {
    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes.len()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}

/// Feature matrix (rows are samples) with one or more label columns.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub features: Matrix,
    pub feature_names: Vec<String>,
    pub targets: Vec<Target>,
    /// Row index of each sample in the source table.
    pub source_rows: Vec<usize>,
    /// `None` for an unsplit pool.
    pub role: Option<SplitRole>,
}

impl LabeledDataset {
    pub fn n_rows(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn target(&self, name: &str) -> Result<&Target> {
        self.targets
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| DatasetError::UnknownTarget(name.to_string()))
    }

    pub fn labels(&self, name: &str) -> Result<&[usize]> {
        Ok(&self.target(name)?.labels)
    }

    /// Checks the structural invariants.
    pub fn validate(&self) -> Result<()> {
        let n = self.n_rows();
        if self.feature_names.len() != self.n_features() {
            return Err(DatasetError::Invalid(format!(
                "{} feature names for {} columns",
                self.feature_names.len(),
                self.n_features()
            )));
        }
        if self.source_rows.len() != n {
            return Err(DatasetError::Invalid(
                "source row ids do not match row count".into(),
            ));
        }
        if self.features.iter().any(|v| !v.is_finite()) {
            return Err(DatasetError::Invalid("non-finite feature value".into()));
        }
        for t in &self.targets {
            if t.labels.len() != n {
                return Err(DatasetError::Invalid(format!(
                    "target `{}` does not label every row",
                    t.name
                )));
            }
            if let Some(&bad) = t.labels.iter().find(|&&l| l >= t.classes.len()) {
                return Err(DatasetError::Invalid(format!(
                    "target `{}` has class index {bad} but only {} classes",
                    t.name,
                    t.classes.len()
                )));
            }
        }
        Ok(())
    }

    /// New dataset made of the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> LabeledDataset {
        let m = self.n_features();
        let features = Matrix::from_fn(rows.len(), m, |i, j| self.features[(rows[i], j)]);
        LabeledDataset {
            features,
            feature_names: self.feature_names.clone(),
            targets: self
                .targets
                .iter()
                .map(|t| Target {
                    name: t.name.clone(),
                    classes: t.classes.clone(),
                    labels: rows.iter().map(|&r| t.labels[r]).collect(),
                })
                .collect(),
            source_rows: rows.iter().map(|&r| self.source_rows[r]).collect(),
            role: self.role,
        }
    }

    /// Same labels and ids with a replaced feature matrix (e.g. after projection).
    pub fn with_features(&self, features: Matrix, feature_names: Vec<String>) -> LabeledDataset {
        assert_eq!(
            features.nrows(),
            self.n_rows(),
            "row count must be preserved"
        );
        LabeledDataset {
            features,
            feature_names,
            targets: self.targets.clone(),
            source_rows: self.source_rows.clone(),
            role: self.role,
        }
    }
}
