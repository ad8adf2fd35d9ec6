//! Versioned on-disk dataset archive.
//!
//! An archive directory holds `meta.json` plus one matrix file per split.
//! A matrix file is little-endian:
//!
//! ```text
//! bytes 0..8    magic  b"PPDRMAT1"
//! bytes 8..16   rows   u64
//! bytes 16..24  cols   u64
//! then          rows*cols f64, row-major
//! ```
//!
//! Each row stores the features, then one column per target holding the
//! zero-based class index, then the source row id. `meta.json` names the
//! targets in column order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DatasetError, LabeledDataset, Result, SplitRole, Splits, Target};
use crate::linalg::Matrix;

pub const ARCHIVE_VERSION: u32 = 1;
const FORMAT: &str = "ppdr-archive";
const MAGIC: &[u8; 8] = b"PPDRMAT1";

#[derive(Debug, Clone, PartialEq)]
pub struct Archive {
    pub dataset: String,
    pub seed: u64,
    pub utility: String,
    pub privacy: String,
    pub splits: Splits,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TargetMeta {
    name: String,
    classes: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SplitMeta {
    role: SplitRole,
    file: String,
    rows: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Meta {
    format: String,
    version: u32,
    dataset: String,
    seed: u64,
    utility: String,
    privacy: String,
    feature_names: Vec<String>,
    targets: Vec<TargetMeta>,
    splits: Vec<SplitMeta>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_matrix(path: &Path, m: &Matrix) -> Result<()> {
    let mut buf = Vec::with_capacity(24 + 8 * m.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(m.nrows() as u64).to_le_bytes());
    buf.extend_from_slice(&(m.ncols() as u64).to_le_bytes());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            buf.extend_from_slice(&m[(i, j)].to_le_bytes());
        }
    }
    fs::write(path, buf).map_err(io_err(path))
}

pub fn read_matrix(path: &Path) -> Result<Matrix> {
    if !path.exists() {
        return Err(DatasetError::FileNotFound(path.to_path_buf()));
    }
    let bytes = fs::read(path).map_err(io_err(path))?;
    if bytes.len() < 24 || &bytes[..8] != MAGIC {
        return Err(DatasetError::Archive(format!(
            "{} is not a matrix file",
            path.display()
        )));
    }
    let word = |at: usize| u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap()) as usize;
    let (rows, cols) = (word(8), word(16));
    if bytes.len() != 24 + 8 * rows * cols {
        return Err(DatasetError::Archive(format!(
            "{}: expected {rows}x{cols} values, file has {} bytes",
            path.display(),
            bytes.len()
        )));
    }
    let data: Vec<f64> = bytes[24..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Matrix::from_row_slice(rows, cols, &data))
}

fn pack(ds: &LabeledDataset) -> Matrix {
    let m = ds.n_features();
    let t = ds.targets.len();
    Matrix::from_fn(ds.n_rows(), m + t + 1, |i, j| {
        if j < m {
            ds.features[(i, j)]
        } else if j < m + t {
            ds.targets[j - m].labels[i] as f64
        } else {
            ds.source_rows[i] as f64
        }
    })
}

fn index_column(packed: &Matrix, col: usize, what: &str) -> Result<Vec<usize>> {
    packed
        .column(col)
        .iter()
        .map(|&v| {
            if v >= 0.0 && v.fract() == 0.0 && v < 1e15 {
                Ok(v as usize)
            } else {
                Err(DatasetError::Archive(format!("invalid {what} value {v}")))
            }
        })
        .collect()
}

pub fn write_archive(dir: &Path, archive: &Archive) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let train = &archive.splits.training;
    let mut splits = Vec::new();
    for role in SplitRole::ALL {
        let ds = archive.splits.get(role);
        let file = format!("{}.mat", role.as_str());
        write_matrix(&dir.join(&file), &pack(ds))?;
        splits.push(SplitMeta {
            role,
            file,
            rows: ds.n_rows(),
        });
    }
    let meta = Meta {
        format: FORMAT.to_string(),
        version: ARCHIVE_VERSION,
        dataset: archive.dataset.clone(),
        seed: archive.seed,
        utility: archive.utility.clone(),
        privacy: archive.privacy.clone(),
        feature_names: train.feature_names.clone(),
        targets: train
            .targets
            .iter()
            .map(|t| TargetMeta {
                name: t.name.clone(),
                classes: t.classes.clone(),
            })
            .collect(),
        splits,
    };
    let path = dir.join("meta.json");
    let text =
        serde_json::to_string_pretty(&meta).map_err(|e| DatasetError::Archive(e.to_string()))?;
    fs::write(&path, text + "\n").map_err(io_err(&path))
}

pub fn read_archive(dir: &Path) -> Result<Archive> {
    let path = dir.join("meta.json");
    if !path.exists() {
        return Err(DatasetError::FileNotFound(path));
    }
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let meta: Meta = serde_json::from_str(&text)
        .map_err(|e| DatasetError::Archive(format!("{}: {e}", path.display())))?;
    if meta.format != FORMAT || meta.version != ARCHIVE_VERSION {
        return Err(DatasetError::Archive(format!(
            "unsupported archive {} v{}",
            meta.format, meta.version
        )));
    }
    let m = meta.feature_names.len();
    let t = meta.targets.len();
    let mut loaded = Vec::new();
    for role in SplitRole::ALL {
        let entry = meta
            .splits
            .iter()
            .find(|s| s.role == role)
            .ok_or_else(|| DatasetError::Archive(format!("missing {} split", role.as_str())))?;
        let packed = read_matrix(&dir.join(&entry.file))?;
        if packed.ncols() != m + t + 1 || packed.nrows() != entry.rows {
            return Err(DatasetError::Archive(format!(
                "{} has an unexpected shape",
                entry.file
            )));
        }
        let targets = meta
            .targets
            .iter()
            .enumerate()
            .map(|(k, tm)| {
                Ok(Target {
                    name: tm.name.clone(),
                    classes: tm.classes.clone(),
                    labels: index_column(&packed, m + k, "class")?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let ds = LabeledDataset {
            features: packed.columns(0, m).into_owned(),
            feature_names: meta.feature_names.clone(),
            targets,
            source_rows: index_column(&packed, m + t, "source row")?,
            role: Some(role),
        };
        ds.validate()?;
        loaded.push(ds);
    }
    let adversary = loaded.pop().unwrap();
    let testing = loaded.pop().unwrap();
    let training = loaded.pop().unwrap();
    Ok(Archive {
        dataset: meta.dataset,
        seed: meta.seed,
        utility: meta.utility,
        privacy: meta.privacy,
        splits: Splits {
            training,
            testing,
            adversary,
        },
    })
}
