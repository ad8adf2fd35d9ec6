//! Reader for the UCI "Human Activity Recognition Using Smartphones" layout:
//!
//! ```text
//! <dir>/features.txt            optional, "<index> <name>" per line
//! <dir>/activity_labels.txt     optional, "<id> <name>" per line
//! <dir>/{train,test}/X_{train,test}.txt        whitespace-separated features
//! <dir>/{train,test}/y_{train,test}.txt        activity id per row
//! <dir>/{train,test}/subject_{train,test}.txt  subject id per row
//! ```
//!
//! Train and test parts are concatenated (train first) and exposed with
//! targets `adl` and `id`.

use std::fs;
use std::path::{Path, PathBuf};

use super::encode::ordered_classes;
use super::{DatasetError, LabeledDataset, Result, Target};
use crate::linalg::Matrix;

fn read(path: &Path) -> Result<String> {
    if !path.exists() {
        return Err(DatasetError::FileNotFound(path.to_path_buf()));
    }
    fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_rows(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = read(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.split_whitespace()
                .map(|tok| {
                    tok.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| DatasetError::Parse {
                            path: path.to_path_buf(),
                            line: i + 1,
                            msg: format!("`{tok}` is not a finite number"),
                        })
                })
                .collect()
        })
        .collect()
}

fn parse_tokens(path: &Path) -> Result<Vec<String>> {
    Ok(read(path)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect())
}

/// Parses "<id> <name>" lines into a lookup from id to name.
fn parse_named(path: &Path) -> Result<Vec<(String, String)>> {
    Ok(parse_tokens(path)?
        .into_iter()
        .filter_map(|l| {
            let mut parts = l.splitn(2, char::is_whitespace);
            Some((parts.next()?.to_string(), parts.next()?.trim().to_string()))
        })
        .collect())
}

pub fn load_har_dir(dir: &Path) -> Result<LabeledDataset> {
    if !dir.is_dir() {
        return Err(DatasetError::FileNotFound(dir.to_path_buf()));
    }
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut activities: Vec<String> = Vec::new();
    let mut subjects: Vec<String> = Vec::new();
    for part in ["train", "test"] {
        let file = |stem: &str| -> PathBuf { dir.join(part).join(format!("{stem}_{part}.txt")) };
        let x = parse_rows(&file("X"))?;
        let y = parse_tokens(&file("y"))?;
        let s = parse_tokens(&file("subject"))?;
        if x.len() != y.len() || x.len() != s.len() {
            return Err(DatasetError::SchemaMismatch(format!(
                "{part}: {} feature rows, {} activity labels, {} subject labels",
                x.len(),
                y.len(),
                s.len()
            )));
        }
        rows.extend(x);
        activities.extend(y);
        subjects.extend(s);
    }
    let m = rows.first().map_or(0, Vec::len);
    if m == 0 {
        return Err(DatasetError::EmptyAfterDropping { dropped: 0 });
    }
    if let Some(bad) = rows.iter().position(|r| r.len() != m) {
        return Err(DatasetError::SchemaMismatch(format!(
            "row {bad} has {} features, expected {m}",
            rows[bad].len()
        )));
    }

    let feature_names = match dir.join("features.txt") {
        p if p.exists() => {
            let named = parse_named(&p)?;
            if named.len() != m {
                return Err(DatasetError::SchemaMismatch(format!(
                    "features.txt lists {} names for {m} columns",
                    named.len()
                )));
            }
            named.into_iter().map(|(_, n)| n).collect()
        }
        _ => (0..m).map(|j| format!("f{j}")).collect(),
    };

    let activity_ids = ordered_classes(activities.iter());
    let activity_names: Vec<String> = match dir.join("activity_labels.txt") {
        p if p.exists() => {
            let named = parse_named(&p)?;
            activity_ids
                .iter()
                .map(|id| {
                    named
                        .iter()
                        .find(|(k, _)| k == id)
                        .map_or(id.clone(), |(_, n)| n.clone())
                })
                .collect()
        }
        _ => activity_ids.clone(),
    };
    let subject_ids = ordered_classes(subjects.iter());
    let index_of = |classes: &[String], v: &String| classes.iter().position(|c| c == v).unwrap();

    let n = rows.len();
    let ds = LabeledDataset {
        features: Matrix::from_fn(n, m, |i, j| rows[i][j]),
        feature_names,
        targets: vec![
            Target {
                name: "adl".into(),
                labels: activities
                    .iter()
                    .map(|a| index_of(&activity_ids, a))
                    .collect(),
                classes: activity_names,
            },
            Target {
                name: "id".into(),
                labels: subjects.iter().map(|s| index_of(&subject_ids, s)).collect(),
                classes: subject_ids,
            },
        ],
        source_rows: (0..n).collect(),
        role: None,
    };
    ds.validate()?;
    Ok(ds)
}
