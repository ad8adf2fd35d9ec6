use std::collections::BTreeSet;
use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DatasetError, LabeledDataset, Result, Target};
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Numeric,
    Categorical,
    Label,
    /// Present in the file but not used.
    Ignore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
    /// Extra tokens treated as missing for this column only.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub missing: Vec<String>,
}

impl ColumnSpec {
    pub fn new(name: &str, kind: ColumnKind) -> Self {
        ColumnSpec {
            name: name.to_string(),
            kind,
            missing: Vec::new(),
        }
    }
}

/// Column layout of a delimited text file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSchema {
    pub columns: Vec<ColumnSpec>,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
    #[serde(default = "default_true")]
    pub has_header: bool,
    /// Tokens treated as missing in every column.
    #[serde(default = "default_missing")]
    pub missing: Vec<String>,
    /// Suffix removed from label values (the Adult test file ends labels with ".").
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strip_label_suffix: Option<String>,
}

fn default_delimiter() -> char {
    ','
}

fn default_true() -> bool {
    true
}

fn default_missing() -> Vec<String> {
    vec!["?".to_string(), String::new()]
}

impl CsvSchema {
    pub fn new(columns: Vec<ColumnSpec>) -> Self {
        CsvSchema {
            columns,
            delimiter: default_delimiter(),
            has_header: true,
            missing: default_missing(),
            strip_label_suffix: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RawValues {
    Numeric(Vec<f64>),
    Text(Vec<String>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawColumn {
    pub name: String,
    pub kind: ColumnKind,
    pub values: RawValues,
}

/// Parsed rows that survived the missing-value filter.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub columns: Vec<RawColumn>,
    pub n_rows: usize,
    pub dropped: usize,
    /// Zero-based index of each kept row among all data rows of the file.
    pub source_rows: Vec<usize>,
}

impl RawTable {
    pub fn column(&self, name: &str) -> Option<&RawColumn> {
        self.columns.iter().find(|c| c.name == name)
    }
}

/// Reads a delimited file according to `schema`, dropping rows that have a
/// missing value in any used column.
pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<RawTable> {
    if !path.exists() {
        return Err(DatasetError::FileNotFound(path.to_path_buf()));
    }
    let file = File::open(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    if !schema.delimiter.is_ascii() {
        return Err(DatasetError::SchemaMismatch(
            "delimiter must be ASCII".into(),
        ));
    }
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter as u8)
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);

    let mut records = reader.records();
    let parse_err = |line: usize, msg: String| DatasetError::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };

    // position of each schema column within a record
    let positions: Vec<usize> = if schema.has_header {
        let header = match records.next() {
            Some(r) => r.map_err(|e| parse_err(1, e.to_string()))?,
            None => return Err(DatasetError::EmptyAfterDropping { dropped: 0 }),
        };
        let names: Vec<&str> = header.iter().collect();
        if let Some(unknown) = names
            .iter()
            .find(|n| !schema.columns.iter().any(|c| c.name == **n))
        {
            return Err(DatasetError::SchemaMismatch(format!(
                "unknown column `{unknown}`"
            )));
        }
        schema
            .columns
            .iter()
            .map(|c| {
                names.iter().position(|n| *n == c.name).ok_or_else(|| {
                    DatasetError::SchemaMismatch(format!("missing column `{}`", c.name))
                })
            })
            .collect::<Result<_>>()?
    } else {
        (0..schema.columns.len()).collect()
    };
    let width = if schema.has_header {
        positions.len()
    } else {
        schema.columns.len()
    };

    let mut columns: Vec<RawColumn> = schema
        .columns
        .iter()
        .map(|c| RawColumn {
            name: c.name.clone(),
            kind: c.kind,
            values: match c.kind {
                ColumnKind::Numeric => RawValues::Numeric(Vec::new()),
                _ => RawValues::Text(Vec::new()),
            },
        })
        .collect();

    let mut source_rows = Vec::new();
    let mut dropped = 0usize;
    let mut data_row = 0usize;
    let first_line = if schema.has_header { 2 } else { 1 };
    let mut cells: Vec<String> = Vec::with_capacity(width);
    for (offset, rec) in records.enumerate() {
        let line = first_line + offset;
        let rec = rec.map_err(|e| parse_err(line, e.to_string()))?;
        if rec.is_empty() || (rec.len() == 1 && rec[0].is_empty()) {
            continue;
        }
        if rec.len() != width {
            return Err(DatasetError::SchemaMismatch(format!(
                "line {line} has {} fields, expected {width}",
                rec.len()
            )));
        }
        let row = data_row;
        data_row += 1;

        cells.clear();
        let mut missing = false;
        for (spec, &pos) in schema.columns.iter().zip(&positions) {
            let mut v = rec[pos].to_string();
            if spec.kind == ColumnKind::Label {
                if let Some(suffix) = &schema.strip_label_suffix {
                    if let Some(stripped) = v.strip_suffix(suffix.as_str()) {
                        v = stripped.to_string();
                    }
                }
            }
            if spec.kind != ColumnKind::Ignore
                && (schema.missing.contains(&v) || spec.missing.contains(&v))
            {
                missing = true;
                break;
            }
            cells.push(v);
        }
        if missing {
            dropped += 1;
            continue;
        }
        for ((col, spec), cell) in columns.iter_mut().zip(&schema.columns).zip(cells.drain(..)) {
            match &mut col.values {
                RawValues::Numeric(values) => {
                    let x: f64 = cell.parse().map_err(|_| {
                        parse_err(
                            line,
                            format!("column `{}`: `{cell}` is not a number", spec.name),
                        )
                    })?;
                    if !x.is_finite() {
                        return Err(parse_err(
                            line,
                            format!("column `{}` is not finite", spec.name),
                        ));
                    }
                    values.push(x);
                }
                RawValues::Text(values) => values.push(cell),
            }
        }
        source_rows.push(row);
    }
    if source_rows.is_empty() {
        return Err(DatasetError::EmptyAfterDropping { dropped });
    }
    Ok(RawTable {
        columns,
        n_rows: source_rows.len(),
        dropped,
        source_rows,
    })
}

/// Number of binary columns needed for `categories` distinct values: ⌈log₂ c⌉.
pub fn bits_for(categories: usize) -> usize {
    assert!(categories >= 2);
    (usize::BITS - (categories - 1).leading_zeros()) as usize
}

/// Sorts class names numerically when all parse as numbers, lexicographically otherwise.
pub(crate) fn ordered_classes<'a>(values: impl Iterator<Item = &'a String>) -> Vec<String> {
    let set: BTreeSet<&String> = values.collect();
    let mut classes: Vec<String> = set.into_iter().cloned().collect();
    let numeric: Option<Vec<f64>> = classes.iter().map(|c| c.parse::<f64>().ok()).collect();
    if let Some(nums) = numeric {
        let mut pairs: Vec<(f64, String)> = nums.into_iter().zip(classes).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        classes = pairs.into_iter().map(|(_, c)| c).collect();
    }
    classes
}

/// Turns a raw table into a labeled dataset.
///
/// Numeric columns pass through. A categorical column with `c` categories
/// becomes ⌈log₂ c⌉ {0,1} columns holding the category's rank in
/// lexicographic order, most significant bit first. Label columns become
/// targets.
pub fn binary_encode(table: &RawTable) -> Result<LabeledDataset> {
    let n = table.n_rows;
    let mut feature_cols: Vec<Vec<f64>> = Vec::new();
    let mut feature_names = Vec::new();
    let mut targets = Vec::new();

    for col in &table.columns {
        match (col.kind, &col.values) {
            (ColumnKind::Ignore, _) => {}
            (ColumnKind::Numeric, RawValues::Numeric(v)) => {
                feature_cols.push(v.clone());
                feature_names.push(col.name.clone());
            }
            (ColumnKind::Categorical, RawValues::Text(v)) => {
                let categories: Vec<&String> =
                    v.iter().collect::<BTreeSet<_>>().into_iter().collect();
                if categories.len() < 2 {
                    return Err(DatasetError::SingleCategoryColumn(col.name.clone()));
                }
                let bits = bits_for(categories.len());
                let codes: Vec<usize> = v
                    .iter()
                    .map(|s| {
                        categories
                            .binary_search(&s)
                            .expect("category collected above")
                    })
                    .collect();
                for b in 0..bits {
                    let shift = bits - 1 - b;
                    feature_cols.push(codes.iter().map(|&c| ((c >> shift) & 1) as f64).collect());
                    feature_names.push(format!("{}_b{b}", col.name));
                }
            }
            (ColumnKind::Label, RawValues::Text(v)) => {
                let classes = ordered_classes(v.iter());
                let labels = v
                    .iter()
                    .map(|s| {
                        classes
                            .iter()
                            .position(|c| c == s)
                            .expect("class collected above")
                    })
                    .collect();
                targets.push(Target {
                    name: col.name.clone(),
                    classes,
                    labels,
                });
            }
            _ => {
                return Err(DatasetError::SchemaMismatch(format!(
                    "column `{}` storage does not match its kind",
                    col.name
                )))
            }
        }
    }
    let features = Matrix::from_fn(n, feature_cols.len(), |i, j| feature_cols[j][i]);
    let ds = LabeledDataset {
        features,
        feature_names,
        targets,
        source_rows: table.source_rows.clone(),
        role: None,
    };
    ds.validate()?;
    Ok(ds)
}
