//! Built-in descriptions of the reference datasets.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::encode::{binary_encode, load_csv, ColumnKind, ColumnSpec, CsvSchema};
use super::synthetic::{generate, SyntheticSpec};
use super::{load_har_dir, LabeledDataset, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetId {
    Har,
    Census,
    /// Census with the utility and privacy roles exchanged.
    CensusSwap,
    Bank,
    /// Generated in-process; needs no raw files.
    Synthetic,
}

impl DatasetId {
    pub const ALL: [DatasetId; 5] = [
        DatasetId::Har,
        DatasetId::Census,
        DatasetId::CensusSwap,
        DatasetId::Bank,
        DatasetId::Synthetic,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DatasetId::Har => "har",
            DatasetId::Census => "census",
            DatasetId::CensusSwap => "census-swap",
            DatasetId::Bank => "bank",
            DatasetId::Synthetic => "synthetic",
        }
    }

    pub fn utility_target(self) -> &'static str {
        match self {
            DatasetId::Har => "adl",
            DatasetId::Census => "income",
            DatasetId::CensusSwap => "gender",
            DatasetId::Bank => "y",
            DatasetId::Synthetic => "utility",
        }
    }

    pub fn privacy_target(self) -> &'static str {
        match self {
            DatasetId::Har => "id",
            DatasetId::Census => "gender",
            DatasetId::CensusSwap => "income",
            DatasetId::Bank => "marital",
            DatasetId::Synthetic => "privacy",
        }
    }

    /// Rows drawn from every (utility, privacy) combination.
    pub fn per_combination(self) -> usize {
        match self {
            DatasetId::Har => 20,
            DatasetId::Census | DatasetId::CensusSwap => 750,
            DatasetId::Bank => 410,
            DatasetId::Synthetic => SyntheticSpec::default().per_combination,
        }
    }

    /// Projection dimension used for the reference tables.
    pub fn default_k(self) -> usize {
        match self {
            DatasetId::Har => 5,
            DatasetId::Census | DatasetId::CensusSwap | DatasetId::Bank => 1,
            DatasetId::Synthetic => 2,
        }
    }

    /// Expected raw file or directory under the data directory.
    pub fn raw_path(self, data_dir: &Path) -> PathBuf {
        match self {
            DatasetId::Har => data_dir.join("UCI HAR Dataset"),
            DatasetId::Census | DatasetId::CensusSwap => data_dir.join("adult.data"),
            DatasetId::Bank => data_dir.join("bank-full.csv"),
            DatasetId::Synthetic => data_dir.to_path_buf(),
        }
    }

    /// Column layout of the raw file, for the CSV-based datasets.
    pub fn schema(self) -> Option<CsvSchema> {
        use ColumnKind::*;
        let cols = |spec: &[(&str, ColumnKind)]| {
            spec.iter().map(|(n, k)| ColumnSpec::new(n, *k)).collect()
        };
        match self {
            DatasetId::Census | DatasetId::CensusSwap => {
                let mut s = CsvSchema::new(cols(&[
                    ("age", Numeric),
                    ("workclass", Categorical),
                    ("fnlwgt", Numeric),
                    ("education", Categorical),
                    ("education-num", Numeric),
                    ("marital-status", Categorical),
                    ("occupation", Categorical),
                    ("relationship", Categorical),
                    ("race", Categorical),
                    ("gender", Label),
                    ("capital-gain", Numeric),
                    ("capital-loss", Numeric),
                    ("hours-per-week", Numeric),
                    ("native-country", Categorical),
                    ("income", Label),
                ]));
                s.has_header = false;
                s.strip_label_suffix = Some(".".into());
                Some(s)
            }
            DatasetId::Bank => {
                let mut columns: Vec<ColumnSpec> = cols(&[
                    ("age", Numeric),
                    ("job", Categorical),
                    ("marital", Label),
                    ("education", Categorical),
                    ("default", Categorical),
                    ("balance", Numeric),
                    ("housing", Categorical),
                    ("loan", Categorical),
                    ("contact", Categorical),
                    ("day", Numeric),
                    ("month", Categorical),
                    ("duration", Numeric),
                    ("campaign", Numeric),
                    ("pdays", Numeric),
                    ("previous", Numeric),
                    ("poutcome", Categorical),
                    ("y", Label),
                ]);
                columns[2].missing = vec!["unknown".into()];
                let mut s = CsvSchema::new(columns);
                s.delimiter = ';';
                Some(s)
            }
            DatasetId::Har | DatasetId::Synthetic => None,
        }
    }

    /// Loads and encodes the raw data. `schema` overrides the built-in layout
    /// for CSV datasets. Returns the dataset and the number of dropped rows.
    pub fn load(
        self,
        data_dir: &Path,
        schema: Option<&CsvSchema>,
        raw_file: Option<&Path>,
    ) -> Result<(LabeledDataset, usize)> {
        let path = raw_file.map_or_else(|| self.raw_path(data_dir), Path::to_path_buf);
        match self {
            DatasetId::Har => Ok((load_har_dir(&path)?, 0)),
            DatasetId::Synthetic => Ok((generate(&SyntheticSpec::default()), 0)),
            _ => {
                let builtin = self.schema().expect("csv dataset");
                let table = load_csv(&path, schema.unwrap_or(&builtin))?;
                let dropped = table.dropped;
                Ok((binary_encode(&table)?, dropped))
            }
        }
    }

    /// Dataset reported by each reference table.
    pub fn for_table(table: u32) -> Option<DatasetId> {
        match table {
            1 => Some(DatasetId::Har),
            2 => Some(DatasetId::Census),
            3 => Some(DatasetId::CensusSwap),
            4 => Some(DatasetId::Bank),
            _ => None,
        }
    }
}

impl fmt::Display for DatasetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DatasetId {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        DatasetId::ALL
            .into_iter()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| {
                format!(
                    "unknown dataset `{s}` (expected har, census, census-swap, bank or synthetic)"
                )
            })
    }
}
