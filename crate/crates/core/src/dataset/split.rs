use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DatasetError, LabeledDataset, Result, SplitRole};
use crate::linalg::{Matrix, Vector};

/// How many rows each (utility, privacy) label combination contributes to
/// each split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub per_combination: usize,
    pub training: usize,
    pub testing: usize,
    pub adversary: usize,
    pub seed: u64,
}

impl SplitSpec {
    /// Training : testing : adversary = 2 : 1 : 2, the proportions used for
    /// all three reference datasets.
    pub fn two_one_two(per_combination: usize, seed: u64) -> Self {
        let testing = per_combination / 5;
        let adversary = per_combination * 2 / 5;
        SplitSpec {
            per_combination,
            training: per_combination - testing - adversary,
            testing,
            adversary,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.training + self.testing + self.adversary != self.per_combination {
            return Err(DatasetError::Invalid(format!(
                "split counts {}+{}+{} do not sum to {}",
                self.training, self.testing, self.adversary, self.per_combination
            )));
        }
        if self.training == 0 || self.testing == 0 || self.adversary == 0 {
            return Err(DatasetError::Invalid(
                "every split needs at least one row per combination".into(),
            ));
        }
        Ok(())
    }

    /// Total rows per split for `combinations` label combinations.
    pub fn totals(&self, combinations: usize) -> [usize; 3] {
        [
            self.training * combinations,
            self.testing * combinations,
            self.adversary * combinations,
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub training: LabeledDataset,
    pub testing: LabeledDataset,
    pub adversary: LabeledDataset,
}

impl Splits {
    pub fn get(&self, role: SplitRole) -> &LabeledDataset {
        match role {
            SplitRole::Training => &self.training,
            SplitRole::Testing => &self.testing,
            SplitRole::Adversary => &self.adversary,
        }
    }
}

/// Draws an equal number of rows from every (utility, privacy) combination
/// for each split, uniformly without replacement.
///
/// Combinations are visited in (utility, privacy) class order; each pool is
/// shuffled once with a single seeded stream and sliced
/// training | testing | adversary.
pub fn balanced_sample(
    data: &LabeledDataset,
    utility: &str,
    privacy: &str,
    spec: &SplitSpec,
) -> Result<Splits> {
    spec.validate()?;
    let u = data.target(utility)?;
    let p = data.target(privacy)?;
    let mut pools = vec![Vec::new(); u.n_classes() * p.n_classes()];
    for row in 0..data.n_rows() {
        pools[u.labels[row] * p.n_classes() + p.labels[row]].push(row);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut picked: [Vec<usize>; 3] = Default::default();
    for (combo, pool) in pools.iter_mut().enumerate() {
        if pool.len() < spec.per_combination {
            return Err(DatasetError::InsufficientSamples {
                utility: u.classes[combo / p.n_classes()].clone(),
                privacy: p.classes[combo % p.n_classes()].clone(),
                available: pool.len(),
                required: spec.per_combination,
            });
        }
        pool.shuffle(&mut rng);
        let (train, rest) = pool[..spec.per_combination].split_at(spec.training);
        let (test, adv) = rest.split_at(spec.testing);
        picked[0].extend_from_slice(train);
        picked[1].extend_from_slice(test);
        picked[2].extend_from_slice(adv);
    }

    let take = |rows: &[usize], role: SplitRole| {
        let mut ds = data.select_rows(rows);
        ds.role = Some(role);
        ds
    };
    Ok(Splits {
        training: take(&picked[0], SplitRole::Training),
        testing: take(&picked[1], SplitRole::Testing),
        adversary: take(&picked[2], SplitRole::Adversary),
    })
}

/// Per-feature z-scoring with statistics from one (training) split.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vector,
    pub scale: Vector,
}

impl Standardizer {
    pub fn fit(features: &Matrix) -> Self {
        let n = features.nrows().max(1) as f64;
        let m = features.ncols();
        let mut mean = Vector::zeros(m);
        let mut scale = Vector::zeros(m);
        for j in 0..m {
            let col = features.column(j);
            let mu = col.sum() / n;
            let var = col.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / n;
            mean[j] = mu;
            // constant columns are only centered
            scale[j] = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
        }
        Standardizer { mean, scale }
    }

    pub fn transform(&self, features: &Matrix) -> Matrix {
        Matrix::from_fn(features.nrows(), features.ncols(), |i, j| {
            (features[(i, j)] - self.mean[j]) / self.scale[j]
        })
    }

    pub fn apply(&self, data: &LabeledDataset) -> LabeledDataset {
        data.with_features(self.transform(&data.features), data.feature_names.clone())
    }
}

/// Assigns each row to one of `k` folds so that every class is spread as
/// evenly as possible. Returns the fold index of each row.
pub fn stratified_folds(labels: &[usize], k: usize, seed: u64) -> Vec<usize> {
    assert!(k >= 1, "at least one fold");
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![0; labels.len()];
    let mut offset = 0;
    for c in 0..n_classes {
        let mut rows: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        rows.shuffle(&mut rng);
        for (pos, &row) in rows.iter().enumerate() {
            folds[row] = (offset + pos) % k;
        }
        // start the next class where this one stopped so fold sizes stay level
        offset = (offset + rows.len()) % k;
    }
    folds
}
