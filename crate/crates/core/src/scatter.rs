//! Within-class, between-class and total scatter matrices for one target.

use thiserror::Error;

use crate::dataset::{DatasetError, LabeledDataset};
use crate::linalg::{symmetrize, Matrix, Vector};

#[derive(Debug, Error)]
pub enum ScatterError {
    #[error(transparent)]
    UnknownTarget(#[from] DatasetError),
    #[error("class `{class}` of target `{target}` has no samples")]
    EmptyClass { target: String, class: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScatterSet {
    pub target: String,
    /// Σ_l Σ_{i∈l} (x_i − μ_l)(x_i − μ_l)ᵀ
    pub within: Matrix,
    /// Σ_l N_l (μ_l − μ)(μ_l − μ)ᵀ
    pub between: Matrix,
    /// Σ_i (x_i − μ)(x_i − μ)ᵀ = within + between
    pub total: Matrix,
    pub mean: Vector,
    pub class_means: Vec<Vector>,
    pub class_counts: Vec<usize>,
}

impl ScatterSet {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn n_samples(&self) -> usize {
        self.class_counts.iter().sum()
    }
}

pub fn compute_scatter(data: &LabeledDataset, target: &str) -> Result<ScatterSet, ScatterError> {
    let t = data.target(target)?;
    let x = &data.features;
    let (n, m) = x.shape();
    let counts = t.class_counts();
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        return Err(ScatterError::EmptyClass {
            target: target.to_string(),
            class: t.classes[empty].clone(),
        });
    }

    let mut sums = vec![Vector::zeros(m); counts.len()];
    for (i, &l) in t.labels.iter().enumerate() {
        sums[l] += x.row(i).transpose();
    }
    let class_means: Vec<Vector> = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| s / c as f64)
        .collect();
    let mean = x.row_sum().transpose() / n as f64;

    let within_centered = Matrix::from_fn(n, m, |i, j| x[(i, j)] - class_means[t.labels[i]][j]);
    let total_centered = Matrix::from_fn(n, m, |i, j| x[(i, j)] - mean[j]);
    let within = symmetrize(&within_centered.tr_mul(&within_centered));
    let total = symmetrize(&total_centered.tr_mul(&total_centered));

    let mut between = Matrix::zeros(m, m);
    for (mu_l, &c) in class_means.iter().zip(&counts) {
        let d = mu_l - &mean;
        between += (&d * d.transpose()) * c as f64;
    }
    let between = symmetrize(&between);

    Ok(ScatterSet {
        target: target.to_string(),
        within,
        between,
        total,
        mean,
        class_means,
        class_counts: counts,
    })
}
