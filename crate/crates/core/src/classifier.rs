//! Kernel SVM classifiers used as utility models and attackers.
//!
//! Binary problems are solved by sequential minimal optimization with
//! second-order working-set selection; more than two classes use one model
//! per class against the rest. Hyperparameters come from a stratified k-fold
//! grid search over `(C, σ)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{stratified_folds, DatasetError, LabeledDataset};
use crate::kernel::{median_pairwise_distance, row_major, sq_dist, KernelError, KernelSpec};
use crate::linalg::Matrix;

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("training data contains a single class")]
    SingleClassInput,
    #[error("class {class} has {count} samples, {required} required")]
    ClassTooSmall {
        class: usize,
        count: usize,
        required: usize,
    },
    #[error("SMO stopped after {iterations} iterations with KKT gap {gap:.3e}")]
    NoConvergence { iterations: usize, gap: f64 },
    #[error("expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("model document: {0}")]
    Document(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

pub type Result<T> = std::result::Result<T, ClassifierError>;

/// Stopping tolerance on the maximal KKT violation.
pub const DEFAULT_TOL: f64 = 1e-3;
const TAU: f64 = 1e-12;

fn default_max_iter(n: usize) -> usize {
    (100 * n).max(100_000)
}

struct Solution {
    alpha: Vec<f64>,
    bias: f64,
    converged: bool,
    iterations: usize,
    gap: f64,
}

/// Dual SMO on `min ½ αᵀQα − eᵀα`, `0 ≤ α ≤ C`, `yᵀα = 0`, with
/// `Q_ij = y_i y_j K(i, j)`.
fn smo(
    n: usize,
    y: &[f64],
    kernel: &dyn Fn(usize, usize) -> f64,
    c: f64,
    tol: f64,
    max_iter: usize,
) -> Solution {
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let diag: Vec<f64> = (0..n).map(|i| kernel(i, i)).collect();
    let up = |a: f64, y: f64| (y > 0.0 && a < c) || (y < 0.0 && a > 0.0);
    let low = |a: f64, y: f64| (y > 0.0 && a > 0.0) || (y < 0.0 && a < c);

    let mut iterations = 0;
    let mut gap = f64::INFINITY;
    let mut converged = false;
    while iterations < max_iter {
        // first index: maximal violation in I_up
        let mut i = usize::MAX;
        let mut g_max = f64::NEG_INFINITY;
        for t in 0..n {
            let v = -y[t] * grad[t];
            if up(alpha[t], y[t]) && v > g_max {
                g_max = v;
                i = t;
            }
        }
        // second index: largest predicted decrease in I_low
        let mut j = usize::MAX;
        let mut g_min = f64::INFINITY;
        let mut best = f64::INFINITY;
        if i != usize::MAX {
            for t in 0..n {
                if !low(alpha[t], y[t]) {
                    continue;
                }
                let v = -y[t] * grad[t];
                g_min = g_min.min(v);
                let b = g_max - v;
                if b > 0.0 {
                    let a = diag[i] + diag[t] - 2.0 * kernel(i, t);
                    let obj = -(b * b) / if a > 0.0 { a } else { TAU };
                    if obj < best {
                        best = obj;
                        j = t;
                    }
                }
            }
        }
        gap = g_max - g_min;
        if i == usize::MAX || j == usize::MAX || gap < tol {
            converged = true;
            break;
        }
        iterations += 1;

        let kij = kernel(i, j);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let quad = (diag[i] + diag[j] - 2.0 * kij).max(TAU);
        if y[i] != y[j] {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for (t, g) in grad.iter_mut().enumerate() {
            *g += y[t] * (y[i] * kernel(i, t) * di + y[j] * kernel(j, t) * dj);
        }
    }

    // bias from free vectors, or the midpoint of the feasible interval
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut sum, mut free) = (0.0, 0usize);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            sum += yg;
            free += 1;
        }
    }
    let rho = if free > 0 {
        sum / free as f64
    } else {
        0.5 * (ub + lb)
    };
    Solution {
        alpha,
        bias: -rho,
        converged,
        iterations,
        gap,
    }
}

/// Binary soft-margin SVM: `f(x) = Σ α_i y_i k(s_i, x) + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinarySvm {
    pub spec: KernelSpec,
    pub c: f64,
    /// Support vectors, row-major `n_support × dim`.
    support: Vec<f64>,
    pub dim: usize,
    /// Dual coefficient α_i of each support vector.
    pub dual: Vec<f64>,
    /// Label ±1 of each support vector.
    pub labels: Vec<f64>,
    pub bias: f64,
}

impl BinarySvm {
    pub fn n_support(&self) -> usize {
        self.dual.len()
    }

    pub fn support_vectors(&self) -> Matrix {
        Matrix::from_row_slice(self.n_support(), self.dim, &self.support)
    }

    fn decision_raw(&self, x: &[f64]) -> f64 {
        let mut f = self.bias;
        for ((sv, a), y) in self
            .support
            .chunks_exact(self.dim)
            .zip(&self.dual)
            .zip(&self.labels)
        {
            f += a * y * self.spec.eval(sv, x);
        }
        f
    }

    /// Decision value of every row of `x`.
    pub fn decision(&self, x: &Matrix) -> Result<Vec<f64>> {
        check_dim(self.dim, x.ncols())?;
        let rows = row_major(x);
        Ok(rows
            .chunks_exact(self.dim.max(1))
            .take(x.nrows())
            .map(|r| self.decision_raw(r))
            .collect())
    }
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(ClassifierError::DimensionMismatch { expected, got })
    }
}

fn validate_c(c: f64) -> Result<()> {
    if c.is_finite() && c > 0.0 {
        Ok(())
    } else {
        Err(ClassifierError::InvalidParameter(format!(
            "C must be positive, got {c}"
        )))
    }
}

fn assemble(
    spec: KernelSpec,
    c: f64,
    rows: &[f64],
    dim: usize,
    idx: &[usize],
    y: &[f64],
    sol: &Solution,
) -> BinarySvm {
    let mut support = Vec::new();
    let mut dual = Vec::new();
    let mut labels = Vec::new();
    for (k, &a) in sol.alpha.iter().enumerate() {
        if a > 0.0 {
            let r = idx[k];
            support.extend_from_slice(&rows[r * dim..(r + 1) * dim]);
            dual.push(a);
            labels.push(y[k]);
        }
    }
    BinarySvm {
        spec,
        c,
        support,
        dim,
        dual,
        labels,
        bias: sol.bias,
    }
}

/// Trains a binary SVM on rows of `x` with labels `y ∈ {+1, −1}`.
pub fn svm_train(
    x: &Matrix,
    y: &[f64],
    spec: KernelSpec,
    c: f64,
    tol: f64,
    max_iter: Option<usize>,
) -> Result<BinarySvm> {
    spec.validate()?;
    validate_c(c)?;
    if y.len() != x.nrows() {
        return Err(ClassifierError::InvalidParameter(format!(
            "{} labels for {} rows",
            y.len(),
            x.nrows()
        )));
    }
    if !(y.iter().any(|&v| v > 0.0) && y.iter().any(|&v| v < 0.0)) {
        return Err(ClassifierError::SingleClassInput);
    }
    let n = x.nrows();
    let dim = x.ncols();
    let rows = row_major(x);
    let mut gram = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let k = spec.eval(&rows[i * dim..(i + 1) * dim], &rows[j * dim..(j + 1) * dim]);
            gram[i * n + j] = k;
            gram[j * n + i] = k;
        }
    }
    let sol = smo(
        n,
        y,
        &|i, j| gram[i * n + j],
        c,
        tol,
        max_iter.unwrap_or_else(|| default_max_iter(n)),
    );
    if !sol.converged {
        return Err(ClassifierError::NoConvergence {
            iterations: sol.iterations,
            gap: sol.gap,
        });
    }
    let idx: Vec<usize> = (0..n).collect();
    Ok(assemble(spec, c, &rows, dim, &idx, y, &sol))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SvmModel {
    /// Two classes: class 0 is +1, class 1 is −1.
    Binary { model: BinarySvm },
    /// One model per class, class `l` against the rest.
    OneVsRest { models: Vec<BinarySvm> },
}

/// Multiclass kernel SVM over classes `0..n_classes`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classifier {
    pub n_classes: usize,
    pub dim: usize,
    pub model: SvmModel,
}

/// Precomputed kernel values over a fixed row set, so that several models
/// (folds, one-vs-rest members, values of C) can share them.
struct Gram<'a> {
    values: &'a [f64],
    n: usize,
}

impl Gram<'_> {
    #[inline]
    fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }
}

struct TrainSet<'a> {
    rows: &'a [f64],
    dim: usize,
    gram: Gram<'a>,
}

/// Fits on `idx` (indices into the train set) with the given labels.
/// `strict` turns an exhausted iteration budget into an error.
#[allow(clippy::too_many_arguments)]
fn fit_indexed(
    set: &TrainSet,
    idx: &[usize],
    labels: &[usize],
    n_classes: usize,
    spec: KernelSpec,
    c: f64,
    tol: f64,
    strict: bool,
) -> Result<Classifier> {
    let mut present = vec![false; n_classes];
    for &l in labels {
        present[l] = true;
    }
    if present.iter().filter(|&&p| p).count() < 2 {
        return Err(ClassifierError::SingleClassInput);
    }
    if n_classes > 2 {
        if let Some(class) = present.iter().position(|p| !p) {
            return Err(ClassifierError::ClassTooSmall {
                class,
                count: 0,
                required: 1,
            });
        }
    }
    let kernel = |a: usize, b: usize| set.gram.get(idx[a], idx[b]);
    let max_iter = default_max_iter(idx.len());
    let train_one = |positive: usize| -> Result<BinarySvm> {
        let y: Vec<f64> = labels
            .iter()
            .map(|&l| if l == positive { 1.0 } else { -1.0 })
            .collect();
        let sol = smo(idx.len(), &y, &kernel, c, tol, max_iter);
        if strict && !sol.converged {
            return Err(ClassifierError::NoConvergence {
                iterations: sol.iterations,
                gap: sol.gap,
            });
        }
        Ok(assemble(spec, c, set.rows, set.dim, idx, &y, &sol))
    };
    let model = if n_classes == 2 {
        SvmModel::Binary {
            model: train_one(0)?,
        }
    } else {
        SvmModel::OneVsRest {
            models: (0..n_classes).map(train_one).collect::<Result<_>>()?,
        }
    };
    Ok(Classifier {
        n_classes,
        dim: set.dim,
        model,
    })
}

fn rbf_gram(d2: &[f64], sigma: f64) -> Vec<f64> {
    d2.iter()
        .map(|&d| KernelSpec::rbf_from_sq_dist(sigma, d))
        .collect()
}

fn kernel_gram(spec: &KernelSpec, rows: &[f64], n: usize, dim: usize) -> Vec<f64> {
    let mut gram = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let k = spec.eval(&rows[i * dim..(i + 1) * dim], &rows[j * dim..(j + 1) * dim]);
            gram[i * n + j] = k;
            gram[j * n + i] = k;
        }
    }
    gram
}

fn sq_dist_matrix(rows: &[f64], n: usize, dim: usize) -> Vec<f64> {
    let mut d2 = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let v = sq_dist(&rows[i * dim..(i + 1) * dim], &rows[j * dim..(j + 1) * dim]);
            d2[i * n + j] = v;
            d2[j * n + i] = v;
        }
    }
    d2
}

impl Classifier {
    /// Trains on every row of `x` with class labels in `0..n_classes`.
    pub fn fit(
        x: &Matrix,
        labels: &[usize],
        n_classes: usize,
        spec: KernelSpec,
        c: f64,
    ) -> Result<Classifier> {
        spec.validate()?;
        validate_c(c)?;
        if labels.len() != x.nrows() {
            return Err(ClassifierError::InvalidParameter(format!(
                "{} labels for {} rows",
                labels.len(),
                x.nrows()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(ClassifierError::InvalidParameter(format!(
                "label {bad} out of range for {n_classes} classes"
            )));
        }
        let (n, dim) = x.shape();
        let rows = row_major(x);
        let gram = kernel_gram(&spec, &rows, n, dim);
        let set = TrainSet {
            rows: &rows,
            dim,
            gram: Gram { values: &gram, n },
        };
        let idx: Vec<usize> = (0..n).collect();
        fit_indexed(&set, &idx, labels, n_classes, spec, c, DEFAULT_TOL, false)
    }

    fn predict_raw(&self, x: &[f64]) -> usize {
        match &self.model {
            SvmModel::Binary { model } => usize::from(model.decision_raw(x) < 0.0),
            SvmModel::OneVsRest { models } => {
                let mut best = 0;
                let mut best_value = f64::NEG_INFINITY;
                for (l, m) in models.iter().enumerate() {
                    let v = m.decision_raw(x);
                    if v > best_value {
                        best = l;
                        best_value = v;
                    }
                }
                best
            }
        }
    }

    /// Predicted class of every row of `x`.
    pub fn predict(&self, x: &Matrix) -> Result<Vec<usize>> {
        check_dim(self.dim, x.ncols())?;
        let rows = row_major(x);
        Ok((0..x.nrows())
            .map(|i| self.predict_raw(&rows[i * self.dim..(i + 1) * self.dim]))
            .collect())
    }

    /// Fraction of rows of `x` predicted as `labels`.
    pub fn accuracy(&self, x: &Matrix, labels: &[usize]) -> Result<f64> {
        let predicted = self.predict(x)?;
        Ok(accuracy(&predicted, labels))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&ClassifierDocument {
            format: CLASSIFIER_FORMAT.to_string(),
            version: CLASSIFIER_VERSION,
            classifier: self.clone(),
        })
        .expect("classifier serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ClassifierDocument =
            serde_json::from_str(text).map_err(|e| ClassifierError::Document(e.to_string()))?;
        if doc.format != CLASSIFIER_FORMAT || doc.version != CLASSIFIER_VERSION {
            return Err(ClassifierError::Document(format!(
                "unsupported {} v{}",
                doc.format, doc.version
            )));
        }
        Ok(doc.classifier)
    }
}

const CLASSIFIER_FORMAT: &str = "ppdr-classifier";
const CLASSIFIER_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClassifierDocument {
    format: String,
    version: u32,
    classifier: Classifier,
}

pub fn accuracy(predicted: &[usize], truth: &[usize]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    predicted.iter().zip(truth).filter(|(p, t)| p == t).count() as f64 / truth.len() as f64
}

/// Search space of the cross-validated grid search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub c_values: Vec<f64>,
    /// RBF bandwidths as multiples of the median pairwise distance.
    pub sigma_multipliers: Vec<f64>,
    pub folds: usize,
    pub tol: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            c_values: vec![0.1, 1.0, 10.0, 100.0],
            sigma_multipliers: vec![0.25, 0.5, 1.0, 2.0, 4.0],
            folds: 10,
            tol: DEFAULT_TOL,
        }
    }
}

impl GridConfig {
    pub fn validate(&self) -> Result<()> {
        if self.c_values.is_empty() || self.sigma_multipliers.is_empty() {
            return Err(ClassifierError::InvalidParameter("empty grid".into()));
        }
        for &c in &self.c_values {
            validate_c(c)?;
        }
        if let Some(m) = self
            .sigma_multipliers
            .iter()
            .find(|m| !(m.is_finite() && **m > 0.0))
        {
            return Err(ClassifierError::InvalidParameter(format!(
                "sigma multiplier must be positive, got {m}"
            )));
        }
        if self.folds < 2 {
            return Err(ClassifierError::InvalidParameter(format!(
                "need at least 2 folds, got {}",
                self.folds
            )));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(ClassifierError::InvalidParameter(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub c: f64,
    pub sigma: f64,
    /// Mean of the per-fold accuracies.
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchReport {
    /// Ordered by C, then σ.
    pub points: Vec<GridPoint>,
    pub selected: usize,
    pub folds: usize,
    pub median_distance: f64,
}

impl GridSearchReport {
    pub fn best(&self) -> &GridPoint {
        &self.points[self.selected]
    }
}

/// Stratified k-fold grid search of an RBF SVM over `grid`. The selected
/// point has the highest fold-mean accuracy; ties go to the smaller C, then
/// the smaller σ.
pub fn grid_search(
    train: &LabeledDataset,
    target: &str,
    grid: &GridConfig,
    seed: u64,
) -> Result<GridSearchReport> {
    grid.validate()?;
    let t = train.target(target)?;
    for (class, &count) in t.class_counts().iter().enumerate() {
        if count < grid.folds {
            return Err(ClassifierError::ClassTooSmall {
                class,
                count,
                required: grid.folds,
            });
        }
    }
    let (n, dim) = train.features.shape();
    let rows = row_major(&train.features);
    let d2 = sq_dist_matrix(&rows, n, dim);
    let median = median_pairwise_distance(&train.features);
    let assignment = stratified_folds(&t.labels, grid.folds, seed);
    let n_classes = t.n_classes();

    let mut c_values = grid.c_values.clone();
    c_values.sort_by(f64::total_cmp);
    let mut sigmas: Vec<f64> = grid.sigma_multipliers.iter().map(|m| m * median).collect();
    sigmas.sort_by(f64::total_cmp);

    let mut accuracy_by: Vec<Vec<f64>> = vec![vec![0.0; sigmas.len()]; c_values.len()];
    for (si, &sigma) in sigmas.iter().enumerate() {
        let gram = rbf_gram(&d2, sigma);
        let set = TrainSet {
            rows: &rows,
            dim,
            gram: Gram { values: &gram, n },
        };
        let spec = KernelSpec::rbf(sigma);
        let jobs: Vec<(usize, usize)> = (0..c_values.len())
            .flat_map(|ci| (0..grid.folds).map(move |f| (ci, f)))
            .collect();
        let fold_acc = jobs
            .par_iter()
            .map(|&(ci, f)| {
                let train_idx: Vec<usize> = (0..n).filter(|&i| assignment[i] != f).collect();
                let test_idx: Vec<usize> = (0..n).filter(|&i| assignment[i] == f).collect();
                let labels: Vec<usize> = train_idx.iter().map(|&i| t.labels[i]).collect();
                let model = fit_indexed(
                    &set,
                    &train_idx,
                    &labels,
                    n_classes,
                    spec,
                    c_values[ci],
                    grid.tol,
                    false,
                )?;
                let truth: Vec<usize> = test_idx.iter().map(|&i| t.labels[i]).collect();
                let predicted: Vec<usize> = test_idx
                    .iter()
                    .map(|&i| model.predict_raw(&rows[i * dim..(i + 1) * dim]))
                    .collect();
                Ok(accuracy(&predicted, &truth))
            })
            .collect::<Result<Vec<f64>>>()?;
        for (&(ci, _), acc) in jobs.iter().zip(fold_acc) {
            accuracy_by[ci][si] += acc / grid.folds as f64;
        }
    }

    let mut points = Vec::with_capacity(c_values.len() * sigmas.len());
    let mut selected = 0;
    for (ci, &c) in c_values.iter().enumerate() {
        for (si, &sigma) in sigmas.iter().enumerate() {
            let accuracy = accuracy_by[ci][si];
            if accuracy
                > points
                    .get(selected)
                    .map_or(f64::NEG_INFINITY, |p: &GridPoint| p.accuracy)
            {
                selected = points.len();
            }
            points.push(GridPoint { c, sigma, accuracy });
        }
    }
    Ok(GridSearchReport {
        points,
        selected,
        folds: grid.folds,
        median_distance: median,
    })
}

/// Grid search followed by a fit on the whole training split at the selected
/// point.
pub fn fit_best(
    train: &LabeledDataset,
    target: &str,
    grid: &GridConfig,
    seed: u64,
) -> Result<(Classifier, GridSearchReport)> {
    let report = grid_search(train, target, grid, seed)?;
    let best = report.best();
    let t = train.target(target)?;
    let model = Classifier::fit(
        &train.features,
        &t.labels,
        t.n_classes(),
        KernelSpec::rbf(best.sigma),
        best.c,
    )?;
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Target;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn blobs(centers: &[[f64; 2]], per: usize, spread: f64, seed: u64) -> (Matrix, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = centers.len() * per;
        let labels: Vec<usize> = (0..n).map(|i| i / per).collect();
        let x = Matrix::from_fn(n, 2, |i, j| {
            centers[i / per][j] + spread * rng.sample::<f64, _>(StandardNormal)
        });
        (x, labels)
    }

    fn dataset(x: Matrix, labels: Vec<usize>, n_classes: usize) -> LabeledDataset {
        let n = x.nrows();
        LabeledDataset {
            feature_names: (0..x.ncols()).map(|j| format!("f{j}")).collect(),
            features: x,
            targets: vec![Target {
                name: "t".into(),
                classes: (0..n_classes).map(|c| c.to_string()).collect(),
                labels,
            }],
            source_rows: (0..n).collect(),
            role: None,
        }
    }

    fn signs(labels: &[usize]) -> Vec<f64> {
        labels
            .iter()
            .map(|&l| if l == 0 { 1.0 } else { -1.0 })
            .collect()
    }

    #[test]
    fn separable_linear() {
        let (x, labels) = blobs(&[[-3.0, 0.0], [3.0, 0.5]], 20, 0.5, 1);
        let model = svm_train(
            &x,
            &signs(&labels),
            KernelSpec::Linear,
            1.0,
            DEFAULT_TOL,
            None,
        )
        .unwrap();
        let f = model.decision(&x).unwrap();
        assert!(f.iter().zip(&labels).all(|(v, &l)| (*v > 0.0) == (l == 0)));
    }

    #[test]
    fn xor_with_rbf() {
        let x = Matrix::from_row_slice(4, 2, &[0., 0., 1., 1., 0., 1., 1., 0.]);
        let y = [1.0, 1.0, -1.0, -1.0];
        let model = svm_train(&x, &y, KernelSpec::rbf(0.5), 10.0, DEFAULT_TOL, None).unwrap();
        let f = model.decision(&x).unwrap();
        assert!(f.iter().zip(&y).all(|(v, t)| v * t > 0.0), "{f:?}");
    }

    #[test]
    fn identical_features_predict_the_majority() {
        let x = Matrix::from_element(7, 2, 0.3);
        let labels = [0, 1, 0, 0, 1, 0, 0];
        let clf = Classifier::fit(&x, &labels, 2, KernelSpec::rbf(1.0), 1.0).unwrap();
        assert_eq!(clf.accuracy(&x, &labels).unwrap(), 5.0 / 7.0);
    }

    #[test]
    fn dual_feasibility_and_kkt() {
        let (x, labels) = blobs(&[[-1.0, 0.0], [1.0, 0.0]], 30, 1.0, 2);
        let y = signs(&labels);
        let c = 2.0;
        let spec = KernelSpec::rbf(1.0);
        let model = svm_train(&x, &y, spec, c, 1e-4, None).unwrap();
        assert!(model.dual.iter().all(|&a| a > 0.0 && a <= c));
        let balance: f64 = model
            .dual
            .iter()
            .zip(&model.labels)
            .map(|(a, y)| a * y)
            .sum();
        assert!(balance.abs() < 1e-6);

        // ε-KKT on every training point; the margin is y f(x)
        let f = model.decision(&x).unwrap();
        let sv = model.support_vectors();
        let alpha_of = |i: usize| {
            (0..sv.nrows())
                .find(|&k| sv.row(k) == x.row(i))
                .map_or(0.0, |k| model.dual[k])
        };
        for i in 0..x.nrows() {
            let margin = y[i] * f[i];
            let a = alpha_of(i);
            if a == 0.0 {
                assert!(margin >= 1.0 - 1e-3, "row {i}: margin {margin}");
            } else if a >= c {
                assert!(margin <= 1.0 + 1e-3, "row {i}: margin {margin}");
            } else {
                assert!((margin - 1.0).abs() <= 1e-3, "row {i}: margin {margin}");
            }
        }
    }

    #[test]
    fn single_class_and_bad_parameters() {
        let x = Matrix::zeros(3, 1);
        assert!(matches!(
            svm_train(
                &x,
                &[1.0, 1.0, 1.0],
                KernelSpec::Linear,
                1.0,
                DEFAULT_TOL,
                None
            ),
            Err(ClassifierError::SingleClassInput)
        ));
        assert!(matches!(
            svm_train(
                &x,
                &[1.0, -1.0, 1.0],
                KernelSpec::Linear,
                0.0,
                DEFAULT_TOL,
                None
            ),
            Err(ClassifierError::InvalidParameter(_))
        ));
    }

    #[test]
    fn exhausted_budget_is_an_error_in_strict_training() {
        let (x, labels) = blobs(&[[-0.2, 0.0], [0.2, 0.0]], 30, 1.0, 3);
        assert!(matches!(
            svm_train(
                &x,
                &signs(&labels),
                KernelSpec::rbf(1.0),
                100.0,
                1e-6,
                Some(3)
            ),
            Err(ClassifierError::NoConvergence { iterations: 3, .. })
        ));
    }

    #[test]
    fn one_vs_rest_and_tie_break() {
        let (x, labels) = blobs(&[[-4.0, 0.0], [4.0, 0.0], [0.0, 5.0]], 15, 0.4, 4);
        let clf = Classifier::fit(&x, &labels, 3, KernelSpec::rbf(1.5), 10.0).unwrap();
        assert!(matches!(clf.model, SvmModel::OneVsRest { ref models } if models.len() == 3));
        assert_eq!(clf.accuracy(&x, &labels).unwrap(), 1.0);

        let batch = clf.predict(&x).unwrap();
        for i in [0, 20, 44] {
            assert_eq!(
                clf.predict(&x.rows(i, 1).into_owned()).unwrap()[0],
                batch[i]
            );
        }

        let sym = Matrix::from_row_slice(2, 1, &[-1.0, 1.0]);
        let binary = Classifier::fit(&sym, &[0, 1], 2, KernelSpec::rbf(1.0), 1.0).unwrap();
        assert_eq!(
            binary
                .predict(&Matrix::from_row_slice(1, 1, &[0.0]))
                .unwrap(),
            vec![0]
        );
        assert!(matches!(
            binary.predict(&Matrix::zeros(1, 2)),
            Err(ClassifierError::DimensionMismatch {
                expected: 1,
                got: 2
            })
        ));
    }

    #[test]
    fn relabeling_permutes_predictions() {
        let (x, labels) = blobs(&[[-3.0, 0.0], [3.0, 0.0], [0.0, 4.0]], 12, 0.8, 5);
        let perm = [2, 0, 1];
        let relabeled: Vec<usize> = labels.iter().map(|&l| perm[l]).collect();
        let a = Classifier::fit(&x, &labels, 3, KernelSpec::rbf(1.0), 1.0).unwrap();
        let b = Classifier::fit(&x, &relabeled, 3, KernelSpec::rbf(1.0), 1.0).unwrap();
        let (q, _) = blobs(&[[-3.0, 0.0], [3.0, 0.0], [0.0, 4.0]], 5, 1.0, 6);
        let pa = a.predict(&q).unwrap();
        let pb = b.predict(&q).unwrap();
        assert!(pa.iter().zip(&pb).all(|(&u, &v)| perm[u] == v));
    }

    #[test]
    fn document_round_trip() {
        let (x, labels) = blobs(&[[-1.0, 0.0], [1.0, 0.0]], 10, 0.7, 7);
        let clf = Classifier::fit(&x, &labels, 2, KernelSpec::rbf(0.8), 1.0).unwrap();
        assert_eq!(Classifier::from_json(&clf.to_json()).unwrap(), clf);
    }

    #[test]
    fn grid_search_contract() {
        let (x, labels) = blobs(&[[-2.0, 0.0], [2.0, 0.0]], 20, 0.8, 8);
        let data = dataset(x, labels, 2);
        let single = GridConfig {
            c_values: vec![1.0],
            sigma_multipliers: vec![1.0],
            folds: 4,
            ..GridConfig::default()
        };
        let r = grid_search(&data, "t", &single, 1).unwrap();
        assert_eq!((r.points.len(), r.selected), (1, 0));

        let full = GridConfig {
            folds: 5,
            ..GridConfig::default()
        };
        let r = grid_search(&data, "t", &full, 1).unwrap();
        assert_eq!(r.points.len(), 20);
        assert_eq!(r, grid_search(&data, "t", &full, 1).unwrap());
        let best = r.best();
        for (k, p) in r.points.iter().enumerate() {
            assert!(p.accuracy <= best.accuracy);
            if p.accuracy == best.accuracy {
                // earlier points (smaller C, then smaller σ) win ties
                assert!(k >= r.selected);
            }
        }
        assert!(best.accuracy > 0.9);

        let tight = GridConfig {
            folds: 30,
            ..GridConfig::default()
        };
        assert!(matches!(
            grid_search(&data, "t", &tight, 1),
            Err(ClassifierError::ClassTooSmall { .. })
        ));
    }
}
