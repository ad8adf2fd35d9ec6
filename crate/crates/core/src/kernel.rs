//! Kernel functions, kernel matrices, the MMD statistic and the kernel-mean
//! label function.
//!
//! The feature map is never materialized: every quantity is written in terms
//! of kernel evaluations.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{stratified_folds, DatasetError, LabeledDataset};
use crate::linalg::{Matrix, Vector};

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("expected dimension {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("sample set is empty")]
    EmptySampleSet,
    #[error("class {0} has no samples")]
    EmptyClass(usize),
    #[error("invalid kernel: {0}")]
    InvalidSpec(String),
    #[error("class {class} has {count} samples, {required} required")]
    ClassTooSmall {
        class: usize,
        count: usize,
        required: usize,
    },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

pub type Result<T> = std::result::Result<T, KernelError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase", deny_unknown_fields)]
pub enum KernelSpec {
    /// `exp(−‖x − y‖² / 2σ²)`
    Rbf { sigma: f64 },
    /// `xᵀy`
    Linear,
    /// `(xᵀy + coef)^degree`
    Polynomial { degree: u32, coef: f64 },
}

impl KernelSpec {
    pub fn rbf(sigma: f64) -> Self {
        KernelSpec::Rbf { sigma }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Rbf { sigma } if !(sigma.is_finite() && sigma > 0.0) => Err(
                KernelError::InvalidSpec(format!("sigma must be positive, got {sigma}")),
            ),
            KernelSpec::Polynomial { degree: 0, .. } => {
                Err(KernelError::InvalidSpec("degree must be at least 1".into()))
            }
            KernelSpec::Polynomial { coef, .. } if !coef.is_finite() => Err(
                KernelError::InvalidSpec(format!("coef must be finite, got {coef}")),
            ),
            _ => Ok(()),
        }
    }

    /// RBF bandwidth, if this is an RBF kernel.
    pub fn sigma(&self) -> Option<f64> {
        match *self {
            KernelSpec::Rbf { sigma } => Some(sigma),
            _ => None,
        }
    }

    /// Evaluates the kernel on two equal-length slices (unchecked).
    #[inline]
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), y.len());
        match *self {
            KernelSpec::Rbf { sigma } => (-sq_dist(x, y) / (2.0 * sigma * sigma)).exp(),
            KernelSpec::Linear => dot(x, y),
            KernelSpec::Polynomial { degree, coef } => (dot(x, y) + coef).powi(degree as i32),
        }
    }

    /// RBF kernel value from a precomputed squared distance.
    #[inline]
    pub fn rbf_from_sq_dist(sigma: f64, d2: f64) -> f64 {
        (-d2 / (2.0 * sigma * sigma)).exp()
    }
}

#[inline]
pub(crate) fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

#[inline]
fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// Copies the rows of `x` into one contiguous row-major buffer.
pub(crate) fn row_major(x: &Matrix) -> Vec<f64> {
    let (n, m) = x.shape();
    let mut out = Vec::with_capacity(n * m);
    for i in 0..n {
        out.extend(x.row(i).iter());
    }
    out
}

pub fn kernel_eval(spec: &KernelSpec, x: &Vector, y: &Vector) -> Result<f64> {
    spec.validate()?;
    if x.len() != y.len() {
        return Err(KernelError::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    Ok(spec.eval(x.as_slice(), y.as_slice()))
}

/// Cross kernel matrix `K[i, j] = k(x_i, y_j)`.
pub fn cross_kernel_matrix(spec: &KernelSpec, x: &Matrix, y: &Matrix) -> Result<Matrix> {
    spec.validate()?;
    if x.ncols() != y.ncols() {
        return Err(KernelError::DimensionMismatch {
            expected: x.ncols(),
            got: y.ncols(),
        });
    }
    let (xr, yr, m) = (row_major(x), row_major(y), x.ncols());
    Ok(Matrix::from_fn(x.nrows(), y.nrows(), |i, j| {
        spec.eval(&xr[i * m..(i + 1) * m], &yr[j * m..(j + 1) * m])
    }))
}

pub fn kernel_matrix(spec: &KernelSpec, x: &Matrix) -> Result<Matrix> {
    cross_kernel_matrix(spec, x, x)
}

/// Mean of `k(x_i, y_j)` over all pairs, summed in row order.
fn mean_cross(spec: &KernelSpec, x: &[f64], y: &[f64], m: usize) -> f64 {
    let (nx, ny) = (x.len() / m, y.len() / m);
    let mut total = 0.0;
    for a in x.chunks_exact(m) {
        for b in y.chunks_exact(m) {
            total += spec.eval(a, b);
        }
    }
    total / (nx * ny) as f64
}

fn compare_samples(x: &Matrix, y: &Matrix) -> Ordering {
    x.shape().cmp(&y.shape()).then_with(|| {
        x.iter()
            .zip(y.iter())
            .map(|(a, b)| a.total_cmp(b))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    })
}

/// Kernel maximum mean discrepancy between two sample sets:
/// `sqrt(mean k(X, X) − 2 mean k(X, Y) + mean k(Y, Y))`.
///
/// The arguments are put in a canonical order first, so the result is
/// exactly symmetric.
pub fn mmd(spec: &KernelSpec, x: &Matrix, y: &Matrix) -> Result<f64> {
    spec.validate()?;
    if x.nrows() == 0 || y.nrows() == 0 {
        return Err(KernelError::EmptySampleSet);
    }
    if x.ncols() != y.ncols() {
        return Err(KernelError::DimensionMismatch {
            expected: x.ncols(),
            got: y.ncols(),
        });
    }
    let (x, y) = if compare_samples(x, y) == Ordering::Greater {
        (y, x)
    } else {
        (x, y)
    };
    let m = x.ncols();
    let (xr, yr) = (row_major(x), row_major(y));
    let squared = mean_cross(spec, &xr, &xr, m) - 2.0 * mean_cross(spec, &xr, &yr, m)
        + mean_cross(spec, &yr, &yr, m);
    Ok(squared.max(0.0).sqrt())
}

/// Median Euclidean distance over all distinct row pairs. Falls back to 1
/// when the rows are all identical or there are fewer than two.
pub fn median_pairwise_distance(x: &Matrix) -> f64 {
    let m = x.ncols();
    let rows = row_major(x);
    let n = x.nrows();
    let mut d: Vec<f64> = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            d.push(sq_dist(&rows[i * m..(i + 1) * m], &rows[j * m..(j + 1) * m]).sqrt());
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    d.sort_by(f64::total_cmp);
    let mid = d.len() / 2;
    let median = if d.len().is_multiple_of(2) {
        0.5 * (d[mid - 1] + d[mid])
    } else {
        d[mid]
    };
    if median > 0.0 {
        median
    } else {
        1.0
    }
}

#[derive(Debug, Clone, PartialEq)]
struct ClassRows {
    data: Vec<f64>,
    n: usize,
    /// `(1/n²) Σ_i Σ_j k(x_i, x_j)`
    self_mean: f64,
}

/// Per-class sample sets in a common space, with each class's self-kernel
/// mean precomputed for the chosen kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassBank {
    spec: KernelSpec,
    dim: usize,
    classes: Vec<ClassRows>,
}

impl ClassBank {
    /// `classes[l]` holds the samples of class `l`, one per row.
    pub fn new(spec: KernelSpec, classes: &[Matrix]) -> Result<Self> {
        spec.validate()?;
        if classes.is_empty() {
            return Err(KernelError::EmptySampleSet);
        }
        let dim = classes[0].ncols();
        let mut out = Vec::with_capacity(classes.len());
        for (l, x) in classes.iter().enumerate() {
            if x.nrows() == 0 {
                return Err(KernelError::EmptyClass(l));
            }
            if x.ncols() != dim {
                return Err(KernelError::DimensionMismatch {
                    expected: dim,
                    got: x.ncols(),
                });
            }
            let data = row_major(x);
            let self_mean = mean_cross(&spec, &data, &data, dim);
            out.push(ClassRows {
                data,
                n: x.nrows(),
                self_mean,
            });
        }
        Ok(ClassBank {
            spec,
            dim,
            classes: out,
        })
    }

    /// Groups the rows of `data` by their `target` class.
    pub fn from_dataset(spec: KernelSpec, data: &LabeledDataset, target: &str) -> Result<Self> {
        let t = data.target(target)?;
        let groups: Vec<Matrix> = (0..t.n_classes())
            .map(|l| {
                let rows: Vec<usize> = (0..data.n_rows()).filter(|&i| t.labels[i] == l).collect();
                data.features.select_rows(&rows)
            })
            .collect();
        ClassBank::new(spec, &groups)
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn class_size(&self, l: usize) -> usize {
        self.classes[l].n
    }

    pub fn self_mean(&self, l: usize) -> f64 {
        self.classes[l].self_mean
    }

    /// Rows of class `l` as slices.
    pub fn rows(&self, l: usize) -> impl Iterator<Item = &[f64]> {
        self.classes[l].data.chunks_exact(self.dim)
    }

    pub fn samples(&self, l: usize) -> Matrix {
        Matrix::from_row_slice(self.classes[l].n, self.dim, &self.classes[l].data)
    }

    /// `Σ_i k(x_i, z)` over class `l`.
    pub fn kernel_sum(&self, l: usize, z: &[f64]) -> f64 {
        self.rows(l).map(|x| self.spec.eval(x, z)).sum()
    }

    /// Per-class score `(1/n_l²) ΣΣ k(x_i, x_j) − (2/n_l) Σ k(x_i, z)`; the
    /// class-independent `k(z, z)` term is dropped.
    pub fn scores(&self, z: &[f64]) -> Vec<f64> {
        (0..self.n_classes())
            .map(|l| {
                self.classes[l].self_mean - 2.0 * self.kernel_sum(l, z) / self.classes[l].n as f64
            })
            .collect()
    }

    /// Class whose kernel mean lies nearest to `z` (lowest index on ties).
    pub fn label(&self, z: &[f64]) -> usize {
        argmin(&self.scores(z))
    }

    pub fn check_dim(&self, got: usize) -> Result<()> {
        if got == self.dim {
            Ok(())
        } else {
            Err(KernelError::DimensionMismatch {
                expected: self.dim,
                got,
            })
        }
    }
}

/// Checked form of [`ClassBank::label`].
pub fn label(bank: &ClassBank, z: &Vector) -> Result<usize> {
    bank.check_dim(z.len())?;
    Ok(bank.label(z.as_slice()))
}

/// Index of the smallest value; the first one wins ties.
pub fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v < values[best] {
            best = i;
        }
    }
    best
}

/// RBF bandwidth multipliers tried by [`select_sigma`], applied to the median
/// pairwise distance.
pub const SIGMA_MULTIPLIERS: [f64; 6] = [0.1, 0.5, 1.0, 2.0, 5.0, 10.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaSelection {
    pub sigma: f64,
    pub median_distance: f64,
    /// `(σ, cross-validated accuracy)` for every grid point.
    pub grid: Vec<(f64, f64)>,
}

/// Chooses the RBF bandwidth by k-fold cross-validated accuracy of the
/// kernel-mean label function on `train`. On equal accuracy the larger σ is
/// kept, since smoother kernels give the sanitizer usable gradients farther
/// from the data.
pub fn select_sigma(
    train: &LabeledDataset,
    target: &str,
    multipliers: &[f64],
    folds: usize,
    seed: u64,
) -> Result<SigmaSelection> {
    let t = train.target(target)?;
    if multipliers.is_empty() {
        return Err(KernelError::InvalidSpec("empty bandwidth grid".into()));
    }
    let folds = folds.max(2);
    for (class, &count) in t.class_counts().iter().enumerate() {
        if count < folds {
            return Err(KernelError::ClassTooSmall {
                class,
                count,
                required: folds,
            });
        }
    }
    let median = median_pairwise_distance(&train.features);
    let n = train.n_rows();
    let m = train.n_features();
    let rows = row_major(&train.features);
    let mut d2 = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let v = sq_dist(&rows[i * m..(i + 1) * m], &rows[j * m..(j + 1) * m]);
            d2[i * n + j] = v;
            d2[j * n + i] = v;
        }
    }
    let assignment = stratified_folds(&t.labels, folds, seed);
    let n_classes = t.n_classes();

    let mut grid = Vec::with_capacity(multipliers.len());
    for &mult in multipliers {
        let sigma = mult * median;
        let k = |i: usize, j: usize| KernelSpec::rbf_from_sq_dist(sigma, d2[i * n + j]);
        let mut correct = 0usize;
        for f in 0..folds {
            let members: Vec<Vec<usize>> = (0..n_classes)
                .map(|l| {
                    (0..n)
                        .filter(|&i| assignment[i] != f && t.labels[i] == l)
                        .collect()
                })
                .collect();
            let self_means: Vec<f64> = members
                .iter()
                .map(|rows| {
                    let s: f64 = rows
                        .iter()
                        .flat_map(|&i| rows.iter().map(move |&j| (i, j)))
                        .map(|(i, j)| k(i, j))
                        .sum();
                    s / (rows.len() * rows.len()) as f64
                })
                .collect();
            for q in (0..n).filter(|&i| assignment[i] == f) {
                let scores: Vec<f64> = (0..n_classes)
                    .map(|l| {
                        let s: f64 = members[l].iter().map(|&i| k(i, q)).sum();
                        self_means[l] - 2.0 * s / members[l].len() as f64
                    })
                    .collect();
                if argmin(&scores) == t.labels[q] {
                    correct += 1;
                }
            }
        }
        grid.push((sigma, correct as f64 / n as f64));
    }
    let best = grid
        .iter()
        .enumerate()
        .fold(0, |best, (i, g)| if g.1 >= grid[best].1 { i } else { best });
    Ok(SigmaSelection {
        sigma: grid[best].0,
        median_distance: median,
        grid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Target;
    use crate::linalg::symmetric_eig;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn col(values: &[f64]) -> Matrix {
        Matrix::from_column_slice(values.len(), 1, values)
    }

    fn gaussian(n: usize, m: usize, shift: f64, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(n, m, |_, _| rng.sample::<f64, _>(StandardNormal) + shift)
    }

    #[test]
    fn kernel_values() {
        let rbf = KernelSpec::rbf(1.0);
        let x = Vector::from_vec(vec![1.0, 2.0]);
        assert_eq!(kernel_eval(&rbf, &x, &x).unwrap(), 1.0);
        let y = Vector::from_vec(vec![2.0, 3.0]);
        assert_abs_diff_eq!(
            kernel_eval(&rbf, &x, &y).unwrap(),
            (-1.0f64).exp(),
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(kernel_eval(&rbf, &x, &y).unwrap(), 0.367879, epsilon = 1e-6);
        let a = Vector::from_vec(vec![3.0, 4.0]);
        assert_eq!(kernel_eval(&KernelSpec::Linear, &x, &a).unwrap(), 11.0);
        let poly = KernelSpec::Polynomial {
            degree: 2,
            coef: 1.0,
        };
        assert_eq!(kernel_eval(&poly, &x, &a).unwrap(), 144.0);
        assert!(matches!(
            kernel_eval(&rbf, &x, &Vector::zeros(3)),
            Err(KernelError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn invalid_specs() {
        assert!(KernelSpec::rbf(0.0).validate().is_err());
        assert!(KernelSpec::rbf(f64::NAN).validate().is_err());
        assert!(KernelSpec::Polynomial {
            degree: 0,
            coef: 0.0
        }
        .validate()
        .is_err());
        let json = serde_json::to_string(&KernelSpec::rbf(0.5)).unwrap();
        assert_eq!(json, r#"{"family":"rbf","sigma":0.5}"#);
        assert_eq!(
            serde_json::from_str::<KernelSpec>(&json).unwrap(),
            KernelSpec::rbf(0.5)
        );
    }

    #[test]
    fn mmd_closed_forms() {
        let rbf = KernelSpec::rbf(1.0);
        let x = gaussian(30, 3, 0.0, 1);
        assert!(mmd(&rbf, &x, &x).unwrap() <= 1e-10);
        for d in [0.1, 1.0, 2.5] {
            let want = (2.0 - 2.0 * (-d * d / 2.0f64).exp()).sqrt();
            assert_abs_diff_eq!(
                mmd(&rbf, &col(&[0.0]), &col(&[d])).unwrap(),
                want,
                epsilon = 1e-12
            );
        }
        assert!(matches!(
            mmd(&rbf, &Matrix::zeros(0, 1), &x),
            Err(KernelError::EmptySampleSet)
        ));
    }

    #[test]
    fn mmd_orders_same_versus_shifted() {
        let rbf = KernelSpec::rbf(1.0);
        let x = gaussian(200, 2, 0.0, 10);
        let same = gaussian(200, 2, 0.0, 11);
        let shifted = gaussian(200, 2, 3.0, 12);
        assert!(mmd(&rbf, &x, &same).unwrap() < mmd(&rbf, &x, &shifted).unwrap());
    }

    #[test]
    fn label_examples() {
        let rbf = KernelSpec::rbf(1.0);
        let single = ClassBank::new(rbf, &[col(&[-3.0]), col(&[0.4]), col(&[5.0])]).unwrap();
        assert_eq!(single.label(&[0.4]), 1);

        let tight = |c: f64| {
            col(&(0..10)
                .map(|i| c + 0.01 * (i as f64 - 4.5))
                .collect::<Vec<_>>())
        };
        let bank = ClassBank::new(rbf, &[tight(-1.0), tight(1.0)]).unwrap();
        assert_eq!(bank.label(&[0.9]), 1);
        assert_eq!(bank.label(&[-0.9]), 0);

        let symmetric = ClassBank::new(rbf, &[col(&[-1.0, -2.0]), col(&[1.0, 2.0])]).unwrap();
        assert_eq!(symmetric.label(&[0.0]), 0);
        assert!(matches!(
            label(&symmetric, &Vector::zeros(2)),
            Err(KernelError::DimensionMismatch {
                expected: 1,
                got: 2
            })
        ));
        assert!(matches!(
            ClassBank::new(rbf, &[col(&[1.0]), Matrix::zeros(0, 1)]),
            Err(KernelError::EmptyClass(1))
        ));
    }

    #[test]
    fn bank_self_means_match_direct_evaluation() {
        let spec = KernelSpec::rbf(0.7);
        let classes = [gaussian(7, 3, 0.0, 1), gaussian(12, 3, 1.0, 2)];
        let bank = ClassBank::new(spec, &classes).unwrap();
        for (l, x) in classes.iter().enumerate() {
            let k = kernel_matrix(&spec, x).unwrap();
            assert_abs_diff_eq!(
                bank.self_mean(l),
                k.sum() / (x.nrows() * x.nrows()) as f64,
                epsilon = 1e-10
            );
            assert_eq!(&bank.samples(l), x);
        }
    }

    #[test]
    fn median_distance() {
        assert_eq!(median_pairwise_distance(&col(&[0.0, 1.0, 3.0])), 2.0);
        assert_eq!(median_pairwise_distance(&col(&[0.0, 1.0, 3.0, 6.0])), 3.0);
        assert_eq!(median_pairwise_distance(&col(&[2.0, 2.0])), 1.0);
    }

    #[test]
    fn sigma_selection_is_deterministic_and_on_grid() {
        let a = gaussian(20, 2, -1.5, 3);
        let b = gaussian(20, 2, 1.5, 4);
        let features = Matrix::from_fn(
            40,
            2,
            |i, j| if i < 20 { a[(i, j)] } else { b[(i - 20, j)] },
        );
        let data = LabeledDataset {
            features,
            feature_names: vec!["a".into(), "b".into()],
            targets: vec![Target {
                name: "t".into(),
                classes: vec!["0".into(), "1".into()],
                labels: (0..40).map(|i| i / 20).collect(),
            }],
            source_rows: (0..40).collect(),
            role: None,
        };
        let s = select_sigma(&data, "t", &SIGMA_MULTIPLIERS, 5, 9).unwrap();
        assert_eq!(
            s,
            select_sigma(&data, "t", &SIGMA_MULTIPLIERS, 5, 9).unwrap()
        );
        assert_eq!(s.grid.len(), 6);
        let best = s.grid.iter().map(|g| g.1).fold(0.0, f64::max);
        assert!(best > 0.9);
        assert!(s.grid.iter().any(|g| g.0 == s.sigma && g.1 == best));
        assert!(matches!(
            select_sigma(&data, "t", &SIGMA_MULTIPLIERS, 30, 9),
            Err(KernelError::ClassTooSmall { .. })
        ));
    }

    proptest! {
        #[test]
        fn mmd_is_exactly_symmetric(seed in any::<u64>(), nx in 1usize..12, ny in 1usize..12, sigma in 0.1f64..5.0) {
            let x = gaussian(nx, 3, 0.0, seed);
            let y = gaussian(ny, 3, 0.5, seed.wrapping_add(1));
            let spec = KernelSpec::rbf(sigma);
            prop_assert_eq!(mmd(&spec, &x, &y).unwrap().to_bits(), mmd(&spec, &y, &x).unwrap().to_bits());
            prop_assert!(mmd(&spec, &x, &x).unwrap() <= 1e-10);
        }

        #[test]
        fn rbf_gram_is_psd(seed in any::<u64>(), n in 1usize..50, sigma in 0.05f64..10.0) {
            let x = gaussian(n, 4, 0.0, seed);
            let k = kernel_matrix(&KernelSpec::rbf(sigma), &x).unwrap();
            prop_assert_eq!(&k, &k.transpose());
            let smallest = *symmetric_eig(&k).unwrap().values.last().unwrap();
            prop_assert!(smallest >= -1e-8, "smallest eigenvalue {}", smallest);
        }

        #[test]
        fn label_ignores_common_rescaling(seed in any::<u64>(), c in 0.01f64..100.0) {
            let spec = KernelSpec::rbf(1.0);
            let bank = ClassBank::new(spec, &[gaussian(5, 2, -1.0, seed), gaussian(6, 2, 1.0, seed ^ 7), gaussian(4, 2, 0.0, seed ^ 9)]).unwrap();
            let z = gaussian(1, 2, 0.0, seed ^ 13);
            let scores = bank.scores(z.as_slice());
            let scaled: Vec<f64> = scores.iter().map(|s| s * c).collect();
            prop_assert_eq!(argmin(&scaled), bank.label(z.as_slice()));
        }
    }
}
