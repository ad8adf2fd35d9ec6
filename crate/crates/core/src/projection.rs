//! Coarse-grained perturbation: K-dimensional linear projections.
//!
//! The supervised methods all take the top-K generalized eigenvectors of a
//! scatter-matrix pencil `(A, B)`:
//!
//! | method | A | B |
//! |---|---|---|
//! | DCA  | S_BU | S_total + ρ₀I |
//! | MDR  | S_BU | S_BP + ρ₀I |
//! | JUPA | S_BU + ρ′₁ S_WP | S_WU + ρ₁ S_BP + ρ₀I |
//!
//! Multi-target JUPA sums the utility terms over every utility target and
//! the weighted privacy terms over every privacy target. Eigenvector columns
//! are rescaled to unit Euclidean length; the subspace and B-orthogonality
//! are unaffected.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::LabeledDataset;
use crate::linalg::{
    self, frobenius, generalized_eig, min_singular_value, symmetric_eig, LinalgError, Matrix,
    Vector,
};
use crate::scatter::ScatterSet;

/// Columns of a fitted W must have a smallest singular value above this.
pub const MIN_SINGULAR_VALUE: f64 = 1e-10;
/// A pencil numerator below this fraction of the denominator's norm is treated as zero.
const EMPTY_PENCIL_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum ProjectionError {
    #[error("K = {k} must satisfy 1 <= K < M = {m}")]
    KTooLarge { k: usize, m: usize },
    #[error("pencil numerator is zero; no discriminant direction exists")]
    EmptyPencil,
    #[error("parameter list lengths do not match: {0}")]
    LengthMismatch(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("projection matrix is rank deficient (smallest singular value {0:.3e})")]
    RankDeficient(f64),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("model document: {0}")]
    Document(String),
}

pub type Result<T> = std::result::Result<T, ProjectionError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Full-dimensional baseline: no projection.
    Identity,
    Pca,
    Random,
    Dca,
    Mdr,
    Jupa,
    JupaMulti,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Identity => "full",
            Method::Pca => "pca",
            Method::Random => "random",
            Method::Dca => "dca",
            Method::Mdr => "mdr",
            Method::Jupa => "jupa",
            Method::JupaMulti => "jupa-multi",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        [
            Method::Identity,
            Method::Pca,
            Method::Random,
            Method::Dca,
            Method::Mdr,
            Method::Jupa,
            Method::JupaMulti,
        ]
        .into_iter()
        .find(|m| m.as_str() == s)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectionParams {
    pub k: usize,
    pub rho0: f64,
    /// ρ₁ (one per privacy target for multi-target JUPA).
    #[serde(default)]
    pub rho1: Vec<f64>,
    /// ρ′₁ (one per privacy target for multi-target JUPA).
    #[serde(default)]
    pub rho1_prime: Vec<f64>,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl ProjectionParams {
    pub fn new(k: usize) -> Self {
        ProjectionParams {
            k,
            rho0: 0.0,
            rho1: Vec::new(),
            rho1_prime: Vec::new(),
            seed: None,
        }
    }
}

/// A fitted projection `x ↦ (x − mean)ᵀ W`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionModel {
    pub method: Method,
    pub params: ProjectionParams,
    /// M×K projection matrix.
    pub weights: Matrix,
    /// Training mean subtracted before projecting (zero when uncentered).
    pub mean: Vector,
    pub centered: bool,
    /// Eigenvalues of the retained directions (empty for identity/random).
    pub eigenvalues: Vec<f64>,
}

impl ProjectionModel {
    pub fn input_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.ncols()
    }

    /// Re-centers the model on `mean`.
    pub fn centered_on(mut self, mean: Vector) -> Self {
        assert_eq!(mean.len(), self.input_dim());
        self.mean = mean;
        self.centered = true;
        self
    }

    /// Drops the centering step, giving the literal `xᵀ W`.
    pub fn uncentered(mut self) -> Self {
        self.mean = Vector::zeros(self.input_dim());
        self.centered = false;
        self
    }

    /// Projects every row of `x`.
    pub fn project(&self, x: &Matrix) -> Result<Matrix> {
        if x.ncols() != self.input_dim() {
            return Err(ProjectionError::DimensionMismatch {
                expected: self.input_dim(),
                got: x.ncols(),
            });
        }
        let centered = Matrix::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)] - self.mean[j]);
        Ok(centered * &self.weights)
    }

    pub fn project_vector(&self, x: &Vector) -> Result<Vector> {
        if x.len() != self.input_dim() {
            return Err(ProjectionError::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(self.weights.tr_mul(&(x - &self.mean)))
    }

    /// Projects a dataset, keeping labels and row ids.
    pub fn project_dataset(&self, data: &LabeledDataset) -> Result<LabeledDataset> {
        let names = (0..self.output_dim()).map(|j| format!("z{j}")).collect();
        Ok(data.with_features(self.project(&data.features)?, names))
    }

    /// Versioned JSON document; floats round-trip bit-exactly.
    pub fn to_json(&self) -> String {
        let doc = ModelDocument {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            method: self.method,
            params: self.params.clone(),
            centered: self.centered,
            rows: self.weights.nrows(),
            cols: self.weights.ncols(),
            mean: self.mean.iter().cloned().collect(),
            weights: (0..self.weights.nrows())
                .flat_map(|i| self.weights.row(i).iter().cloned().collect::<Vec<_>>())
                .collect(),
            eigenvalues: self.eigenvalues.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("model document serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDocument =
            serde_json::from_str(text).map_err(|e| ProjectionError::Document(e.to_string()))?;
        if doc.format != MODEL_FORMAT || doc.version != MODEL_VERSION {
            return Err(ProjectionError::Document(format!(
                "unsupported {} v{}",
                doc.format, doc.version
            )));
        }
        if doc.weights.len() != doc.rows * doc.cols || doc.mean.len() != doc.rows {
            return Err(ProjectionError::Document(
                "array sizes do not match the declared shape".into(),
            ));
        }
        Ok(ProjectionModel {
            method: doc.method,
            params: doc.params,
            weights: Matrix::from_row_slice(doc.rows, doc.cols, &doc.weights),
            mean: Vector::from_vec(doc.mean),
            centered: doc.centered,
            eigenvalues: doc.eigenvalues,
        })
    }
}

const MODEL_FORMAT: &str = "ppdr-projection";
const MODEL_VERSION: u32 = 1;

/// Serialized layout: `weights` holds W row-major (`rows` = M, `cols` = K).
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDocument {
    format: String,
    version: u32,
    method: Method,
    params: ProjectionParams,
    centered: bool,
    rows: usize,
    cols: usize,
    mean: Vec<f64>,
    weights: Vec<f64>,
    eigenvalues: Vec<f64>,
}

fn check_k(k: usize, m: usize) -> Result<()> {
    if k == 0 || k >= m {
        return Err(ProjectionError::KTooLarge { k, m });
    }
    Ok(())
}

fn check_full_rank(w: &Matrix) -> Result<()> {
    let s = min_singular_value(w);
    if s > MIN_SINGULAR_VALUE {
        Ok(())
    } else {
        Err(ProjectionError::RankDeficient(s))
    }
}

fn unit_columns(mut w: Matrix) -> Matrix {
    for mut col in w.column_iter_mut() {
        let n = col.norm();
        if n > 0.0 {
            col /= n;
        }
    }
    w
}

/// Full-dimensional baseline (W = I).
pub fn identity(m: usize) -> ProjectionModel {
    ProjectionModel {
        method: Method::Identity,
        params: ProjectionParams::new(m),
        weights: Matrix::identity(m, m),
        mean: Vector::zeros(m),
        centered: false,
        eigenvalues: Vec::new(),
    }
}

/// Top-k principal directions of the centered training features.
pub fn fit_pca(train: &LabeledDataset, k: usize) -> Result<ProjectionModel> {
    let (n, m) = train.features.shape();
    check_k(k, m)?;
    let mean = train.features.row_sum().transpose() / n as f64;
    let centered = Matrix::from_fn(n, m, |i, j| train.features[(i, j)] - mean[j]);
    let cov = linalg::symmetrize(&(centered.tr_mul(&centered) / n.max(1) as f64));
    let eig = symmetric_eig(&cov)?.truncate(k);
    check_full_rank(&eig.vectors)?;
    Ok(ProjectionModel {
        method: Method::Pca,
        params: ProjectionParams::new(k),
        weights: eig.vectors,
        mean,
        centered: true,
        eigenvalues: eig.values,
    })
}

/// Fraction of total variance captured by the retained PCA directions.
pub fn explained_variance_ratio(train: &LabeledDataset, model: &ProjectionModel) -> f64 {
    let (n, m) = train.features.shape();
    let centered = Matrix::from_fn(n, m, |i, j| train.features[(i, j)] - model.mean[j]);
    let trace = centered.norm_squared() / n.max(1) as f64;
    model.eigenvalues.iter().sum::<f64>() / trace
}

/// Gaussian random projection with orthonormalized columns.
pub fn fit_random(m: usize, k: usize, seed: u64) -> Result<ProjectionModel> {
    check_k(k, m)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gauss = Matrix::from_fn(m, k, |_, _| rng.sample::<f64, _>(StandardNormal));
    let w = linalg::orthonormal_basis(&gauss);
    check_full_rank(&w)?;
    let mut params = ProjectionParams::new(k);
    params.seed = Some(seed);
    Ok(ProjectionModel {
        method: Method::Random,
        params,
        weights: w,
        mean: Vector::zeros(m),
        centered: false,
        eigenvalues: Vec::new(),
    })
}

fn ridge(m: usize, rho0: f64) -> Matrix {
    Matrix::identity(m, m) * rho0
}

fn check_rho0(rho0: f64) -> Result<()> {
    if rho0.is_finite() && rho0 > 0.0 {
        Ok(())
    } else {
        Err(ProjectionError::InvalidParameter(format!(
            "rho0 must be positive, got {rho0}"
        )))
    }
}

fn solve_pencil(a: &Matrix, b: &Matrix, k: usize) -> Result<(Matrix, Vec<f64>)> {
    check_k(k, a.nrows())?;
    if frobenius(a) <= EMPTY_PENCIL_TOL * (1.0 + frobenius(b)) {
        return Err(ProjectionError::EmptyPencil);
    }
    let eig = generalized_eig(a, b, k)?;
    if eig.values[0] <= 0.0 {
        return Err(ProjectionError::EmptyPencil);
    }
    let w = unit_columns(eig.vectors);
    check_full_rank(&w)?;
    Ok((w, eig.values))
}

fn pencil_model(
    method: Method,
    params: ProjectionParams,
    mean: &Vector,
    a: &Matrix,
    b: &Matrix,
) -> Result<ProjectionModel> {
    let (weights, eigenvalues) = solve_pencil(a, b, params.k)?;
    Ok(ProjectionModel {
        method,
        params,
        weights,
        mean: mean.clone(),
        centered: true,
        eigenvalues,
    })
}

/// Discriminant component analysis: pencil (S_BU, S_total + ρ₀I).
pub fn fit_dca(utility: &ScatterSet, k: usize, rho0: f64) -> Result<ProjectionModel> {
    check_rho0(rho0)?;
    let m = utility.dim();
    let b = &utility.total + ridge(m, rho0);
    let params = ProjectionParams {
        rho0,
        ..ProjectionParams::new(k)
    };
    pencil_model(Method::Dca, params, &utility.mean, &utility.between, &b)
}

/// Multi-class discriminant ratio: pencil (S_BU, S_BP + ρ₀I).
pub fn fit_mdr(
    utility: &ScatterSet,
    privacy: &ScatterSet,
    k: usize,
    rho0: f64,
) -> Result<ProjectionModel> {
    check_rho0(rho0)?;
    same_dims(&[utility, privacy])?;
    let b = &privacy.between + ridge(utility.dim(), rho0);
    let params = ProjectionParams {
        rho0,
        ..ProjectionParams::new(k)
    };
    pencil_model(Method::Mdr, params, &utility.mean, &utility.between, &b)
}

/// Joint utility/privacy analysis: pencil (S_BU + ρ′₁S_WP, S_WU + ρ₁S_BP + ρ₀I).
pub fn fit_jupa(
    utility: &ScatterSet,
    privacy: &ScatterSet,
    k: usize,
    rho0: f64,
    rho1: f64,
    rho1_prime: f64,
) -> Result<ProjectionModel> {
    let mut model = fit_jupa_multi(
        std::slice::from_ref(utility),
        std::slice::from_ref(privacy),
        k,
        rho0,
        &[rho1],
        &[rho1_prime],
    )?;
    model.method = Method::Jupa;
    Ok(model)
}

/// Multi-target JUPA:
/// pencil (Σ S_BUi + Σ ρ′_i S_WPi, Σ S_WUi + Σ ρ_i S_BPi + ρ₀I).
pub fn fit_jupa_multi(
    utility: &[ScatterSet],
    privacy: &[ScatterSet],
    k: usize,
    rho0: f64,
    rho: &[f64],
    rho_prime: &[f64],
) -> Result<ProjectionModel> {
    if utility.is_empty() || privacy.is_empty() {
        return Err(ProjectionError::LengthMismatch(
            "need at least one utility and one privacy target".into(),
        ));
    }
    if rho.len() != privacy.len() || rho_prime.len() != privacy.len() {
        return Err(ProjectionError::LengthMismatch(format!(
            "{} privacy targets, {} rho1 values, {} rho1' values",
            privacy.len(),
            rho.len(),
            rho_prime.len()
        )));
    }
    check_rho0(rho0)?;
    if let Some(bad) = rho
        .iter()
        .chain(rho_prime)
        .find(|r| !(r.is_finite() && **r >= 0.0))
    {
        return Err(ProjectionError::InvalidParameter(format!(
            "rho1 and rho1' must be >= 0, got {bad}"
        )));
    }
    let all: Vec<&ScatterSet> = utility.iter().chain(privacy).collect();
    same_dims(&all)?;
    let m = utility[0].dim();

    let mut a = Matrix::zeros(m, m);
    let mut b = ridge(m, rho0);
    for u in utility {
        a += &u.between;
        b += &u.within;
    }
    for ((p, &r), &rp) in privacy.iter().zip(rho).zip(rho_prime) {
        a += &p.within * rp;
        b += &p.between * r;
    }
    let params = ProjectionParams {
        k,
        rho0,
        rho1: rho.to_vec(),
        rho1_prime: rho_prime.to_vec(),
        seed: None,
    };
    pencil_model(Method::JupaMulti, params, &utility[0].mean, &a, &b)
}

fn same_dims(sets: &[&ScatterSet]) -> Result<()> {
    let m = sets[0].dim();
    match sets.iter().find(|s| s.dim() != m) {
        Some(s) => Err(ProjectionError::DimensionMismatch {
            expected: m,
            got: s.dim(),
        }),
        None => Ok(()),
    }
}
