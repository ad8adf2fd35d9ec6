//! Fine-grained perturbation.
//!
//! A coarse-projected sample `x̂` with current privacy class `s` (decided by
//! the verification bank) is moved toward a uniformly drawn target class `t`
//! by gradient descent on
//!
//! ```text
//! L(θ) = (1/n_t²) ΣΣ k(G_t) − (1/n_s²) ΣΣ k(G_s)
//!      + (2/n_s) Σ_{G_s} k(x_i, z) − (2/n_t) Σ_{G_t} k(x_i, z) + (λ/2) ‖θ‖²
//! ```
//!
//! with the iteration
//!
//! ```text
//! θᵢ = θᵢ₋₁ − α ∇L(zᵢ₋₁, θᵢ₋₁)
//! zᵢ = x̂ + θᵢ
//! ```
//!
//! until the verification bank labels `z` as `t` and the loss is at most
//! `−τ`. θ is the accumulated noise, so the released sample is always the
//! input plus one offset that λ keeps small. `G` and `V` are disjoint halves
//! of the projected training split.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::LabeledDataset;
use crate::kernel::{ClassBank, KernelError, KernelSpec};
use crate::linalg::{Matrix, Vector};

#[derive(Debug, Error)]
pub enum SanitizerError {
    #[error("source and target class are both {0}")]
    SameClass(usize),
    #[error("class {class} has {count} training samples; at least 2 are needed to split ground and verification banks")]
    ClassTooSmall { class: usize, count: usize },
    #[error("class index {class} out of range for {n_classes} classes")]
    ClassOutOfRange { class: usize, n_classes: usize },
    #[error("the analytic gradient is only available for the RBF kernel; enable finite differences for other kernels")]
    UnsupportedKernelGradient,
    #[error("no label flip after {} iterations (target {})", .0.iterations, .0.target)]
    NotConverged(Box<SanitizeTrace>),
    #[error("iterate became non-finite")]
    NonFinite,
    #[error("invalid sanitizer configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

pub type Result<T> = std::result::Result<T, SanitizerError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ThetaInit {
    Zero,
    /// Gaussian entries with standard deviation `scale`.
    Random {
        scale: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SanitizerConfig {
    /// Weight λ of the `‖θ‖²` regularizer.
    pub lambda: f64,
    /// Learning rate α.
    pub alpha: f64,
    pub max_iters: usize,
    /// Required loss margin τ at the stopping point.
    pub tau: f64,
    pub init: ThetaInit,
    /// Extra attempts after a non-converged run. Each retry starts from a
    /// random θ₀ whose entry `j` has standard deviation `retry_init_scale`
    /// times the spread of feature `j` in the ground bank, and multiplies α by
    /// `retry_alpha_factor`.
    pub retries: usize,
    pub retry_alpha_factor: f64,
    pub retry_init_scale: f64,
    /// Use central finite differences instead of the analytic RBF gradient.
    pub finite_difference: bool,
}

impl Default for SanitizerConfig {
    fn default() -> Self {
        SanitizerConfig {
            lambda: 0.001,
            alpha: 0.1,
            max_iters: 500,
            tau: 0.0,
            init: ThetaInit::Zero,
            retries: 6,
            retry_alpha_factor: 4.0,
            retry_init_scale: 1.0,
            finite_difference: false,
        }
    }
}

impl SanitizerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(SanitizerError::InvalidConfig(msg));
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return bad(format!(
                "lambda must be finite and >= 0, got {}",
                self.lambda
            ));
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return bad(format!("alpha must be finite and > 0, got {}", self.alpha));
        }
        if !(self.tau.is_finite() && self.tau >= 0.0) {
            return bad(format!("tau must be finite and >= 0, got {}", self.tau));
        }
        if self.max_iters == 0 {
            return bad("max_iters must be at least 1".into());
        }
        if !(self.retry_alpha_factor.is_finite() && self.retry_alpha_factor > 0.0) {
            return bad(format!(
                "retry_alpha_factor must be > 0, got {}",
                self.retry_alpha_factor
            ));
        }
        if !(self.retry_init_scale.is_finite() && self.retry_init_scale >= 0.0) {
            return bad(format!(
                "retry_init_scale must be finite and >= 0, got {}",
                self.retry_init_scale
            ));
        }
        if let ThetaInit::Random { scale } = self.init {
            if !(scale.is_finite() && scale >= 0.0) {
                return bad(format!(
                    "random init scale must be finite and >= 0, got {scale}"
                ));
            }
        }
        Ok(())
    }
}

/// Outcome of sanitizing one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SanitizeTrace {
    pub source: usize,
    pub target: usize,
    pub iterations: usize,
    /// Loss after each iteration.
    pub losses: Vec<f64>,
    pub z: Vector,
    pub converged: bool,
    /// Number of descent runs, including retries.
    pub attempts: usize,
}

/// Splits the projected training split into ground-truth and verification
/// banks, 50/50 within every class of `target`. Odd classes give the extra
/// sample to the ground bank.
pub fn split_ground_verify(
    train: &LabeledDataset,
    target: &str,
    spec: KernelSpec,
    seed: u64,
) -> Result<(ClassBank, ClassBank)> {
    let t = train.target(target).map_err(KernelError::from)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ground = Vec::with_capacity(t.n_classes());
    let mut verify = Vec::with_capacity(t.n_classes());
    for class in 0..t.n_classes() {
        let mut rows: Vec<usize> = (0..train.n_rows())
            .filter(|&i| t.labels[i] == class)
            .collect();
        if rows.len() < 2 {
            return Err(SanitizerError::ClassTooSmall {
                class,
                count: rows.len(),
            });
        }
        rows.shuffle(&mut rng);
        let cut = rows.len().div_ceil(2);
        ground.push(train.features.select_rows(&rows[..cut]));
        verify.push(train.features.select_rows(&rows[cut..]));
    }
    Ok((
        ClassBank::new(spec, &ground)?,
        ClassBank::new(spec, &verify)?,
    ))
}

/// Per-sample random stream: stream `row` of the generator seeded by `seed`.
pub fn sample_rng(seed: u64, row: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(row as u64);
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub struct SanitizerModel {
    pub ground: ClassBank,
    pub verify: ClassBank,
    pub config: SanitizerConfig,
    pub seed: u64,
    /// Per-feature standard deviation of the ground bank.
    spread: Vec<f64>,
}

/// Sanitized rows of a batch, in input order.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchOutcome {
    pub sanitized: Matrix,
    pub traces: Vec<SanitizeTrace>,
    /// Input rows whose final attempt did not converge; their last iterate
    /// is released.
    pub not_converged: Vec<usize>,
}

impl BatchOutcome {
    pub fn convergence_rate(&self) -> f64 {
        if self.traces.is_empty() {
            return 1.0;
        }
        1.0 - self.not_converged.len() as f64 / self.traces.len() as f64
    }

    /// Drawn target class of every row.
    pub fn targets(&self) -> Vec<usize> {
        self.traces.iter().map(|t| t.target).collect()
    }
}

fn feature_spread(bank: &ClassBank) -> Vec<f64> {
    let rows: Vec<&[f64]> = (0..bank.n_classes()).flat_map(|c| bank.rows(c)).collect();
    let n = rows.len() as f64;
    (0..bank.dim())
        .map(|j| {
            let mean = rows.iter().map(|r| r[j]).sum::<f64>() / n;
            (rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n).sqrt()
        })
        .collect()
}

impl SanitizerModel {
    pub fn new(
        ground: ClassBank,
        verify: ClassBank,
        config: SanitizerConfig,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        if ground.spec() != verify.spec() || ground.n_classes() != verify.n_classes() {
            return Err(SanitizerError::InvalidConfig(
                "ground and verification banks disagree on kernel or classes".into(),
            ));
        }
        verify.check_dim(ground.dim())?;
        if !config.finite_difference && ground.spec().sigma().is_none() {
            return Err(SanitizerError::UnsupportedKernelGradient);
        }
        let spread = feature_spread(&ground);
        Ok(SanitizerModel {
            spread,
            ground,
            verify,
            config,
            seed,
        })
    }

    /// Splits `train` into banks and builds the model.
    pub fn fit(
        train: &LabeledDataset,
        target: &str,
        spec: KernelSpec,
        config: SanitizerConfig,
        seed: u64,
    ) -> Result<Self> {
        let (ground, verify) = split_ground_verify(train, target, spec, seed)?;
        SanitizerModel::new(ground, verify, config, seed)
    }

    pub fn n_classes(&self) -> usize {
        self.ground.n_classes()
    }

    pub fn dim(&self) -> usize {
        self.ground.dim()
    }

    fn check_pair(&self, s: usize, t: usize) -> Result<()> {
        let n_classes = self.n_classes();
        for class in [s, t] {
            if class >= n_classes {
                return Err(SanitizerError::ClassOutOfRange { class, n_classes });
            }
        }
        if s == t {
            return Err(SanitizerError::SameClass(s));
        }
        Ok(())
    }

    fn check_vectors(&self, z: &Vector, theta: &Vector) -> Result<()> {
        self.ground.check_dim(z.len())?;
        self.ground.check_dim(theta.len())?;
        Ok(())
    }

    fn loss_raw(&self, z: &[f64], theta: &[f64], s: usize, t: usize) -> f64 {
        let g = &self.ground;
        let ns = g.class_size(s) as f64;
        let nt = g.class_size(t) as f64;
        let reg: f64 = theta.iter().map(|v| v * v).sum();
        g.self_mean(t) - g.self_mean(s) + 2.0 * g.kernel_sum(s, z) / ns
            - 2.0 * g.kernel_sum(t, z) / nt
            + 0.5 * self.config.lambda * reg
    }

    /// Loss at iterate `z` with accumulated noise `θ`.
    pub fn loss(&self, z: &Vector, theta: &Vector, s: usize, t: usize) -> Result<f64> {
        self.check_pair(s, t)?;
        self.check_vectors(z, theta)?;
        Ok(self.loss_raw(z.as_slice(), theta.as_slice(), s, t))
    }

    /// RBF gradient of the loss with respect to θ, with `z` moving with θ:
    /// `(2/n_s) Σ k(x_i, z)(x_i − z)/σ² − (2/n_t) Σ k(x_i, z)(x_i − z)/σ² + λθ`.
    fn gradient_rbf(&self, sigma: f64, z: &[f64], theta: &[f64], s: usize, t: usize) -> Vec<f64> {
        let g = &self.ground;
        let mut grad: Vec<f64> = theta.iter().map(|v| self.config.lambda * v).collect();
        for (class, sign) in [(s, 1.0), (t, -1.0)] {
            let w = sign * 2.0 / (g.class_size(class) as f64 * sigma * sigma);
            for x in g.rows(class) {
                let k = g.spec().eval(x, z) * w;
                for ((gj, xj), zj) in grad.iter_mut().zip(x).zip(z) {
                    *gj += k * (xj - zj);
                }
            }
        }
        grad
    }

    fn gradient_fd(&self, z: &[f64], theta: &[f64], s: usize, t: usize) -> Vec<f64> {
        let mut zp = z.to_vec();
        let mut tp = theta.to_vec();
        (0..z.len())
            .map(|j| {
                let h = 1e-5 * theta[j].abs().max(1.0);
                zp[j] = z[j] + h;
                tp[j] = theta[j] + h;
                let up = self.loss_raw(&zp, &tp, s, t);
                zp[j] = z[j] - h;
                tp[j] = theta[j] - h;
                let down = self.loss_raw(&zp, &tp, s, t);
                zp[j] = z[j];
                tp[j] = theta[j];
                (up - down) / (2.0 * h)
            })
            .collect()
    }

    fn gradient_raw(&self, z: &[f64], theta: &[f64], s: usize, t: usize) -> Result<Vec<f64>> {
        match (self.config.finite_difference, self.ground.spec().sigma()) {
            (false, Some(sigma)) => Ok(self.gradient_rbf(sigma, z, theta, s, t)),
            (true, _) => Ok(self.gradient_fd(z, theta, s, t)),
            (false, None) => Err(SanitizerError::UnsupportedKernelGradient),
        }
    }

    /// Gradient of [`loss`](Self::loss) along θ, with `z` moving with θ.
    pub fn loss_gradient(&self, z: &Vector, theta: &Vector, s: usize, t: usize) -> Result<Vector> {
        self.check_pair(s, t)?;
        self.check_vectors(z, theta)?;
        Ok(Vector::from_vec(self.gradient_raw(
            z.as_slice(),
            theta.as_slice(),
            s,
            t,
        )?))
    }

    /// Current privacy class of `z` according to the verification bank.
    pub fn label(&self, z: &[f64]) -> usize {
        self.verify.label(z)
    }

    fn descend(
        &self,
        x: &[f64],
        s: usize,
        t: usize,
        alpha: f64,
        theta0: Vec<f64>,
    ) -> Result<SanitizeTrace> {
        let mut theta = theta0;
        let mut z: Vec<f64> = x.iter().zip(&theta).map(|(a, b)| a + b).collect();
        let mut grad = self.gradient_raw(&z, &theta, s, t)?;
        let mut losses = Vec::new();
        for it in 1..=self.config.max_iters {
            for ((th, zj), (g, xj)) in theta.iter_mut().zip(z.iter_mut()).zip(grad.iter().zip(x)) {
                *th -= alpha * g;
                *zj = xj + *th;
            }
            if z.iter().any(|v| !v.is_finite()) {
                return Err(SanitizerError::NonFinite);
            }
            let loss = self.loss_raw(&z, &theta, s, t);
            losses.push(loss);
            if self.label(&z) == t && loss <= -self.config.tau {
                return Ok(SanitizeTrace {
                    source: s,
                    target: t,
                    iterations: it,
                    losses,
                    z: Vector::from_vec(z),
                    converged: true,
                    attempts: 1,
                });
            }
            grad = self.gradient_raw(&z, &theta, s, t)?;
        }
        Ok(SanitizeTrace {
            source: s,
            target: t,
            iterations: self.config.max_iters,
            losses,
            z: Vector::from_vec(z),
            converged: false,
            attempts: 1,
        })
    }

    fn initial_theta(&self, init: ThetaInit, rng: &mut ChaCha8Rng) -> Vec<f64> {
        match init {
            ThetaInit::Zero => vec![0.0; self.dim()],
            ThetaInit::Random { scale } => (0..self.dim())
                .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
                .collect(),
        }
    }

    fn retry_theta(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.spread
            .iter()
            .map(|sd| self.config.retry_init_scale * sd * rng.sample::<f64, _>(StandardNormal))
            .collect()
    }

    fn check_input(&self, x: &Vector, t: Option<usize>) -> Result<()> {
        self.ground.check_dim(x.len())?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(SanitizerError::NonFinite);
        }
        if let Some(class) = t.filter(|&c| c >= self.n_classes()) {
            return Err(SanitizerError::ClassOutOfRange {
                class,
                n_classes: self.n_classes(),
            });
        }
        Ok(())
    }

    /// One descent run with the configured α and θ₀. When `t` is `None` it is
    /// drawn uniformly over all classes (the source class included) from
    /// `rng`.
    pub fn sanitize(
        &self,
        x: &Vector,
        t: Option<usize>,
        rng: &mut ChaCha8Rng,
    ) -> Result<SanitizeTrace> {
        self.check_input(x, t)?;
        let t = t.unwrap_or_else(|| rng.random_range(0..self.n_classes()));
        let s = self.label(x.as_slice());
        if s == t {
            return Ok(self.unchanged(x, s));
        }
        let theta0 = self.initial_theta(self.config.init, rng);
        let trace = self.descend(x.as_slice(), s, t, self.config.alpha, theta0)?;
        if trace.converged {
            Ok(trace)
        } else {
            Err(SanitizerError::NotConverged(Box::new(trace)))
        }
    }

    fn unchanged(&self, x: &Vector, s: usize) -> SanitizeTrace {
        SanitizeTrace {
            source: s,
            target: s,
            iterations: 0,
            losses: Vec::new(),
            z: x.clone(),
            converged: true,
            attempts: 1,
        }
    }

    /// [`sanitize`](Self::sanitize) followed by the configured retries. A
    /// run that never converges is returned with `converged == false`.
    pub fn sanitize_with_retries(
        &self,
        x: &Vector,
        t: Option<usize>,
        rng: &mut ChaCha8Rng,
    ) -> Result<SanitizeTrace> {
        let mut trace = match self.sanitize(x, t, rng) {
            Err(SanitizerError::NotConverged(trace)) => *trace,
            other => return other,
        };
        let mut alpha = self.config.alpha;
        for attempt in 2..=self.config.retries + 1 {
            alpha *= self.config.retry_alpha_factor;
            let theta0 = self.retry_theta(rng);
            let next = self.descend(x.as_slice(), trace.source, trace.target, alpha, theta0)?;
            trace = SanitizeTrace {
                attempts: attempt,
                ..next
            };
            if trace.converged {
                break;
            }
        }
        Ok(trace)
    }

    /// Sanitizes every row of `data` with its own random stream, keyed by the
    /// row's source id. Rows are processed in parallel and returned in input
    /// order; the result does not depend on the number of worker threads.
    pub fn sanitize_batch(&self, data: &LabeledDataset) -> Result<BatchOutcome> {
        self.ground.check_dim(data.n_features())?;
        let traces = (0..data.n_rows())
            .into_par_iter()
            .map(|i| {
                let mut rng = sample_rng(self.seed, data.source_rows[i]);
                self.sanitize_with_retries(&data.features.row(i).transpose(), None, &mut rng)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut sanitized = Matrix::zeros(data.n_rows(), data.n_features());
        for (i, trace) in traces.iter().enumerate() {
            sanitized.set_row(i, &trace.z.transpose());
        }
        let not_converged = traces
            .iter()
            .enumerate()
            .filter(|(_, t)| !t.converged)
            .map(|(i, _)| i)
            .collect();
        Ok(BatchOutcome {
            sanitized,
            traces,
            not_converged,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Target;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn col(values: &[f64]) -> Matrix {
        Matrix::from_column_slice(values.len(), 1, values)
    }

    fn cluster(center: f64, n: usize) -> Matrix {
        col(&(0..n)
            .map(|i| center + 0.05 * (i as f64 - (n as f64 - 1.0) / 2.0))
            .collect::<Vec<_>>())
    }

    fn toy_model(config: SanitizerConfig) -> SanitizerModel {
        let spec = KernelSpec::rbf(1.0);
        let ground = ClassBank::new(spec, &[cluster(-1.0, 6), cluster(1.0, 6)]).unwrap();
        let verify = ClassBank::new(spec, &[cluster(-1.0, 5), cluster(1.0, 5)]).unwrap();
        SanitizerModel::new(ground, verify, config, 7).unwrap()
    }

    fn v(values: &[f64]) -> Vector {
        Vector::from_column_slice(values)
    }

    fn labeled(features: Matrix, labels: Vec<usize>, classes: usize) -> LabeledDataset {
        let n = features.nrows();
        LabeledDataset {
            feature_names: (0..features.ncols()).map(|j| format!("f{j}")).collect(),
            features,
            targets: vec![Target {
                name: "p".into(),
                classes: (0..classes).map(|c| c.to_string()).collect(),
                labels,
            }],
            source_rows: (0..n).collect(),
            role: None,
        }
    }

    #[test]
    fn split_sizes_and_determinism() {
        let labels: Vec<usize> = (0..21).map(|i| usize::from(i >= 10)).collect();
        let data = labeled(Matrix::from_fn(21, 2, |i, j| (i * 2 + j) as f64), labels, 2);
        let (g, v) = split_ground_verify(&data, "p", KernelSpec::rbf(1.0), 3).unwrap();
        assert_eq!((g.class_size(0), v.class_size(0)), (5, 5));
        assert_eq!((g.class_size(1), v.class_size(1)), (6, 5));
        assert_eq!(
            (g.clone(), v.clone()),
            split_ground_verify(&data, "p", KernelSpec::rbf(1.0), 3).unwrap()
        );

        // disjoint and covering
        for l in 0..2 {
            let mut all: Vec<f64> = g.rows(l).chain(v.rows(l)).map(|r| r[0]).collect();
            all.sort_by(f64::total_cmp);
            all.dedup();
            assert_eq!(all.len(), g.class_size(l) + v.class_size(l));
        }

        let tiny = labeled(col(&[0.0, 1.0, 2.0]), vec![0, 0, 1], 2);
        assert!(matches!(
            split_ground_verify(&tiny, "p", KernelSpec::rbf(1.0), 0),
            Err(SanitizerError::ClassTooSmall { class: 1, count: 1 })
        ));
    }

    #[test]
    fn loss_examples() {
        let m = toy_model(SanitizerConfig::default());
        let zero = v(&[0.0]);
        // mirror-image banks: the z terms cancel and the constants are equal
        assert_abs_diff_eq!(m.loss(&zero, &zero, 0, 1).unwrap(), 0.0, epsilon = 1e-12);
        assert!(m.loss(&v(&[1.0]), &zero, 0, 1).unwrap() < -0.5);
        assert!(m.loss(&v(&[-1.0]), &zero, 0, 1).unwrap() > 0.5);

        let at = |theta: f64| {
            m.loss(&zero, &v(&[theta]), 0, 1).unwrap() - m.loss(&zero, &zero, 0, 1).unwrap()
        };
        assert_abs_diff_eq!(at(2.0), 4.0 * at(1.0), epsilon = 1e-15);

        assert!(matches!(
            m.loss(&zero, &zero, 1, 1),
            Err(SanitizerError::SameClass(1))
        ));
        assert!(matches!(
            m.loss(&zero, &zero, 0, 2),
            Err(SanitizerError::ClassOutOfRange { .. })
        ));
    }

    #[test]
    fn gradient_vanishes_by_symmetry() {
        // each bank symmetric about the common mean 0
        let spec = KernelSpec::rbf(1.0);
        let centered =
            ClassBank::new(spec, &[col(&[-1.0, 1.0]), col(&[-2.0, -0.5, 0.5, 2.0])]).unwrap();
        let m =
            SanitizerModel::new(centered.clone(), centered, SanitizerConfig::default(), 0).unwrap();
        let zero = v(&[0.0]);
        assert_abs_diff_eq!(
            m.loss_gradient(&zero, &zero, 0, 1).unwrap()[0],
            0.0,
            epsilon = 1e-15
        );

        let same = ClassBank::new(spec, &[cluster(0.3, 4), cluster(0.3, 4)]).unwrap();
        let config = SanitizerConfig {
            lambda: 0.0,
            ..SanitizerConfig::default()
        };
        let flat = SanitizerModel::new(same.clone(), same, config, 0).unwrap();
        assert_abs_diff_eq!(
            flat.loss_gradient(&v(&[1.7]), &v(&[0.4]), 0, 1).unwrap()[0],
            0.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn non_rbf_needs_finite_differences() {
        let spec = KernelSpec::Linear;
        let bank = ClassBank::new(spec, &[col(&[0.0, 1.0]), col(&[2.0, 3.0])]).unwrap();
        assert!(matches!(
            SanitizerModel::new(bank.clone(), bank.clone(), SanitizerConfig::default(), 0),
            Err(SanitizerError::UnsupportedKernelGradient)
        ));
        let fd = SanitizerConfig {
            finite_difference: true,
            ..SanitizerConfig::default()
        };
        let m = SanitizerModel::new(bank.clone(), bank, fd, 0).unwrap();
        // linear kernel: L is linear in z with slope 2(mean_s − mean_t), plus λθ
        let g = m.loss_gradient(&v(&[0.0]), &v(&[0.0]), 0, 1).unwrap();
        assert_abs_diff_eq!(g[0], 2.0 * (0.5 - 2.5), epsilon = 1e-8);
    }

    #[test]
    fn flips_toward_target_cluster() {
        let m = toy_model(SanitizerConfig::default());
        let mut rng = sample_rng(1, 0);
        let trace = m.sanitize(&v(&[-1.0]), Some(1), &mut rng).unwrap();
        assert!(trace.converged);
        assert_eq!(trace.source, 0);
        assert_eq!(m.verify.label(trace.z.as_slice()), 1);
        assert!(trace.z[0] > 0.0);
        assert_eq!(trace.losses.len(), trace.iterations);
        assert!(*trace.losses.last().unwrap() <= 0.0);
    }

    #[test]
    fn already_in_target_is_unchanged() {
        let m = toy_model(SanitizerConfig::default());
        let x = v(&[-0.9]);
        let trace = m.sanitize(&x, Some(0), &mut sample_rng(0, 0)).unwrap();
        assert_eq!(trace.iterations, 0);
        assert!(trace.converged);
        assert_eq!(trace.z, x);
    }

    #[test]
    fn small_steps_never_increase_the_loss() {
        let m = toy_model(SanitizerConfig {
            alpha: 0.01,
            max_iters: 2000,
            ..SanitizerConfig::default()
        });
        let trace = m
            .sanitize(&v(&[-1.0]), Some(1), &mut sample_rng(0, 0))
            .unwrap();
        for w in trace.losses.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn iterate_is_input_plus_accumulated_noise() {
        let config = SanitizerConfig {
            alpha: 0.05,
            max_iters: 2,
            ..SanitizerConfig::default()
        };
        let m = toy_model(config.clone());
        let x = v(&[-1.0]);
        let theta1 = -config.alpha * m.loss_gradient(&x, &v(&[0.0]), 0, 1).unwrap();
        let z1 = &x + &theta1;
        let theta2 = &theta1 - config.alpha * m.loss_gradient(&z1, &theta1, 0, 1).unwrap();
        let trace = match m.sanitize(&x, Some(1), &mut sample_rng(0, 0)) {
            Err(SanitizerError::NotConverged(trace)) => *trace,
            other => panic!("expected two unconverged steps, got {other:?}"),
        };
        assert_abs_diff_eq!(trace.z[0], x[0] + theta2[0], epsilon = 1e-15);
        assert_abs_diff_eq!(
            trace.losses[0],
            m.loss(&z1, &theta1, 0, 1).unwrap(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn exhausted_budget_reports_not_converged() {
        let m = toy_model(SanitizerConfig {
            max_iters: 1,
            alpha: 1e-6,
            ..SanitizerConfig::default()
        });
        match m.sanitize(&v(&[-1.0]), Some(1), &mut sample_rng(0, 0)) {
            Err(SanitizerError::NotConverged(trace)) => {
                assert!(!trace.converged);
                assert_eq!(trace.iterations, 1);
            }
            other => panic!("expected NotConverged, got {other:?}"),
        }
    }

    #[test]
    fn retries_rescue_a_tiny_step() {
        let m = toy_model(SanitizerConfig {
            alpha: 0.001,
            max_iters: 60,
            retries: 3,
            retry_alpha_factor: 10.0,
            ..SanitizerConfig::default()
        });
        let trace = m
            .sanitize_with_retries(&v(&[-1.0]), Some(1), &mut sample_rng(0, 0))
            .unwrap();
        assert!(trace.converged);
        assert!(trace.attempts > 1);
    }

    fn toy_batch(n: usize) -> LabeledDataset {
        let features = Matrix::from_fn(
            n,
            1,
            |i, _| if i % 2 == 0 { -1.0 } else { 1.0 } + 0.001 * i as f64,
        );
        labeled(features, (0..n).map(|i| i % 2).collect(), 2)
    }

    #[test]
    fn batch_matches_single_calls_and_follows_permutations() {
        let m = toy_model(SanitizerConfig::default());
        let data = toy_batch(12);
        let out = m.sanitize_batch(&data).unwrap();
        assert_eq!(out.traces.len(), 12);

        let one = data.select_rows(&[3]);
        let single = m.sanitize_batch(&one).unwrap();
        assert_eq!(single.traces[0], out.traces[3]);
        let direct = m
            .sanitize_with_retries(
                &data.features.row(3).transpose(),
                None,
                &mut sample_rng(m.seed, 3),
            )
            .unwrap();
        assert_eq!(direct, out.traces[3]);

        let order = [5, 0, 11, 2, 7, 1, 3, 4, 6, 8, 10, 9];
        let permuted = m.sanitize_batch(&data.select_rows(&order)).unwrap();
        for (k, &i) in order.iter().enumerate() {
            assert_eq!(permuted.traces[k], out.traces[i]);
            assert_eq!(permuted.sanitized.row(k), out.sanitized.row(i));
        }
    }

    #[test]
    fn batch_is_independent_of_thread_count() {
        let m = toy_model(SanitizerConfig::default());
        let data = toy_batch(40);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| m.sanitize_batch(&data).unwrap())
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn released_labels_are_uniform() {
        let m = toy_model(SanitizerConfig::default());
        let data = toy_batch(200);
        let out = m.sanitize_batch(&data).unwrap();
        assert!(out.not_converged.is_empty());
        let guesses: Vec<usize> = (0..200)
            .map(|i| m.verify.label(&[out.sanitized[(i, 0)]]))
            .collect();
        let hits = guesses
            .iter()
            .zip(&data.targets[0].labels)
            .filter(|(g, s)| g == s)
            .count();
        let accuracy = hits as f64 / 200.0;
        assert!((0.4..=0.6).contains(&accuracy), "accuracy {accuracy}");
    }

    proptest! {
        #[test]
        fn analytic_gradient_matches_central_differences(
            seed in any::<u64>(),
            sigma in 0.5f64..3.0,
            lambda in 0.0f64..0.1,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut gauss = |n: usize, shift: f64| Matrix::from_fn(n, 3, |_, _| rng.sample::<f64, _>(StandardNormal) + shift);
            let spec = KernelSpec::rbf(sigma);
            let ground = ClassBank::new(spec, &[gauss(5, -0.5), gauss(7, 0.5), gauss(4, 0.0)]).unwrap();
            let x = gauss(1, 0.0);
            let theta = gauss(1, 0.0) * 0.3;
            let config = SanitizerConfig { lambda, ..SanitizerConfig::default() };
            let m = SanitizerModel::new(ground.clone(), ground, config, 0).unwrap();
            let z = Vector::from_iterator(3, (&x + &theta).iter().cloned());
            let theta = Vector::from_iterator(3, theta.iter().cloned());
            let analytic = m.loss_gradient(&z, &theta, 0, 1).unwrap();
            let h = 1e-5;
            let numeric = Vector::from_fn(3, |j, _| {
                let mut e = Vector::zeros(3);
                e[j] = h;
                let up = m.loss(&(&z + &e), &(&theta + &e), 0, 1).unwrap();
                let down = m.loss(&(&z - &e), &(&theta - &e), 0, 1).unwrap();
                (up - down) / (2.0 * h)
            });
            let rel = (&analytic - &numeric).norm() / analytic.norm().max(1e-6);
            prop_assert!(rel <= 1e-5, "relative error {}", rel);
        }
    }
}
