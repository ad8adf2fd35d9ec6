//! The end-to-end protocol: project, classify, sanitize, classify again.
//!
//! For every method and seed:
//!
//! 1. standardize all splits with training statistics;
//! 2. fit the projection on the training split and project all three splits;
//! 3. grid-search a utility SVM on the projected training split and an
//!    attack SVM on the projected adversary split;
//! 4. score both on the projected testing split (coarse stage);
//! 5. sanitize the projected testing split and score both again (fine stage).
//!
//! Scores are reported as mean ± sample standard deviation over seeds, in
//! percent.

mod reference;

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{fit_best, ClassifierError, GridConfig, GridPoint};
use crate::dataset::{DatasetError, LabeledDataset, Splits, Standardizer};
use crate::kernel::{select_sigma, KernelError, KernelSpec, SIGMA_MULTIPLIERS};
use crate::linalg::Matrix;
use crate::projection::{self, Method, ProjectionError, ProjectionModel, ProjectionParams};
use crate::sanitizer::{SanitizerConfig, SanitizerError, SanitizerModel};
use crate::scatter::{compute_scatter, ScatterError};

pub use reference::{reference_table, table_methods, ReferenceRow, ReferenceTable};

#[derive(Debug, Error)]
pub enum EvaluateError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("report has no samples")]
    EmptyReport,
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Scatter(#[from] ScatterError),
    #[error(transparent)]
    Projection(#[from] ProjectionError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Sanitizer(#[from] SanitizerError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
}

impl EvaluateError {
    /// Whether the failure comes from floating-point trouble rather than
    /// from the data or configuration.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            EvaluateError::Projection(
                ProjectionError::Linalg(_) | ProjectionError::RankDeficient(_)
            ) | EvaluateError::Sanitizer(SanitizerError::NonFinite)
                | EvaluateError::Classifier(ClassifierError::NoConvergence { .. })
        )
    }
}

pub type Result<T> = std::result::Result<T, EvaluateError>;

/// One projection setting to evaluate. Unset `k` and `rho0` fall back to the
/// scenario defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSpec {
    pub method: Method,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho0: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rho1: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rho1_prime: Vec<f64>,
}

fn fmt_rho(v: f64) -> String {
    if v == 1e2 {
        "10^2".into()
    } else if v == 1e4 {
        "10^4".into()
    } else {
        format!("{v}")
    }
}

impl MethodSpec {
    pub fn new(method: Method) -> Self {
        MethodSpec {
            method,
            k: None,
            rho0: None,
            rho1: Vec::new(),
            rho1_prime: Vec::new(),
        }
    }

    pub fn jupa(rho1: f64, rho1_prime: f64) -> Self {
        MethodSpec {
            rho1: vec![rho1],
            rho1_prime: vec![rho1_prime],
            ..MethodSpec::new(Method::Jupa)
        }
    }

    /// Row label in the style of the result tables.
    pub fn label(&self) -> String {
        let rhos = || {
            let join = |v: &[f64]| v.iter().map(|x| fmt_rho(*x)).collect::<Vec<_>>().join(",");
            format!("(ρ1={}, ρ1'={})", join(&self.rho1), join(&self.rho1_prime))
        };
        match self.method {
            Method::Identity => "Full-Dimensional".into(),
            Method::Random => "Random Projection".into(),
            Method::Pca => "PCA".into(),
            Method::Dca => "DCA".into(),
            Method::Mdr => "MDR".into(),
            Method::Jupa => format!("JUPA {}", rhos()),
            Method::JupaMulti => format!("JUPA-multi {}", rhos()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(EvaluateError::Config(format!("{}: {msg}", self.label())));
        if let Some(rho0) = self.rho0 {
            if !(rho0.is_finite() && rho0 > 0.0) {
                return bad(format!("rho0 must be positive, got {rho0}"));
            }
        }
        if let Some(r) = self
            .rho1
            .iter()
            .chain(&self.rho1_prime)
            .find(|r| !(r.is_finite() && **r >= 0.0))
        {
            return bad(format!("rho1 and rho1' must be >= 0, got {r}"));
        }
        match self.method {
            Method::Jupa | Method::JupaMulti => {
                if self.rho1.is_empty() || self.rho1.len() != self.rho1_prime.len() {
                    return bad("rho1 and rho1' need one value per privacy target".into());
                }
                if self.method == Method::Jupa && self.rho1.len() != 1 {
                    return bad("single-target JUPA takes exactly one rho1 and one rho1'".into());
                }
            }
            _ if !self.rho1.is_empty() || !self.rho1_prime.is_empty() => {
                return bad("rho1 and rho1' only apply to JUPA".into());
            }
            _ => {}
        }
        Ok(())
    }
}

/// Everything `run_scenario` needs besides the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub utility: String,
    pub privacy: String,
    pub methods: Vec<MethodSpec>,
    /// Default projection dimension.
    pub k: usize,
    /// Default ridge regularizer.
    pub rho0: f64,
    pub seeds: Vec<u64>,
    pub grid: GridConfig,
    pub sanitizer: SanitizerConfig,
    /// Sanitizer RBF bandwidths, as multiples of the median pairwise distance.
    pub sanitizer_sigma_multipliers: Vec<f64>,
    pub sanitizer_folds: usize,
    /// Subtract the training mean before projecting.
    pub centered: bool,
    /// Z-score features with training statistics before projecting.
    pub standardize: bool,
    /// Keep the sanitized testing matrices and drawn targets in the outcome.
    pub keep_release: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            utility: String::new(),
            privacy: String::new(),
            methods: table_methods(),
            k: 1,
            rho0: 1e-3,
            seeds: vec![0],
            grid: GridConfig::default(),
            sanitizer: SanitizerConfig::default(),
            sanitizer_sigma_multipliers: SIGMA_MULTIPLIERS.to_vec(),
            sanitizer_folds: 5,
            centered: true,
            standardize: true,
            keep_release: false,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.utility.is_empty() || self.privacy.is_empty() {
            return Err(EvaluateError::Config(
                "utility and privacy targets must be named".into(),
            ));
        }
        if self.utility == self.privacy {
            return Err(EvaluateError::Config(
                "utility and privacy targets must differ".into(),
            ));
        }
        if self.methods.is_empty() {
            return Err(EvaluateError::Config("no methods selected".into()));
        }
        if self.seeds.is_empty() {
            return Err(EvaluateError::Config("no seeds selected".into()));
        }
        if self.k == 0 {
            return Err(EvaluateError::Config("k must be at least 1".into()));
        }
        if !(self.rho0.is_finite() && self.rho0 > 0.0) {
            return Err(EvaluateError::Config(format!(
                "rho0 must be positive, got {}",
                self.rho0
            )));
        }
        if self.sanitizer_sigma_multipliers.is_empty()
            || self
                .sanitizer_sigma_multipliers
                .iter()
                .any(|m| !(m.is_finite() && *m > 0.0))
        {
            return Err(EvaluateError::Config(
                "sanitizer sigma multipliers must be positive".into(),
            ));
        }
        if self.sanitizer_folds < 2 {
            return Err(EvaluateError::Config(
                "sanitizer_folds must be at least 2".into(),
            ));
        }
        for m in &self.methods {
            m.validate()?;
        }
        self.grid.validate()?;
        self.sanitizer.validate()?;
        Ok(())
    }
}

/// Mean and sample standard deviation of per-seed values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub values: Vec<f64>,
}

impl Stat {
    pub fn of(values: Vec<f64>) -> Option<Stat> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Some(Stat { mean, std, values })
    }
}

/// Result of one (method, seed) job.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub utility_coarse: f64,
    pub utility_fine: f64,
    pub privacy_coarse: f64,
    pub privacy_fine: f64,
    pub advantage: f64,
    pub convergence_rate: f64,
    pub not_converged: usize,
    pub sanitizer_sigma: f64,
    pub utility_model: GridPoint,
    pub attack_model: GridPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub seed: u64,
    pub message: String,
    pub numeric: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRow {
    pub label: String,
    pub spec: MethodSpec,
    pub params: ProjectionParams,
    pub utility_coarse: Option<Stat>,
    pub utility_fine: Option<Stat>,
    pub privacy_coarse: Option<Stat>,
    pub privacy_fine: Option<Stat>,
    pub advantage: Option<Stat>,
    pub seeds: Vec<SeedResult>,
    pub failures: Vec<Failure>,
}

pub const REPORT_FORMAT: &str = "ppdr-report";
pub const REPORT_VERSION: u32 = 1;

/// Results for one dataset, shaped like the published tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub format: String,
    pub version: u32,
    pub dataset: String,
    pub utility: String,
    pub privacy: String,
    pub utility_classes: usize,
    pub privacy_classes: usize,
    /// Random-guess privacy accuracy, `100 / L^p`.
    pub baseline: f64,
    pub seeds: Vec<u64>,
    pub folds: usize,
    pub rows: Vec<MethodRow>,
}

/// Sanitized testing split of one (method, seed) job.
#[derive(Debug, Clone, PartialEq)]
pub struct Release {
    pub label: String,
    pub seed: u64,
    pub features: Matrix,
    pub targets: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioOutcome {
    pub report: ExperimentReport,
    pub releases: Vec<Release>,
}

impl ExperimentReport {
    pub fn not_converged(&self) -> usize {
        self.rows
            .iter()
            .flat_map(|r| &r.seeds)
            .map(|s| s.not_converged)
            .sum()
    }

    pub fn failures(&self) -> impl Iterator<Item = &Failure> {
        self.rows.iter().flat_map(|r| &r.failures)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Aligned text table: one row per method, mean ± std per column.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{}: utility `{}` ({} classes), privacy `{}` ({} classes), random guess {:.2}%",
            self.dataset,
            self.utility,
            self.utility_classes,
            self.privacy,
            self.privacy_classes,
            self.baseline
        );
        let _ = writeln!(
            out,
            "seeds {:?}, {}-fold grid search",
            self.seeds, self.folds
        );
        let width = self
            .rows
            .iter()
            .map(|r| r.label.chars().count())
            .max()
            .unwrap_or(6)
            .max(6);
        let head = [
            format!("{} coarse", self.utility),
            format!("{} fine", self.utility),
            format!("{} coarse", self.privacy),
            format!("{} fine", self.privacy),
        ];
        let _ = write!(out, "{:<width$}  {:>4}", "Method", "K");
        for h in &head {
            let _ = write!(out, "  {h:>15}");
        }
        let _ = writeln!(out, "  {:>6}  {:>6}", "Adv", "Conv%");
        for row in &self.rows {
            let pad = width - row.label.chars().count();
            let _ = write!(out, "{}{}  {:>4}", row.label, " ".repeat(pad), row.params.k);
            for stat in [
                &row.utility_coarse,
                &row.utility_fine,
                &row.privacy_coarse,
                &row.privacy_fine,
            ] {
                let cell = stat.as_ref().map_or("failed".to_string(), |s| {
                    format!("{:.2} ± {:.2}", s.mean, s.std)
                });
                let _ = write!(out, "  {cell:>15}");
            }
            let adv = row
                .advantage
                .as_ref()
                .map_or("-".to_string(), |s| format!("{:.3}", s.mean));
            let conv = if row.seeds.is_empty() {
                "-".to_string()
            } else {
                format!(
                    "{:.1}",
                    100.0 * row.seeds.iter().map(|s| s.convergence_rate).sum::<f64>()
                        / row.seeds.len() as f64
                )
            };
            let _ = writeln!(out, "  {adv:>6}  {conv:>6}");
            for f in &row.failures {
                let _ = writeln!(out, "    seed {} failed: {}", f.seed, f.message);
            }
        }
        out
    }
}

/// Adversary advantage: the largest gap between the rates at which the
/// attacker outputs any two privacy classes over the released samples. For
/// two classes this is `|Pr(guess = P₁) − Pr(guess = P₂)|`.
pub fn advantage(guesses: &[usize], sources: &[usize], n_classes: usize) -> Result<f64> {
    if guesses.is_empty() {
        return Err(EvaluateError::EmptyReport);
    }
    if guesses.len() != sources.len() {
        return Err(EvaluateError::Config(format!(
            "{} guesses for {} samples",
            guesses.len(),
            sources.len()
        )));
    }
    let n_classes = guesses
        .iter()
        .chain(sources)
        .map(|&c| c + 1)
        .max()
        .unwrap_or(0)
        .max(n_classes);
    let mut counts = vec![0usize; n_classes];
    for &g in guesses {
        counts[g] += 1;
    }
    let n = guesses.len() as f64;
    let max = *counts.iter().max().unwrap() as f64 / n;
    let min = *counts.iter().min().unwrap() as f64 / n;
    Ok(max - min)
}

/// Standardized splits shared by every job.
struct Prepared<'a> {
    config: &'a ScenarioConfig,
    train: LabeledDataset,
    test: LabeledDataset,
    adversary: LabeledDataset,
}

struct JobOutput {
    params: ProjectionParams,
    result: SeedResult,
    release: Option<Release>,
}

fn fit_projection(p: &Prepared, spec: &MethodSpec, seed: u64) -> Result<ProjectionModel> {
    let cfg = p.config;
    let k = spec.k.unwrap_or(cfg.k);
    let rho0 = spec.rho0.unwrap_or(cfg.rho0);
    let m = p.train.n_features();
    let mean = p.train.features.row_sum().transpose() / p.train.n_rows() as f64;
    let model = match spec.method {
        Method::Identity => projection::identity(m),
        Method::Pca => projection::fit_pca(&p.train, k)?,
        Method::Random => projection::fit_random(m, k, seed)?.centered_on(mean),
        Method::Dca => projection::fit_dca(&compute_scatter(&p.train, &cfg.utility)?, k, rho0)?,
        Method::Mdr => {
            let su = compute_scatter(&p.train, &cfg.utility)?;
            let sp = compute_scatter(&p.train, &cfg.privacy)?;
            projection::fit_mdr(&su, &sp, k, rho0)?
        }
        Method::Jupa | Method::JupaMulti => {
            let su = compute_scatter(&p.train, &cfg.utility)?;
            let sp = compute_scatter(&p.train, &cfg.privacy)?;
            let mut model = projection::fit_jupa_multi(
                &[su],
                &vec![sp; spec.rho1.len()],
                k,
                rho0,
                &spec.rho1,
                &spec.rho1_prime,
            )?;
            model.method = spec.method;
            model
        }
    };
    Ok(if cfg.centered || spec.method == Method::Identity {
        model
    } else {
        model.uncentered()
    })
}

fn run_job(p: &Prepared, spec: &MethodSpec, seed: u64) -> Result<JobOutput> {
    let cfg = p.config;
    let model = fit_projection(p, spec, seed)?;
    let train = model.project_dataset(&p.train)?;
    let test = model.project_dataset(&p.test)?;
    let adversary = model.project_dataset(&p.adversary)?;

    let (utility_clf, utility_grid) = fit_best(&train, &cfg.utility, &cfg.grid, seed)?;
    let (attack_clf, attack_grid) = fit_best(&adversary, &cfg.privacy, &cfg.grid, seed)?;
    let utility_truth = test.labels(&cfg.utility)?;
    let privacy_truth = test.labels(&cfg.privacy)?;

    let sigma = select_sigma(
        &train,
        &cfg.privacy,
        &cfg.sanitizer_sigma_multipliers,
        cfg.sanitizer_folds,
        seed,
    )?
    .sigma;
    let sanitizer = SanitizerModel::fit(
        &train,
        &cfg.privacy,
        KernelSpec::rbf(sigma),
        cfg.sanitizer.clone(),
        seed,
    )?;
    let batch = sanitizer.sanitize_batch(&test)?;

    let guesses = attack_clf.predict(&batch.sanitized)?;
    let n_privacy = test.target(&cfg.privacy)?.n_classes();
    let result = SeedResult {
        seed,
        utility_coarse: 100.0 * utility_clf.accuracy(&test.features, utility_truth)?,
        utility_fine: 100.0 * utility_clf.accuracy(&batch.sanitized, utility_truth)?,
        privacy_coarse: 100.0 * attack_clf.accuracy(&test.features, privacy_truth)?,
        privacy_fine: 100.0 * crate::classifier::accuracy(&guesses, privacy_truth),
        advantage: advantage(&guesses, privacy_truth, n_privacy)?,
        convergence_rate: batch.convergence_rate(),
        not_converged: batch.not_converged.len(),
        sanitizer_sigma: sigma,
        utility_model: utility_grid.best().clone(),
        attack_model: attack_grid.best().clone(),
    };
    let release = cfg.keep_release.then(|| Release {
        label: spec.label(),
        seed,
        targets: batch.targets(),
        features: batch.sanitized.clone(),
    });
    Ok(JobOutput {
        params: model.params,
        result,
        release,
    })
}

fn check_split(data: &LabeledDataset, cfg: &ScenarioConfig) -> Result<()> {
    data.validate()?;
    data.target(&cfg.utility)?;
    data.target(&cfg.privacy)?;
    Ok(())
}

/// Runs every configured method over every seed. Individual (method, seed)
/// failures are recorded in the report instead of aborting the run.
pub fn run_scenario(
    dataset: &str,
    splits: &Splits,
    config: &ScenarioConfig,
) -> Result<ScenarioOutcome> {
    config.validate()?;
    for split in [&splits.training, &splits.testing, &splits.adversary] {
        check_split(split, config)?;
    }
    let (train, test, adversary) = if config.standardize {
        let z = Standardizer::fit(&splits.training.features);
        (
            z.apply(&splits.training),
            z.apply(&splits.testing),
            z.apply(&splits.adversary),
        )
    } else {
        (
            splits.training.clone(),
            splits.testing.clone(),
            splits.adversary.clone(),
        )
    };
    let prepared = Prepared {
        config,
        train,
        test,
        adversary,
    };

    let jobs: Vec<(usize, u64)> = (0..config.methods.len())
        .flat_map(|m| config.seeds.iter().map(move |&s| (m, s)))
        .collect();
    let outputs: Vec<Result<JobOutput>> = jobs
        .par_iter()
        .map(|&(m, seed)| run_job(&prepared, &config.methods[m], seed))
        .collect();

    let mut rows = Vec::with_capacity(config.methods.len());
    let mut releases = Vec::new();
    let mut outputs = outputs.into_iter();
    for spec in &config.methods {
        let mut seeds = Vec::new();
        let mut failures = Vec::new();
        let mut params = None;
        for &seed in &config.seeds {
            match outputs.next().expect("one output per job") {
                Ok(out) => {
                    params.get_or_insert(out.params);
                    seeds.push(out.result);
                    releases.extend(out.release);
                }
                Err(e) => failures.push(Failure {
                    seed,
                    message: e.to_string(),
                    numeric: e.is_numeric(),
                }),
            }
        }
        let column = |f: fn(&SeedResult) -> f64| Stat::of(seeds.iter().map(f).collect());
        rows.push(MethodRow {
            label: spec.label(),
            spec: spec.clone(),
            params: params.unwrap_or_else(|| ProjectionParams {
                rho0: spec.rho0.unwrap_or(config.rho0),
                rho1: spec.rho1.clone(),
                rho1_prime: spec.rho1_prime.clone(),
                ..ProjectionParams::new(spec.k.unwrap_or(config.k))
            }),
            utility_coarse: column(|s| s.utility_coarse),
            utility_fine: column(|s| s.utility_fine),
            privacy_coarse: column(|s| s.privacy_coarse),
            privacy_fine: column(|s| s.privacy_fine),
            advantage: column(|s| s.advantage),
            seeds,
            failures,
        });
    }

    let privacy_classes = prepared.train.target(&config.privacy)?.n_classes();
    Ok(ScenarioOutcome {
        report: ExperimentReport {
            format: REPORT_FORMAT.into(),
            version: REPORT_VERSION,
            dataset: dataset.to_string(),
            utility: config.utility.clone(),
            privacy: config.privacy.clone(),
            utility_classes: prepared.train.target(&config.utility)?.n_classes(),
            privacy_classes,
            baseline: 100.0 / privacy_classes as f64,
            seeds: config.seeds.clone(),
            folds: config.grid.folds,
            rows,
        },
        releases,
    })
}

/// Measured minus published value for each of the four accuracy columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub label: String,
    pub measured: [Option<f64>; 4],
    pub published: [f64; 4],
}

pub fn compare(report: &ExperimentReport, table: &ReferenceTable) -> Vec<ComparisonRow> {
    table
        .rows
        .iter()
        .map(|r| {
            let label = r.method.label();
            let row = report.rows.iter().find(|m| m.label == label);
            let mean = |s: Option<&Option<Stat>>| s.and_then(|s| s.as_ref()).map(|s| s.mean);
            ComparisonRow {
                measured: [
                    mean(row.map(|m| &m.utility_coarse)),
                    mean(row.map(|m| &m.utility_fine)),
                    mean(row.map(|m| &m.privacy_coarse)),
                    mean(row.map(|m| &m.privacy_fine)),
                ],
                published: r.values,
                label,
            }
        })
        .collect()
}

/// Text rendering of [`compare`]: `measured (published, Δ)` per cell.
pub fn comparison_table(report: &ExperimentReport, table: &ReferenceTable) -> String {
    let rows = compare(report, table);
    let width = rows
        .iter()
        .map(|r| r.label.chars().count())
        .max()
        .unwrap_or(6);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "Table {} ({}), K = {}: measured (published, delta)",
        table.number, report.dataset, table.k
    );
    let _ = write!(out, "{:<width$}", "Method");
    for h in [
        format!("{} coarse", report.utility),
        format!("{} fine", report.utility),
        format!("{} coarse", report.privacy),
        format!("{} fine", report.privacy),
    ] {
        let _ = write!(out, "  {h:>24}");
    }
    out.push('\n');
    for r in &rows {
        let pad = width - r.label.chars().count();
        let _ = write!(out, "{}{}", r.label, " ".repeat(pad));
        for (m, p) in r.measured.iter().zip(&r.published) {
            let cell = match m {
                Some(m) => format!("{m:.2} ({p:.2}, {:+.2})", m - p),
                None => format!("- ({p:.2})"),
            };
            let _ = write!(out, "  {cell:>24}");
        }
        out.push('\n');
    }
    out
}
