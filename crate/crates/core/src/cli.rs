//! `ppdr` command line: `prepare`, `run` and `reproduce`.
//!
//! Every run option is both a flag and a key of the JSON config file, with
//! the same spelling (`--data-dir` ↔ `"data-dir"`). Precedence is built-in
//! defaults, then the config file, then flags.
//!
//! Exit codes: 0 success, 2 usage or validation error, 3 some samples did not
//! converge or some (method, seed) jobs failed, 4 numeric failure.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::classifier::GridConfig;
use crate::dataset::synthetic::{generate, SyntheticSpec};
use crate::dataset::{
    balanced_sample, read_archive, write_archive, write_matrix, Archive, DatasetError, DatasetId,
    SplitRole, SplitSpec, Splits,
};
use crate::evaluate::{
    comparison_table, reference_table, run_scenario, EvaluateError, ExperimentReport, MethodSpec,
    ScenarioConfig, ScenarioOutcome,
};
use crate::projection::Method;
use crate::sanitizer::SanitizerConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Evaluate(#[from] EvaluateError),
    #[error("cannot write {}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("bad config file {}: {msg}", path.display())]
    Config { path: PathBuf, msg: String },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Evaluate(e) if e.is_numeric() => 4,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    /// 3 seeds, 5-fold grid search.
    Desk,
    /// 15 seeds, 10-fold grid search.
    Full,
}

impl Profile {
    pub fn n_seeds(self) -> u64 {
        match self {
            Profile::Desk => 3,
            Profile::Full => 15,
        }
    }

    pub fn folds(self) -> usize {
        match self {
            Profile::Desk => 5,
            Profile::Full => 10,
        }
    }
}

fn parse_method(s: &str) -> std::result::Result<Method, String> {
    Method::parse(s).ok_or_else(|| {
        format!("unknown method `{s}` (expected full, random, pca, dca, mdr, jupa or jupa-multi)")
    })
}

/// Options shared by `run` and `reproduce`, also accepted as a JSON config.
#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default, rename_all = "kebab-case")]
pub struct RunConfig {
    /// JSON file holding any of these options; flags override it.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Reference dataset: har, census, census-swap, bank or synthetic.
    #[arg(long)]
    pub dataset: Option<DatasetId>,
    /// Prepared archive to read instead of splitting the raw data.
    #[arg(long)]
    pub archive: Option<PathBuf>,
    /// Directory holding the raw dataset files.
    #[arg(long, env = "PPDR_DATA_DIR")]
    pub data_dir: Option<PathBuf>,
    /// Utility target name (default: the dataset's).
    #[arg(long)]
    pub utility: Option<String>,
    /// Privacy target name (default: the dataset's).
    #[arg(long)]
    pub privacy: Option<String>,
    /// Seed count and fold count preset [default: desk].
    #[arg(long, value_enum)]
    pub profile: Option<Profile>,
    /// Split seed and first evaluation seed [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Explicit evaluation seeds, overriding the profile.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Worker threads [default: number of cores].
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Rows per (utility, privacy) combination when splitting raw data.
    #[arg(long)]
    pub per_combination: Option<usize>,
    /// Methods to evaluate [default: full, random, pca, dca, mdr, jupa].
    #[arg(long = "method", value_delimiter = ',', value_parser = parse_method)]
    #[serde(rename = "method")]
    pub methods: Option<Vec<Method>>,
    /// Projection dimension [default: the dataset's].
    #[arg(long)]
    pub k: Option<usize>,
    /// Ridge regularizer ρ₀ [default: 0.001].
    #[arg(long)]
    pub rho0: Option<f64>,
    /// ρ₁ values; JUPA runs every (ρ₁, ρ′₁) pair [default: 1,100,10000].
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub rho1: Option<Vec<f64>>,
    /// ρ′₁ values [default: 1,100,10000].
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub rho1p: Option<Vec<f64>>,
    /// Sanitizer regularizer weight λ [default: 0.001].
    #[arg(long, allow_negative_numbers = true)]
    pub lambda: Option<f64>,
    /// Sanitizer learning rate α [default: 0.1].
    #[arg(long, allow_negative_numbers = true)]
    pub alpha: Option<f64>,
    /// Sanitizer loss margin τ [default: 0].
    #[arg(long, allow_negative_numbers = true)]
    pub tau: Option<f64>,
    /// Sanitizer iteration cap per attempt [default: 500].
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Sanitizer retries after a non-converged attempt [default: 6].
    #[arg(long)]
    pub retries: Option<usize>,
    /// SVM penalty grid [default: 0.1,1,10,100].
    #[arg(long = "c", value_delimiter = ',')]
    #[serde(rename = "c")]
    pub c_values: Option<Vec<f64>>,
    /// SVM bandwidth grid as multiples of the median distance [default: 0.25,0.5,1,2,4].
    #[arg(long, value_delimiter = ',')]
    pub svm_sigma: Option<Vec<f64>>,
    /// Grid-search folds, overriding the profile.
    #[arg(long)]
    pub folds: Option<usize>,
    /// Sanitizer bandwidth grid as multiples of the median distance [default: 0.1,0.5,1,2,5,10].
    #[arg(long, value_delimiter = ',')]
    pub sanitizer_sigma: Option<Vec<f64>>,
    /// Folds for the sanitizer bandwidth search [default: 5].
    #[arg(long)]
    pub sanitizer_folds: Option<usize>,
    /// Also write each sanitized testing split and its drawn targets.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub release: Option<bool>,
}

macro_rules! overlay {
    ($top:expr, $base:expr, $($field:ident),*) => {
        RunConfig { $($field: $top.$field.or($base.$field),)* }
    };
}

impl RunConfig {
    /// `self` with unset options taken from `base`.
    pub fn over(self, base: RunConfig) -> RunConfig {
        overlay!(
            self,
            base,
            config,
            dataset,
            archive,
            data_dir,
            utility,
            privacy,
            profile,
            seed,
            seeds,
            jobs,
            out,
            per_combination,
            methods,
            k,
            rho0,
            rho1,
            rho1p,
            lambda,
            alpha,
            tau,
            max_iters,
            retries,
            c_values,
            svm_sigma,
            folds,
            sanitizer_sigma,
            sanitizer_folds,
            release
        )
    }

    pub fn from_json(path: &Path, text: &str) -> Result<RunConfig> {
        serde_json::from_str(text).map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })
    }

    /// Merges the config file named by `--config`, if any, under the flags.
    pub fn load(self) -> Result<RunConfig> {
        let Some(path) = self.config.clone() else {
            return Ok(self);
        };
        let text =
            fs::read_to_string(&path).map_err(|_| DatasetError::FileNotFound(path.clone()))?;
        Ok(self.over(RunConfig::from_json(&path, &text)?))
    }

    fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    fn profile(&self) -> Profile {
        self.profile.unwrap_or(Profile::Desk)
    }

    /// Method rows to evaluate.
    pub fn method_specs(&self) -> Result<Vec<MethodSpec>> {
        let grid = vec![1.0, 1e2, 1e4];
        let rho1 = self.rho1.clone().unwrap_or_else(|| grid.clone());
        let rho1p = self.rho1p.clone().unwrap_or(grid);
        let methods = self.methods.clone().unwrap_or_else(|| {
            vec![
                Method::Identity,
                Method::Random,
                Method::Pca,
                Method::Dca,
                Method::Mdr,
                Method::Jupa,
            ]
        });
        if (self.rho1.is_some() || self.rho1p.is_some())
            && !methods
                .iter()
                .any(|m| matches!(m, Method::Jupa | Method::JupaMulti))
        {
            return Err(CliError::Usage(
                "--rho1 and --rho1p only apply to jupa and jupa-multi".into(),
            ));
        }
        let mut specs = Vec::new();
        for &method in &methods {
            match method {
                Method::Jupa => {
                    for &r in &rho1 {
                        for &rp in &rho1p {
                            specs.push(MethodSpec::jupa(r, rp));
                        }
                    }
                }
                Method::JupaMulti => specs.push(MethodSpec {
                    rho1: rho1.clone(),
                    rho1_prime: rho1p.clone(),
                    ..MethodSpec::new(method)
                }),
                _ => specs.push(MethodSpec::new(method)),
            }
        }
        Ok(specs)
    }

    /// Scenario settings for `dataset`, validated.
    pub fn scenario(
        &self,
        dataset: DatasetId,
        utility: &str,
        privacy: &str,
    ) -> Result<ScenarioConfig> {
        let base = ScenarioConfig::default();
        let profile = self.profile();
        let seeds = self
            .seeds
            .clone()
            .unwrap_or_else(|| (0..profile.n_seeds()).map(|i| self.seed() + i).collect());
        let sanitizer_default = SanitizerConfig::default();
        let grid_default = GridConfig::default();
        let scenario = ScenarioConfig {
            utility: utility.to_string(),
            privacy: privacy.to_string(),
            methods: self.method_specs()?,
            k: self.k.unwrap_or(dataset.default_k()),
            rho0: self.rho0.unwrap_or(base.rho0),
            seeds,
            grid: GridConfig {
                c_values: self.c_values.clone().unwrap_or(grid_default.c_values),
                sigma_multipliers: self
                    .svm_sigma
                    .clone()
                    .unwrap_or(grid_default.sigma_multipliers),
                folds: self.folds.unwrap_or(profile.folds()),
                tol: grid_default.tol,
            },
            sanitizer: SanitizerConfig {
                lambda: self.lambda.unwrap_or(sanitizer_default.lambda),
                alpha: self.alpha.unwrap_or(sanitizer_default.alpha),
                tau: self.tau.unwrap_or(sanitizer_default.tau),
                max_iters: self.max_iters.unwrap_or(sanitizer_default.max_iters),
                retries: self.retries.unwrap_or(sanitizer_default.retries),
                ..sanitizer_default
            },
            sanitizer_sigma_multipliers: self
                .sanitizer_sigma
                .clone()
                .unwrap_or(base.sanitizer_sigma_multipliers),
            sanitizer_folds: self.sanitizer_folds.unwrap_or(base.sanitizer_folds),
            keep_release: self.release.unwrap_or(false),
            ..base
        };
        scenario.validate()?;
        Ok(scenario)
    }

    fn dataset(&self) -> Result<DatasetId> {
        self.dataset.ok_or_else(|| {
            CliError::Usage("no dataset given (use --dataset or a config file)".into())
        })
    }

    /// Loads the archive, or reads and splits the raw data.
    pub fn load_archive(&self) -> Result<Archive> {
        if let Some(dir) = &self.archive {
            let archive = read_archive(dir)?;
            if let Some(d) = self.dataset {
                if d.as_str() != archive.dataset {
                    return Err(CliError::Usage(format!(
                        "archive {} holds `{}`, not `{d}`",
                        dir.display(),
                        archive.dataset
                    )));
                }
            }
            return Ok(archive);
        }
        let id = self.dataset()?;
        let per_combination = self.per_combination.unwrap_or(id.per_combination());
        let data = if id == DatasetId::Synthetic {
            generate(&SyntheticSpec {
                per_combination,
                ..SyntheticSpec::default()
            })
        } else {
            let dir = self.data_dir.as_ref().ok_or_else(|| {
                CliError::Usage(format!(
                    "{id} needs raw data: set --data-dir or PPDR_DATA_DIR"
                ))
            })?;
            id.load(dir, None, None)?.0
        };
        let utility = self
            .utility
            .clone()
            .unwrap_or_else(|| id.utility_target().to_string());
        let privacy = self
            .privacy
            .clone()
            .unwrap_or_else(|| id.privacy_target().to_string());
        let splits = balanced_sample(
            &data,
            &utility,
            &privacy,
            &SplitSpec::two_one_two(per_combination, self.seed()),
        )?;
        Ok(Archive {
            dataset: id.as_str().to_string(),
            seed: self.seed(),
            utility,
            privacy,
            splits,
        })
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = self.jobs {
            if n == 0 {
                return Err(CliError::Usage("--jobs must be at least 1".into()));
            }
            builder = builder.num_threads(n);
        }
        builder.build().map_err(|e| CliError::Usage(e.to_string()))
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "ppdr",
    version,
    about = "Utility-aware privacy-preserving data release"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split a raw dataset into training, testing and adversary archives.
    Prepare(PrepareArgs),
    /// Evaluate projection methods and write report.json and report.txt.
    Run(RunConfig),
    /// Run the full method grid of one published table and compare.
    Reproduce(ReproduceArgs),
}

#[derive(Debug, Clone, Args)]
pub struct PrepareArgs {
    /// Reference dataset: har, census, census-swap, bank or synthetic.
    #[arg(long)]
    pub dataset: DatasetId,
    /// Split seed [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory holding the raw dataset files.
    #[arg(long, env = "PPDR_DATA_DIR")]
    pub data_dir: Option<PathBuf>,
    /// Rows per (utility, privacy) combination.
    #[arg(long)]
    pub per_combination: Option<usize>,
    /// Archive directory [default: ppdr-<dataset>].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ReproduceArgs {
    /// Published table, 1 to 4.
    #[arg(long)]
    pub table: u32,
    #[command(flatten)]
    pub run: RunConfig,
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|source| CliError::Io {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// SHA-256 over the archive's file names and contents, in name order.
pub fn archive_digest(dir: &Path) -> Result<String> {
    let io = |source| CliError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut names: Vec<_> = fs::read_dir(dir)
        .map_err(io)?
        .map(|e| e.map(|e| e.file_name()))
        .collect::<std::io::Result<_>>()
        .map_err(io)?;
    names.sort();
    let mut hasher = Sha256::new();
    for name in names {
        let bytes = fs::read(dir.join(&name)).map_err(io)?;
        hasher.update(name.to_string_lossy().as_bytes());
        hasher.update((bytes.len() as u64).to_le_bytes());
        hasher.update(&bytes);
    }
    Ok(hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

fn split_summary(splits: &Splits, utility: &str, privacy: &str) -> Result<String> {
    let mut out = String::new();
    for role in SplitRole::ALL {
        let split = splits.get(role);
        let u = split.target(utility)?;
        let p = split.target(privacy)?;
        let mut counts = vec![0usize; u.n_classes() * p.n_classes()];
        for (a, b) in u.labels.iter().zip(&p.labels) {
            counts[a * p.n_classes() + b] += 1;
        }
        let lo = counts.iter().min().copied().unwrap_or(0);
        let hi = counts.iter().max().copied().unwrap_or(0);
        let per = if lo == hi {
            lo.to_string()
        } else {
            format!("{lo}..{hi}")
        };
        let _ = writeln!(
            out,
            "{:<9} {:>6} rows, {per} per combination over {} combinations",
            role.as_str(),
            split.n_rows(),
            counts.len()
        );
    }
    Ok(out)
}

/// Result of `prepare`.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub dir: PathBuf,
    pub digest: String,
    pub summary: String,
}

pub fn cmd_prepare(args: &PrepareArgs) -> Result<Prepared> {
    let cfg = RunConfig {
        dataset: Some(args.dataset),
        seed: args.seed,
        data_dir: args.data_dir.clone(),
        per_combination: args.per_combination,
        ..RunConfig::default()
    };
    let archive = cfg.load_archive()?;
    let dir = args
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("ppdr-{}", args.dataset)));
    write_archive(&dir, &archive)?;
    let digest = archive_digest(&dir)?;
    let summary = split_summary(&archive.splits, &archive.utility, &archive.privacy)?;
    Ok(Prepared {
        dir,
        digest,
        summary,
    })
}

/// Result of `run` or `reproduce`.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub out: PathBuf,
    pub report: ExperimentReport,
    pub text: String,
}

impl RunSummary {
    pub fn exit_code(&self) -> u8 {
        if self.report.failures().any(|f| f.numeric) {
            4
        } else if self.report.failures().next().is_some() || self.report.not_converged() > 0 {
            3
        } else {
            0
        }
    }
}

fn slug(label: &str) -> String {
    let mut s = String::new();
    for c in label.chars() {
        if c.is_ascii_alphanumeric() {
            s.push(c.to_ascii_lowercase());
        } else if !s.ends_with('-') {
            s.push('-');
        }
    }
    s.trim_matches('-').to_string()
}

fn execute(cfg: &RunConfig) -> Result<ScenarioOutcome> {
    let archive = cfg.load_archive()?;
    let id: DatasetId = archive.dataset.parse().map_err(CliError::Usage)?;
    let scenario = cfg.scenario(id, &archive.utility, &archive.privacy)?;
    let pool = cfg.pool()?;
    Ok(pool.install(|| run_scenario(&archive.dataset, &archive.splits, &scenario))?)
}

fn write_releases(out: &Path, outcome: &ScenarioOutcome) -> Result<()> {
    for r in &outcome.releases {
        let stem = out
            .join("release")
            .join(format!("{}-seed{}", slug(&r.label), r.seed));
        let matrix = stem.with_extension("mat");
        if let Some(parent) = matrix.parent() {
            fs::create_dir_all(parent).map_err(|source| CliError::Io {
                path: parent.to_path_buf(),
                source,
            })?;
        }
        write_matrix(&matrix, &r.features)?;
        let targets = serde_json::to_string(&r.targets).expect("targets serialize");
        write_file(&stem.with_extension("targets.json"), targets.as_bytes())?;
    }
    Ok(())
}

pub fn cmd_run(flags: &RunConfig) -> Result<RunSummary> {
    let cfg = flags.clone().load()?;
    let outcome = execute(&cfg)?;
    let out = cfg.out.clone().unwrap_or_else(|| PathBuf::from("ppdr-run"));
    let text = outcome.report.to_table();
    write_file(
        &out.join("report.json"),
        outcome.report.to_json().as_bytes(),
    )?;
    write_file(&out.join("report.txt"), text.as_bytes())?;
    write_releases(&out, &outcome)?;
    Ok(RunSummary {
        out,
        report: outcome.report,
        text,
    })
}

pub fn cmd_reproduce(args: &ReproduceArgs) -> Result<RunSummary> {
    let table = reference_table(args.table).ok_or_else(|| {
        CliError::Usage(format!("unknown table {} (expected 1 to 4)", args.table))
    })?;
    let mut cfg = args.run.clone().load()?;
    if cfg.dataset.is_some_and(|d| d != table.dataset) {
        return Err(CliError::Usage(format!(
            "table {} reports {}",
            table.number, table.dataset
        )));
    }
    cfg.dataset = Some(table.dataset);
    let outcome = execute(&cfg)?;
    let out = cfg
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("ppdr-table{}", table.number)));
    let text = format!(
        "{}\n{}",
        comparison_table(&outcome.report, &table),
        outcome.report.to_table()
    );
    write_file(
        &out.join(format!("table{}.json", table.number)),
        outcome.report.to_json().as_bytes(),
    )?;
    write_file(
        &out.join(format!("table{}.txt", table.number)),
        text.as_bytes(),
    )?;
    write_releases(&out, &outcome)?;
    Ok(RunSummary {
        out,
        report: outcome.report,
        text,
    })
}

fn finish(result: Result<RunSummary>) -> ExitCode {
    match result {
        Ok(summary) => {
            print!("{}", summary.text);
            println!("wrote {}", summary.out.display());
            let code = summary.exit_code();
            if code == 3 {
                eprintln!(
                    "warning: {} samples did not converge, {} jobs failed",
                    summary.report.not_converged(),
                    summary.report.failures().count()
                );
            }
            ExitCode::from(code)
        }
        Err(e) => fail(e),
    }
}

fn fail(e: CliError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code())
}

pub fn run(cli: Cli) -> ExitCode {
    match cli.command {
        Command::Prepare(args) => match cmd_prepare(&args) {
            Ok(p) => {
                print!("{}", p.summary);
                println!("archive {}", p.dir.display());
                println!("sha256 {}", p.digest);
                ExitCode::SUCCESS
            }
            Err(e) => fail(e),
        },
        Command::Run(cfg) => finish(cmd_run(&cfg)),
        Command::Reproduce(args) => finish(cmd_reproduce(&args)),
    }
}
