//! The `bcs-cf` command line.
//!
//! Settings resolve as command-line flag, then `--config` TOML file, then
//! the built-in defaults. `lambda_u` defaults to `1e4` instead of `1e3` when
//! the 1M format is selected and neither source sets it.
//!
//! A config file uses the long flag names with `_` for `-`:
//!
//! ```toml
//! format = "100k"
//! rank = 50
//! lambda_u = 1e3
//! lambda_v = 0.1
//! folds = 5
//! early_stop = true
//! ```
//!
//! # Exit codes
//!
//! | code | cause |
//! |------|-------|
//! | 0 | success |
//! | 2 | bad argument or usage |
//! | 3 | unparseable ratings line |
//! | 4 | invalid ratings data |
//! | 5 | numerical failure |
//! | 6 | I/O failure |
//! | 7 | malformed model or config file |
//! | 8 | unknown user or item id |

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::baseline::BaselineConfig;
use crate::dataset::{parse_movielens, Format, RatingsDataset};
use crate::error::{Error, Result};
use crate::eval::{
    run_comparison, run_cross_validation, sparsity_report, train_model, CvConfig, EarlyStopping,
};
use crate::model::FactorModel;
use crate::solver::{InitScale, SolverConfig, Variant};

pub const EXIT_ARGUMENT: i32 = 2;
pub const EXIT_PARSE: i32 = 3;
pub const EXIT_VALIDATION: i32 = 4;
pub const EXIT_NUMERICAL: i32 = 5;
pub const EXIT_IO: i32 = 6;
pub const EXIT_FORMAT: i32 = 7;
pub const EXIT_UNKNOWN_ID: i32 = 8;

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Argument(_) => EXIT_ARGUMENT,
        Error::Parse { .. } => EXIT_PARSE,
        Error::Validation(_) => EXIT_VALIDATION,
        Error::Numerical(_) => EXIT_NUMERICAL,
        Error::Io { .. } => EXIT_IO,
        Error::Format { .. } => EXIT_FORMAT,
        Error::UnknownId { .. } => EXIT_UNKNOWN_ID,
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "bcs-cf",
    version,
    about = "Sparse-item matrix factorization for rating prediction"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print user, item and rating counts, density and the rating histogram.
    Inspect(DataArgs),
    /// Fit on the whole file and save the model.
    Train(RunArgs),
    /// k-fold cross-validated MAE.
    CrossValidate(RunArgs),
    /// Predict one rating from a saved model.
    Predict(PredictArgs),
    /// Cross-validate the sparse and dense variants on the same folds.
    Compare(RunArgs),
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Ratings file.
    #[arg(long)]
    pub dataset: PathBuf,
    /// `100k` (tab separated) or `1m` (`::` separated); default 100k.
    #[arg(long)]
    pub format: Option<Format>,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// TOML file with default settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Number of latent factors; default 50.
    #[arg(long)]
    pub rank: Option<usize>,
    /// Ridge weight on U; default 1e3 (1e4 for the 1m format).
    #[arg(long)]
    pub lambda_u: Option<f64>,
    /// l1 (or ridge, for dense) weight on V; default 0.1.
    #[arg(long)]
    pub lambda_v: Option<f64>,
    /// Bias regularizer.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Cross-validation folds; default 5.
    #[arg(long)]
    pub folds: Option<usize>,
    /// Seeds the fold shuffle and the factor initialization; default 0.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Factor initializations averaged per fold.
    #[arg(long)]
    pub repeats: Option<usize>,
    /// `bcs` (l1 on V) or `dense` (ridge on V).
    #[arg(long)]
    pub variant: Option<Variant>,
    /// Upper bound on outer iterations.
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Relative objective change that ends the outer loop.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Soft-thresholding steps per outer iteration; default 1.
    #[arg(long)]
    pub inner_v_steps: Option<usize>,
    /// `unit` or `inv_sqrt_rank`.
    #[arg(long)]
    pub init: Option<InitScale>,
    /// Run exactly `--max-iters` iterations instead of choosing the count on a holdout.
    #[arg(long)]
    pub no_early_stop: bool,
    /// Score raw predictions instead of clamping to [1, 5].
    #[arg(long)]
    pub no_clamp: bool,
    /// Report file (TOML).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Model file written by `train`; default `model.bcs`.
    #[arg(long)]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Original user id from the ratings file.
    #[arg(long)]
    pub user: u32,
    /// Original item id from the ratings file.
    #[arg(long)]
    pub item: u32,
}

/// Settings a `--config` file may carry.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub format: Option<Format>,
    pub rank: Option<usize>,
    pub lambda_u: Option<f64>,
    pub lambda_v: Option<f64>,
    pub delta: Option<f64>,
    pub folds: Option<usize>,
    pub seed: Option<u64>,
    pub repeats: Option<usize>,
    pub variant: Option<Variant>,
    pub max_iters: Option<usize>,
    pub tol: Option<f64>,
    pub inner_v_steps: Option<usize>,
    pub init: Option<InitScale>,
    pub early_stop: Option<bool>,
    pub holdout_fraction: Option<f64>,
    pub patience: Option<usize>,
    pub clamp: Option<bool>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }
}

/// Fully resolved settings of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct CliConfig {
    pub dataset: PathBuf,
    pub format: Format,
    pub cv: CvConfig,
    pub out: Option<PathBuf>,
    pub model: PathBuf,
}

impl CliConfig {
    pub fn resolve(args: &RunArgs) -> Result<Self> {
        let file = match &args.config {
            Some(path) => FileConfig::load(path)?,
            None => FileConfig::default(),
        };
        let format = args.data.format.or(file.format).unwrap_or(Format::Tab100k);
        let solver_defaults = SolverConfig::default();
        let lambda_u_default = match format {
            Format::Tab100k => solver_defaults.lambda_u,
            Format::Colon1m => 1e4,
        };
        let seed = args.seed.or(file.seed).unwrap_or(0);
        let solver = SolverConfig {
            rank: args.rank.or(file.rank).unwrap_or(solver_defaults.rank),
            lambda_u: args.lambda_u.or(file.lambda_u).unwrap_or(lambda_u_default),
            lambda_v: args
                .lambda_v
                .or(file.lambda_v)
                .unwrap_or(solver_defaults.lambda_v),
            max_outer_iters: args
                .max_iters
                .or(file.max_iters)
                .unwrap_or(solver_defaults.max_outer_iters),
            obj_tol: args.tol.or(file.tol).unwrap_or(solver_defaults.obj_tol),
            inner_v_steps: args
                .inner_v_steps
                .or(file.inner_v_steps)
                .unwrap_or(solver_defaults.inner_v_steps),
            seed,
            variant: args
                .variant
                .or(file.variant)
                .unwrap_or(solver_defaults.variant),
            init: args.init.or(file.init).unwrap_or(solver_defaults.init),
        };
        solver.validate()?;
        let baseline = BaselineConfig {
            delta: args
                .delta
                .or(file.delta)
                .unwrap_or(BaselineConfig::default().delta),
            ..Default::default()
        };
        let cv_defaults = CvConfig::default();
        let early_stop = !args.no_early_stop && file.early_stop.unwrap_or(true);
        let es_defaults = EarlyStopping::default();
        let cv = CvConfig {
            solver,
            baseline,
            n_folds: args.folds.or(file.folds).unwrap_or(cv_defaults.n_folds),
            seed,
            repeats: args.repeats.or(file.repeats).unwrap_or(cv_defaults.repeats),
            clamp: !args.no_clamp && file.clamp.unwrap_or(true),
            early_stopping: early_stop.then(|| EarlyStopping {
                holdout_fraction: file
                    .holdout_fraction
                    .unwrap_or(es_defaults.holdout_fraction),
                patience: file.patience.unwrap_or(es_defaults.patience),
            }),
        };
        if cv.n_folds < 2 {
            return Err(Error::Argument(format!(
                "--folds must be at least 2, got {} (see --help)",
                cv.n_folds
            )));
        }
        Ok(CliConfig {
            dataset: args.data.dataset.clone(),
            format,
            cv,
            out: args.out.clone(),
            model: args
                .model
                .clone()
                .unwrap_or_else(|| PathBuf::from("model.bcs")),
        })
    }
}

fn dataset_name(path: &Path) -> String {
    path.display().to_string()
}

fn write_out(out: &mut impl Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes())
        .map_err(|e| Error::io("<stdout>", e))
}

fn write_report(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn cmd_inspect(args: &DataArgs, out: &mut impl Write) -> Result<()> {
    let ds = parse_movielens(&args.dataset, args.format.unwrap_or(Format::Tab100k))?;
    write_out(out, &inspect_summary(&ds))
}

pub fn inspect_summary(ds: &RatingsDataset) -> String {
    let mut s = format!(
        "users: {}\nitems: {}\nratings: {}\ndensity: {:.6}\n",
        ds.num_users(),
        ds.num_items(),
        ds.len(),
        ds.density()
    );
    for (i, count) in ds.rating_histogram().iter().enumerate() {
        s += &format!("rating {}: {}\n", i + 1, count);
    }
    s
}

pub fn cmd_train(cfg: &CliConfig, out: &mut impl Write) -> Result<()> {
    let ds = parse_movielens(&cfg.dataset, cfg.format)?;
    let train = ds.to_masked();
    let trained = train_model(
        &ds,
        &train,
        &cfg.cv.solver,
        &cfg.cv.baseline,
        cfg.cv.early_stopping.as_ref(),
        cfg.cv.clamp,
    )?;
    trained.model.save(&cfg.model)?;
    let r = &trained.report;
    let mut s = format!(
        "variant: {}\niterations: {}\nconverged: {}\ninitial objective: {:.6e}\nfinal objective: {:.6e}\n",
        cfg.cv.solver.variant,
        r.iterations_run,
        r.converged,
        r.initial_objective,
        r.final_objective()
    );
    if let Some(sel) = &trained.selection {
        s += &format!(
            "selected iterations: {} (holdout MAE {:.4})\n",
            sel.best_iterations, sel.best_holdout_mae
        );
    }
    s += &format!(
        "v_sparsity: {:.4}\nwall time: {:.3} s\nmodel: {}\n",
        sparsity_report(&trained.model).v_zero_fraction,
        trained.seconds,
        cfg.model.display()
    );
    if let Some(path) = &cfg.out {
        write_report(path, &toml::to_string(r).expect("fit reports serialize"))?;
    }
    write_out(out, &s)
}

pub fn cmd_cross_validate(cfg: &CliConfig, out: &mut impl Write) -> Result<()> {
    let ds = parse_movielens(&cfg.dataset, cfg.format)?;
    let result = run_cross_validation(&ds, &dataset_name(&cfg.dataset), &cfg.cv)?;
    if let Some(path) = &cfg.out {
        result.write(path)?;
    }
    write_out(out, &result.table())
}

pub fn cmd_compare(cfg: &CliConfig, out: &mut impl Write) -> Result<()> {
    let ds = parse_movielens(&cfg.dataset, cfg.format)?;
    let cmp = run_comparison(&ds, &dataset_name(&cfg.dataset), &cfg.cv)?;
    if let Some(path) = &cfg.out {
        cmp.write(path)?;
    }
    write_out(out, &cmp.table())
}

pub fn cmd_predict(args: &PredictArgs, out: &mut impl Write) -> Result<()> {
    let model = FactorModel::load(&args.model)?;
    let rating = model.predict_ids(args.user, args.item)?;
    write_out(out, &format!("{rating:.4}\n"))
}

pub fn run(cli: &Cli, out: &mut impl Write) -> Result<()> {
    match &cli.command {
        Command::Inspect(args) => cmd_inspect(args, out),
        Command::Train(args) => cmd_train(&CliConfig::resolve(args)?, out),
        Command::CrossValidate(args) => cmd_cross_validate(&CliConfig::resolve(args)?, out),
        Command::Predict(args) => cmd_predict(args, out),
        Command::Compare(args) => cmd_compare(&CliConfig::resolve(args)?, out),
    }
}

/// Parses `args` (program name first), runs the command against standard
/// output and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ARGUMENT } else { 0 };
        }
    };
    let stdout = std::io::stdout();
    match run(&cli, &mut stdout.lock()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(extra: &[&str]) -> RunArgs {
        let mut argv = vec!["bcs-cf", "cross-validate", "--dataset", "x"];
        argv.extend_from_slice(extra);
        match Cli::try_parse_from(argv).unwrap().command {
            Command::CrossValidate(a) => a,
            _ => unreachable!(),
        }
    }

    #[test]
    fn zero_flag_defaults() {
        let cfg = CliConfig::resolve(&run_args(&[])).unwrap();
        assert_eq!(cfg.format, Format::Tab100k);
        assert_eq!(cfg.cv.solver, SolverConfig::default());
        assert_eq!(cfg.cv.baseline.delta, 1e-3);
        assert_eq!(cfg.cv.n_folds, 5);
        assert!(cfg.cv.clamp);
        assert!(cfg.cv.early_stopping.is_some());
    }

    #[test]
    fn one_m_format_raises_lambda_u_unless_set() {
        let cfg = CliConfig::resolve(&run_args(&["--format", "1m"])).unwrap();
        assert_eq!(cfg.cv.solver.lambda_u, 1e4);
        let cfg = CliConfig::resolve(&run_args(&["--format", "1m", "--lambda-u", "5"])).unwrap();
        assert_eq!(cfg.cv.solver.lambda_u, 5.0);
    }

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(
            &path,
            "rank = 7\nlambda_v = 0.5\nvariant = \"dense\"\nearly_stop = false\n",
        )
        .unwrap();
        let p = path.to_str().unwrap();
        let cfg = CliConfig::resolve(&run_args(&["--config", p, "--rank", "3"])).unwrap();
        assert_eq!(cfg.cv.solver.rank, 3);
        assert_eq!(cfg.cv.solver.lambda_v, 0.5);
        assert_eq!(cfg.cv.solver.variant, Variant::Dense);
        assert!(cfg.cv.early_stopping.is_none());
    }

    #[test]
    fn bad_config_and_folds() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "rnak = 7\n").unwrap();
        let err = CliConfig::resolve(&run_args(&["--config", path.to_str().unwrap()])).unwrap_err();
        assert_eq!(exit_code(&err), EXIT_FORMAT);
        let err = CliConfig::resolve(&run_args(&["--folds", "1"])).unwrap_err();
        assert_eq!(exit_code(&err), EXIT_ARGUMENT);
    }

    #[test]
    fn exit_codes_are_distinct() {
        let errs = [
            Error::Argument(String::new()),
            Error::Parse {
                path: "p".into(),
                line: 1,
                message: String::new(),
            },
            Error::Validation(String::new()),
            Error::Numerical(String::new()),
            Error::io("p", std::io::Error::other("x")),
            Error::Format {
                path: "p".into(),
                message: String::new(),
            },
            Error::UnknownId {
                kind: "user",
                id: 1,
            },
        ];
        let mut codes: Vec<i32> = errs.iter().map(exit_code).collect();
        assert!(codes.iter().all(|&c| c != 0));
        codes.sort();
        codes.dedup();
        assert_eq!(codes.len(), errs.len());
    }
}
