//! Cross-validated MAE experiments.
//!
//! # Report files
//!
//! [`ExperimentResult`] and [`Comparison`] serialize to TOML. The field
//! names of those structs (and of [`FoldResult`], [`SolverConfig`] and
//! [`BaselineConfig`]) are the report keys.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baseline::{fit_baseline, interaction_residuals, BaselineConfig, BaselineModel};
use crate::dataset::{make_folds, split, RatingsDataset, Split};
use crate::error::{Error, Result};
use crate::linalg::MaskedMatrix;
use crate::model::{clamp_rating, FactorModel};
use crate::solver::{fit, fit_observed, FitReport, IterationControl, SolverConfig, Variant};

/// `Σ|truth − prediction| / count`.
pub fn mae(predictions: &[f64], truths: &[f64]) -> Result<f64> {
    if predictions.len() != truths.len() {
        return Err(Error::Argument(format!(
            "{} predictions for {} ratings",
            predictions.len(),
            truths.len()
        )));
    }
    if truths.is_empty() {
        return Err(Error::Argument("MAE of an empty set".into()));
    }
    let total: f64 = predictions
        .iter()
        .zip(truths)
        .map(|(p, t)| (t - p).abs())
        .sum();
    Ok(total / truths.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub solver: SolverConfig,
    pub baseline: BaselineConfig,
    pub n_folds: usize,
    /// Seeds the fold shuffle. Repeat `r` initializes the factors with
    /// `solver.seed + r`.
    pub seed: u64,
    /// Independent factor initializations averaged per fold.
    pub repeats: usize,
    /// Clamp predictions to `[1, 5]` before scoring.
    pub clamp: bool,
    /// Choose the outer iteration count on a holdout of each training set.
    pub early_stopping: Option<EarlyStopping>,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            solver: SolverConfig::default(),
            baseline: BaselineConfig::default(),
            n_folds: 5,
            seed: 0,
            repeats: 3,
            clamp: true,
            early_stopping: Some(EarlyStopping::default()),
        }
    }
}

/// Selection of the outer iteration count by validation.
///
/// A seeded `holdout_fraction` of the training ratings is set aside, the
/// model is fitted on the rest while the holdout MAE is tracked after every
/// outer iteration, and the search stops `patience` iterations after the
/// last improvement. The final model is then refitted on all training
/// ratings for the best iteration count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EarlyStopping {
    pub holdout_fraction: f64,
    pub patience: usize,
}

impl Default for EarlyStopping {
    fn default() -> Self {
        EarlyStopping {
            holdout_fraction: 0.1,
            patience: 10,
        }
    }
}

impl EarlyStopping {
    fn validate(&self) -> Result<()> {
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return Err(Error::Argument(format!(
                "holdout fraction must lie in (0, 1), got {}",
                self.holdout_fraction
            )));
        }
        if self.patience == 0 {
            return Err(Error::Argument("patience must be at least 1".into()));
        }
        Ok(())
    }
}

/// Result of an iteration-count search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationSelection {
    pub best_iterations: usize,
    pub best_holdout_mae: f64,
    /// Holdout MAE after each outer iteration that was run.
    pub holdout_trace: Vec<f64>,
}

/// Runs the holdout search described on [`EarlyStopping`] and returns the
/// best outer iteration count (at least 1 when `max_outer_iters ≥ 1`).
pub fn select_iterations(
    train: &MaskedMatrix,
    solver: &SolverConfig,
    baseline: &BaselineConfig,
    early: &EarlyStopping,
    clamp: bool,
) -> Result<IterationSelection> {
    early.validate()?;
    let nnz = train.nnz();
    if nnz < 2 {
        return Err(Error::Argument(
            "need at least 2 training ratings to hold some out".into(),
        ));
    }
    let n_holdout = ((nnz as f64 * early.holdout_fraction).round() as usize).clamp(1, nnz - 1);
    let mut order: Vec<usize> = (0..nnz).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(
        solver.seed ^ 0x0068_6f6c_646f_7574,
    ));
    let mut is_holdout = vec![false; nnz];
    order[..n_holdout]
        .iter()
        .for_each(|&i| is_holdout[i] = true);

    let mut fit_cells = Vec::with_capacity(nnz - n_holdout);
    let mut holdout = Vec::with_capacity(n_holdout);
    for (i, cell) in train.iter().enumerate() {
        if is_holdout[i] {
            holdout.push(cell);
        } else {
            fit_cells.push(cell);
        }
    }
    let fit_part = MaskedMatrix::new(train.rows(), train.cols(), fit_cells)?;
    let bl = fit_baseline(&fit_part, baseline.delta, baseline.tol, baseline.max_sweeps)?;
    let z = interaction_residuals(&fit_part, &bl)?;

    // Cold rows/columns of the fit part fall back to the baseline.
    let warm: Vec<bool> = holdout
        .iter()
        .map(|&(m, n, _)| fit_part.row_nnz(m) > 0 && fit_part.col_nnz(n) > 0)
        .collect();
    let truths: Vec<f64> = holdout.iter().map(|c| c.2).collect();
    let base: Vec<f64> = holdout
        .iter()
        .map(|&(m, n, _)| bl.mu_g + bl.b_user[m] + bl.b_item[n])
        .collect();

    let mut trace = Vec::new();
    let mut best = (f64::INFINITY, 0usize);
    let mut failure = None;
    let outcome = fit_observed(&z, solver, |state| {
        let k = state.u.cols();
        let preds: Vec<f64> = holdout
            .iter()
            .zip(&base)
            .zip(&warm)
            .map(|((&(m, n, _), &b), &w)| {
                let mut p = b;
                if w {
                    let urow = state.u.row(m);
                    p += (0..k).map(|f| urow[f] * state.v.get(f, n)).sum::<f64>();
                }
                if clamp {
                    clamp_rating(p)
                } else {
                    p
                }
            })
            .collect();
        match mae(&preds, &truths) {
            Ok(score) => {
                trace.push(score);
                if score < best.0 {
                    best = (score, state.iteration);
                }
                if state.iteration - best.1 >= early.patience {
                    IterationControl::Stop
                } else {
                    IterationControl::Continue
                }
            }
            Err(e) => {
                failure = Some(e);
                IterationControl::Stop
            }
        }
    });
    outcome?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(IterationSelection {
        best_iterations: best.1,
        best_holdout_mae: best.0,
        holdout_trace: trace,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub test_size: usize,
    /// Mean over repeats.
    pub mae: f64,
    pub repeat_maes: Vec<f64>,
    /// MAE of the bias model alone on the same test fold.
    pub baseline_mae: f64,
    /// Mean over repeats of baseline + factor fitting time.
    pub train_seconds: f64,
    pub v_sparsity: f64,
    /// Largest outer-iteration count of the final fit over repeats. Under
    /// early stopping this is the selected count.
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub dataset: String,
    pub variant: Variant,
    pub n_folds: usize,
    pub seed: u64,
    pub repeats: usize,
    pub clamp: bool,
    pub early_stopping: Option<EarlyStopping>,
    /// Hex digest of the fold assignments.
    pub fold_fingerprint: String,
    pub mean_mae: f64,
    pub mean_baseline_mae: f64,
    pub mean_seconds: f64,
    pub mean_v_sparsity: f64,
    pub config: SolverConfig,
    pub baseline: BaselineConfig,
    pub per_fold: Vec<FoldResult>,
}

impl ExperimentResult {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("experiment results serialize")
    }

    pub fn from_toml(text: &str) -> std::result::Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write_text(path.as_ref(), &self.to_toml())
    }

    /// Console table, one row per fold.
    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{} | variant={} folds={} seed={} repeats={} k={} lambda_u={:e} lambda_v={:e}",
            self.dataset,
            self.variant,
            self.n_folds,
            self.seed,
            self.repeats,
            self.config.rank,
            self.config.lambda_u,
            self.config.lambda_v
        );
        let _ = writeln!(
            s,
            "{:>5} {:>8} {:>9} {:>12} {:>10} {:>10} {:>6}",
            "fold", "test", "MAE", "baseline MAE", "seconds", "V zeros", "iters"
        );
        for f in &self.per_fold {
            let _ = writeln!(
                s,
                "{:>5} {:>8} {:>9.4} {:>12.4} {:>10.3} {:>10.4} {:>6}",
                f.fold,
                f.test_size,
                f.mae,
                f.baseline_mae,
                f.train_seconds,
                f.v_sparsity,
                f.iterations
            );
        }
        let _ = writeln!(
            s,
            "{:>5} {:>8} {:>9.4} {:>12.4} {:>10.3} {:>10.4}",
            "mean",
            "",
            self.mean_mae,
            self.mean_baseline_mae,
            self.mean_seconds,
            self.mean_v_sparsity
        );
        s
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Outcome of one training run.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub model: FactorModel,
    pub report: FitReport,
    /// Present when the iteration count was chosen by [`select_iterations`].
    pub selection: Option<IterationSelection>,
    /// Baseline fit, iteration search and factor fit.
    pub seconds: f64,
}

/// Fits baseline then factors on `train`, optionally choosing the number of
/// outer iterations first. The model carries the original ids of `ds`.
pub fn train_model(
    ds: &RatingsDataset,
    train: &MaskedMatrix,
    solver: &SolverConfig,
    baseline: &BaselineConfig,
    early_stopping: Option<&EarlyStopping>,
    clamp: bool,
) -> Result<TrainedModel> {
    let start = Instant::now();
    let mut solver = *solver;
    let selection = match early_stopping {
        Some(es) if solver.max_outer_iters > 0 => {
            let sel = select_iterations(train, &solver, baseline, es, clamp)?;
            solver.max_outer_iters = sel.best_iterations;
            Some(sel)
        }
        _ => None,
    };
    let bl: BaselineModel = fit_baseline(train, baseline.delta, baseline.tol, baseline.max_sweeps)?;
    let z = interaction_residuals(train, &bl)?;
    let (factors, report) = fit(&z, &solver)?;
    let seconds = start.elapsed().as_secs_f64();
    let model = FactorModel::new(
        factors,
        bl,
        solver,
        train,
        ds.user_ids().to_vec(),
        ds.item_ids().to_vec(),
    )?;
    Ok(TrainedModel {
        model,
        report,
        selection,
        seconds,
    })
}

/// MAE of `model` on the held-out ratings of `split`.
pub fn score(model: &FactorModel, split: &Split, clamp: bool) -> Result<f64> {
    let cells: Vec<_> = split.test.iter().map(|t| (t.user, t.item)).collect();
    let mut preds = model.predict_raw_many(&cells)?;
    if clamp {
        preds.iter_mut().for_each(|p| *p = clamp_rating(*p));
    }
    let truths: Vec<f64> = split.test.iter().map(|t| t.record.rating).collect();
    mae(&preds, &truths)
}

fn baseline_score(model: &FactorModel, split: &Split, clamp: bool) -> Result<f64> {
    let bl = &model.baseline;
    let (preds, truths): (Vec<f64>, Vec<f64>) = split
        .test
        .iter()
        .map(|t| {
            let p = bl.mu_g + bl.b_user[t.user] + bl.b_item[t.item];
            (if clamp { clamp_rating(p) } else { p }, t.record.rating)
        })
        .unzip();
    mae(&preds, &truths)
}

/// Runs `n_folds`-fold cross-validation: each fold is held out once while
/// the model is trained on the rest, `repeats` times with distinct factor
/// seeds.
pub fn run_cross_validation(
    ds: &RatingsDataset,
    dataset_name: &str,
    cfg: &CvConfig,
) -> Result<ExperimentResult> {
    if cfg.repeats == 0 {
        return Err(Error::Argument("repeats must be at least 1".into()));
    }
    cfg.solver.validate()?;
    let plan = make_folds(ds, cfg.n_folds, cfg.seed)?;

    let mut per_fold = Vec::with_capacity(cfg.n_folds);
    for fold in 0..cfg.n_folds {
        let sp = split(ds, &plan, fold)?;
        let mut repeat_maes = Vec::with_capacity(cfg.repeats);
        let mut seconds = 0.0;
        let mut sparsity = 0.0;
        let mut iterations = 0;
        let mut converged = true;
        let mut baseline_mae = f64::NAN;
        for rep in 0..cfg.repeats {
            let solver = SolverConfig {
                seed: cfg.solver.seed.wrapping_add(rep as u64),
                ..cfg.solver
            };
            let trained = train_model(
                ds,
                &sp.train,
                &solver,
                &cfg.baseline,
                cfg.early_stopping.as_ref(),
                cfg.clamp,
            )?;
            repeat_maes.push(score(&trained.model, &sp, cfg.clamp)?);
            if rep == 0 {
                baseline_mae = baseline_score(&trained.model, &sp, cfg.clamp)?;
            }
            seconds += trained.seconds;
            sparsity += trained.report.v_sparsity;
            iterations = iterations.max(trained.report.iterations_run);
            converged &= trained.report.converged;
        }
        let reps = cfg.repeats as f64;
        per_fold.push(FoldResult {
            fold,
            test_size: sp.test.len(),
            mae: repeat_maes.iter().sum::<f64>() / reps,
            repeat_maes,
            baseline_mae,
            train_seconds: seconds / reps,
            v_sparsity: sparsity / reps,
            iterations,
            converged,
        });
    }

    let mean =
        |f: fn(&FoldResult) -> f64| per_fold.iter().map(f).sum::<f64>() / per_fold.len() as f64;
    Ok(ExperimentResult {
        dataset: dataset_name.to_string(),
        variant: cfg.solver.variant,
        n_folds: cfg.n_folds,
        seed: cfg.seed,
        repeats: cfg.repeats,
        clamp: cfg.clamp,
        early_stopping: cfg.early_stopping,
        fold_fingerprint: format!("{:016x}", plan.fingerprint()),
        mean_mae: mean(|f| f.mae),
        mean_baseline_mae: mean(|f| f.baseline_mae),
        mean_seconds: mean(|f| f.train_seconds),
        mean_v_sparsity: mean(|f| f.v_sparsity),
        config: cfg.solver,
        baseline: cfg.baseline,
        per_fold,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparsityReport {
    pub v_zero_fraction: f64,
    /// `histogram[z]` = number of item columns with exactly `z` zero factors.
    pub zeros_per_column_histogram: Vec<usize>,
}

pub fn sparsity_report(model: &FactorModel) -> SparsityReport {
    let v = &model.v;
    let mut histogram = vec![0; v.rows() + 1];
    for n in 0..v.cols() {
        let zeros = (0..v.rows()).filter(|&f| v.get(f, n) == 0.0).count();
        histogram[zeros] += 1;
    }
    let total = (v.rows() * v.cols()).max(1);
    SparsityReport {
        v_zero_fraction: v.count_exact_zeros() as f64 / total as f64,
        zeros_per_column_histogram: histogram,
    }
}

/// A published MAE / runtime figure, carried in comparison reports for
/// context next to the measured values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceValue {
    pub algorithm: String,
    pub dataset: String,
    pub mae_3_fold: f64,
    pub mae_5_fold: f64,
    pub mae_10_fold: f64,
    pub seconds_5_fold: f64,
}

/// Published reference figures for the sparse-item model and for SGD.
pub fn reference_values() -> Vec<ReferenceValue> {
    let row = |algorithm: &str, dataset: &str, m3, m5, m10, secs| ReferenceValue {
        algorithm: algorithm.into(),
        dataset: dataset.into(),
        mae_3_fold: m3,
        mae_5_fold: m5,
        mae_10_fold: m10,
        seconds_5_fold: secs,
    };
    vec![
        row("BCS-CF", "100k", 0.7417, 0.7215, 0.7140, 2.67),
        row("SGD", "100k", 0.8002, 0.7432, 0.7312, 150.34),
        row("BCS-CF", "1m", 0.6835, 0.6762, 0.6712, 31.36),
        row("SGD", "1m", 0.6988, 0.6936, 0.6907, 1262.5),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    /// Both variants were scored on identical fold assignments.
    pub same_folds: bool,
    pub bcs: ExperimentResult,
    pub dense: ExperimentResult,
    pub reference: Vec<ReferenceValue>,
}

impl Comparison {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("comparison serializes")
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write_text(path.as_ref(), &self.to_toml())
    }

    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{} | {}-fold | same folds: {} ({})",
            self.bcs.dataset,
            self.bcs.n_folds,
            if self.same_folds { "yes" } else { "NO" },
            self.bcs.fold_fingerprint
        );
        let _ = writeln!(
            s,
            "{:>5} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10}",
            "fold", "bcs MAE", "dense MAE", "bcs s", "dense s", "bcs zeros", "dense zeros"
        );
        for (b, d) in self.bcs.per_fold.iter().zip(&self.dense.per_fold) {
            let _ = writeln!(
                s,
                "{:>5} {:>10.4} {:>10.4} {:>10.3} {:>10.3} {:>10.4} {:>10.4}",
                b.fold, b.mae, d.mae, b.train_seconds, d.train_seconds, b.v_sparsity, d.v_sparsity
            );
        }
        let _ = writeln!(
            s,
            "{:>5} {:>10.4} {:>10.4} {:>10.3} {:>10.3} {:>10.4} {:>10.4}",
            "mean",
            self.bcs.mean_mae,
            self.dense.mean_mae,
            self.bcs.mean_seconds,
            self.dense.mean_seconds,
            self.bcs.mean_v_sparsity,
            self.dense.mean_v_sparsity
        );
        let _ = writeln!(s, "reference (published, not measured here):");
        for r in &self.reference {
            let _ = writeln!(
                s,
                "  {:<7} {:<5} MAE 3/5/10-fold {:.4} / {:.4} / {:.4}, 5-fold seconds {}",
                r.algorithm, r.dataset, r.mae_3_fold, r.mae_5_fold, r.mae_10_fold, r.seconds_5_fold
            );
        }
        s
    }
}

/// Cross-validates both variants with the same folds and seeds.
pub fn run_comparison(
    ds: &RatingsDataset,
    dataset_name: &str,
    cfg: &CvConfig,
) -> Result<Comparison> {
    let with = |variant| CvConfig {
        solver: SolverConfig {
            variant,
            ..cfg.solver
        },
        ..*cfg
    };
    let bcs = run_cross_validation(ds, dataset_name, &with(Variant::Bcs))?;
    let dense = run_cross_validation(ds, dataset_name, &with(Variant::Dense))?;
    Ok(Comparison {
        same_folds: bcs.fold_fingerprint == dense.fold_fingerprint,
        bcs,
        dense,
        reference: reference_values(),
    })
}
