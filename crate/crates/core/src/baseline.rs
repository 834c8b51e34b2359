//! Global mean plus user and item biases, fitted before the factorization.
//!
//! The biases minimize
//!
//! ```text
//! Σ_{(m,n)∈Ω} (r_mn − μ − b_m − b_n)² + δ (Σ b_m² + Σ b_n²)
//! ```
//!
//! with `μ` fixed to the training mean.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{neumaier_sum, MaskedMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub delta: f64,
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            delta: 1e-3,
            tol: 1e-8,
            max_sweeps: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineModel {
    pub mu_g: f64,
    pub b_user: Vec<f64>,
    pub b_item: Vec<f64>,
    pub delta: f64,
}

impl BaselineModel {
    /// A model predicting `mu_g` everywhere.
    pub fn constant(mu_g: f64, num_users: usize, num_items: usize, delta: f64) -> Self {
        BaselineModel {
            mu_g,
            b_user: vec![0.0; num_users],
            b_item: vec![0.0; num_items],
            delta,
        }
    }

    pub fn num_users(&self) -> usize {
        self.b_user.len()
    }

    pub fn num_items(&self) -> usize {
        self.b_item.len()
    }

    #[inline]
    pub(crate) fn predict_unchecked(&self, m: usize, n: usize) -> f64 {
        self.mu_g + self.b_user[m] + self.b_item[n]
    }

    fn check_dims(&self, train: &MaskedMatrix) -> Result<()> {
        if self.num_users() != train.rows() || self.num_items() != train.cols() {
            return Err(Error::Argument(format!(
                "baseline is {}x{}, ratings are {}x{}",
                self.num_users(),
                self.num_items(),
                train.rows(),
                train.cols()
            )));
        }
        Ok(())
    }
}

/// Fits the biases by cyclic coordinate descent.
///
/// Each sweep sets every user bias, then every item bias, to its exact
/// minimizer given the others, then applies the exact minimizing shift
/// `b_m += c, b_n −= c` over rated users and items (a direction the data
/// term is blind to and only `δ` penalizes). Stops when the largest change
/// in a sweep is at most `tol` or after `max_sweeps`. Users and items
/// without ratings keep bias 0.
pub fn fit_baseline(
    train: &MaskedMatrix,
    delta: f64,
    tol: f64,
    max_sweeps: usize,
) -> Result<BaselineModel> {
    if train.is_empty() {
        return Err(Error::Argument(
            "cannot fit a baseline to zero ratings".into(),
        ));
    }
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::Argument(format!(
            "delta must be positive, got {delta}"
        )));
    }
    if !(tol >= 0.0) {
        return Err(Error::Argument(format!(
            "tolerance must be non-negative, got {tol}"
        )));
    }

    let mu_g = neumaier_sum(train.values().iter().copied()) / train.nnz() as f64;
    let mut model = BaselineModel::constant(mu_g, train.rows(), train.cols(), delta);
    let rated_users: Vec<usize> = (0..train.rows())
        .filter(|&m| train.row_nnz(m) > 0)
        .collect();
    let rated_items: Vec<usize> = (0..train.cols())
        .filter(|&n| train.col_nnz(n) > 0)
        .collect();

    for _ in 0..max_sweeps {
        let mut change = 0.0f64;
        for &m in &rated_users {
            let (cols, vals) = train.row_entries(m);
            let s: f64 = cols
                .iter()
                .zip(vals)
                .map(|(&n, &r)| r - mu_g - model.b_item[n])
                .sum();
            let next = s / (cols.len() as f64 + delta);
            change = change.max((next - model.b_user[m]).abs());
            model.b_user[m] = next;
        }
        for &n in &rated_items {
            let mut s = 0.0;
            let mut count = 0usize;
            for (m, r) in train.col_entries(n) {
                s += r - mu_g - model.b_user[m];
                count += 1;
            }
            let next = s / (count as f64 + delta);
            change = change.max((next - model.b_item[n]).abs());
            model.b_item[n] = next;
        }

        let sum_u: f64 = rated_users.iter().map(|&m| model.b_user[m]).sum();
        let sum_i: f64 = rated_items.iter().map(|&n| model.b_item[n]).sum();
        let shift = (sum_i - sum_u) / (rated_users.len() + rated_items.len()) as f64;
        rated_users.iter().for_each(|&m| model.b_user[m] += shift);
        rated_items.iter().for_each(|&n| model.b_item[n] -= shift);
        change = change.max(shift.abs());

        if change <= tol {
            break;
        }
    }
    Ok(model)
}

/// The regularized least-squares objective the biases minimize.
pub fn baseline_objective(train: &MaskedMatrix, bl: &BaselineModel) -> Result<f64> {
    bl.check_dims(train)?;
    let data = neumaier_sum(
        train
            .iter()
            .map(|(m, n, r)| (r - bl.predict_unchecked(m, n)).powi(2)),
    );
    let penalty = neumaier_sum(bl.b_user.iter().chain(&bl.b_item).map(|b| b * b));
    Ok(data + bl.delta * penalty)
}

/// `Z_mn = r_mn − μ − b_m − b_n` on the observed cells.
pub fn interaction_residuals(train: &MaskedMatrix, bl: &BaselineModel) -> Result<MaskedMatrix> {
    bl.check_dims(train)?;
    let values = train
        .iter()
        .map(|(m, n, r)| r - bl.predict_unchecked(m, n))
        .collect();
    train.with_values(values)
}

pub fn predict_baseline(bl: &BaselineModel, m: usize, n: usize) -> Result<f64> {
    if m >= bl.num_users() || n >= bl.num_items() {
        return Err(Error::Argument(format!(
            "cell ({m}, {n}) outside a {}x{} baseline",
            bl.num_users(),
            bl.num_items()
        )));
    }
    Ok(bl.predict_unchecked(m, n))
}
