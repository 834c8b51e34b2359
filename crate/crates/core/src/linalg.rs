//! Dense and masked matrix kernels used by the factorization steps.
//!
//! Everything here is sequential and allocation-explicit. The masked kernels
//! only ever touch observed cells, so the cost of a solver iteration scales
//! with the number of ratings rather than with `rows * cols`.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Largest eigenvalue of `AᵀA` for an entry-sampling operator `A`.
///
/// `AᵀA` is a diagonal 0/1 projection on the vectorized matrix, so the
/// constant is exact whenever at least one cell is observed.
pub const SAMPLING_OPERATOR_NORM_SQ: f64 = 1.0;

/// Row-major dense matrix of finite reals.
#[derive(Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DenseMatrix({}x{}) ", self.rows, self.cols)?;
        if self.data.len() <= 64 {
            f.debug_list()
                .entries(self.data.chunks(self.cols.max(1)))
                .finish()
        } else {
            f.write_str("[..]")
        }
    }
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Builds a matrix from row-major data, rejecting wrong lengths and
    /// non-finite entries.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Argument(format!(
                "expected {} entries for a {rows}x{cols} matrix, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::Argument(format!(
                "non-finite entry at ({}, {})",
                pos / cols.max(1),
                pos % cols.max(1)
            )));
        }
        Ok(DenseMatrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Argument("ragged rows".into()));
        }
        Self::from_vec(rows.len(), cols, rows.concat())
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        DenseMatrix { rows, cols, data }
    }

    pub(crate) fn from_vec_unchecked(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        DenseMatrix { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, value: f64) {
        self.data[r * self.cols + c] = value;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut out = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    /// `self · rhs`.
    pub fn matmul(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != rhs.rows {
            return Err(Error::Argument(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        for r in 0..self.rows {
            let out_row = &mut out.data[r * rhs.cols..(r + 1) * rhs.cols];
            for (i, &a) in self.row(r).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                axpy(a, rhs.row(i), out_row);
            }
        }
        Ok(out)
    }

    /// `selfᵀ · self` (cols × cols).
    pub fn gram(&self) -> DenseMatrix {
        let n = self.cols;
        let mut out = Self::zeros(n, n);
        for r in 0..self.rows {
            let row = self.row(r);
            for i in 0..n {
                let a = row[i];
                if a == 0.0 {
                    continue;
                }
                let out_row = &mut out.data[i * n..(i + 1) * n];
                for j in i..n {
                    out_row[j] += a * row[j];
                }
            }
        }
        out.mirror_upper();
        out
    }

    /// `self · selfᵀ` (rows × rows).
    pub fn outer_gram(&self) -> DenseMatrix {
        let n = self.rows;
        let mut out = Self::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                out.data[i * n + j] = dot(self.row(i), self.row(j));
            }
        }
        out.mirror_upper();
        out
    }

    fn mirror_upper(&mut self) {
        let n = self.rows;
        for i in 0..n {
            for j in 0..i {
                self.data[i * n + j] = self.data[j * n + i];
            }
        }
    }

    pub fn add_diagonal(&mut self, value: f64) {
        let n = self.rows.min(self.cols);
        for i in 0..n {
            self.data[i * self.cols + i] += value;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.data.iter_mut().for_each(|x| *x *= factor);
    }

    /// `self += factor * other`.
    pub fn add_scaled(&mut self, factor: f64, other: &DenseMatrix) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::Argument(format!(
                "shape mismatch {:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        axpy(factor, &other.data, &mut self.data);
        Ok(())
    }

    pub fn sub(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        let mut out = self.clone();
        out.add_scaled(-1.0, other)?;
        Ok(out)
    }

    pub fn frobenius_sq(&self) -> f64 {
        neumaier_sum(self.data.iter().map(|x| x * x))
    }

    pub fn frobenius(&self) -> f64 {
        self.frobenius_sq().sqrt()
    }

    /// `‖vec(self)‖₁`.
    pub fn l1_norm(&self) -> f64 {
        neumaier_sum(self.data.iter().map(|x| x.abs()))
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn count_exact_zeros(&self) -> usize {
        self.data.iter().filter(|&&x| x == 0.0).count()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn zero_row(&mut self, r: usize) {
        self.row_mut(r).fill(0.0);
    }

    pub fn zero_col(&mut self, c: usize) {
        for r in 0..self.rows {
            self.data[r * self.cols + c] = 0.0;
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Compensated summation; objective traces are compared with absolute
/// slack far below the naive rounding error of ~1e5 terms.
pub(crate) fn neumaier_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

#[derive(Debug, PartialEq, Eq)]
struct Pattern {
    rows: usize,
    cols: usize,
    // CSR layout; entry ids are positions in the CSR arrays.
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    row_of: Vec<usize>,
    // Entry ids grouped by column.
    col_ptr: Vec<usize>,
    by_col: Vec<usize>,
}

/// The observed entries of an `rows × cols` matrix.
///
/// This is both the data `Y` and the sampling operator `A`: applying `A` to
/// a dense matrix reads these cells, and `Aᵀ` scatters values back into them
/// with zeros elsewhere. The sparsity pattern is shared between matrices
/// derived from the same support (residuals, interaction values).
#[derive(Clone, PartialEq)]
pub struct MaskedMatrix {
    pattern: Arc<Pattern>,
    values: Vec<f64>,
}

impl fmt::Debug for MaskedMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "MaskedMatrix({}x{}, nnz={})",
            self.pattern.rows,
            self.pattern.cols,
            self.values.len()
        )
    }
}

impl MaskedMatrix {
    /// Builds a masked matrix from `(row, col, value)` triplets in any order.
    pub fn new(rows: usize, cols: usize, entries: Vec<(usize, usize, f64)>) -> Result<Self> {
        let mut entries = entries;
        for &(r, c, v) in &entries {
            if r >= rows || c >= cols {
                return Err(Error::Argument(format!(
                    "entry ({r}, {c}) outside a {rows}x{cols} matrix"
                )));
            }
            if !v.is_finite() {
                return Err(Error::Argument(format!("non-finite value at ({r}, {c})")));
            }
        }
        entries.sort_by_key(|&(r, c, _)| (r, c));
        if let Some(w) = entries
            .windows(2)
            .find(|w| (w[0].0, w[0].1) == (w[1].0, w[1].1))
        {
            return Err(Error::Argument(format!(
                "duplicate entry at ({}, {})",
                w[0].0, w[0].1
            )));
        }

        let nnz = entries.len();
        let mut row_ptr = vec![0usize; rows + 1];
        let mut col_count = vec![0usize; cols];
        for &(r, c, _) in &entries {
            row_ptr[r + 1] += 1;
            col_count[c] += 1;
        }
        for r in 0..rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        let mut col_ptr = vec![0usize; cols + 1];
        for c in 0..cols {
            col_ptr[c + 1] = col_ptr[c] + col_count[c];
        }
        let mut next = col_ptr[..cols].to_vec();
        let mut by_col = vec![0usize; nnz];
        for (id, &(_, c, _)) in entries.iter().enumerate() {
            by_col[next[c]] = id;
            next[c] += 1;
        }

        let pattern = Pattern {
            rows,
            cols,
            row_ptr,
            col_idx: entries.iter().map(|e| e.1).collect(),
            row_of: entries.iter().map(|e| e.0).collect(),
            col_ptr,
            by_col,
        };
        Ok(MaskedMatrix {
            pattern: Arc::new(pattern),
            values: entries.into_iter().map(|e| e.2).collect(),
        })
    }

    /// A matrix on the same support with new values, given in [`iter`](Self::iter) order.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.values.len() {
            return Err(Error::Argument(format!(
                "expected {} values, got {}",
                self.values.len(),
                values.len()
            )));
        }
        Ok(MaskedMatrix {
            pattern: Arc::clone(&self.pattern),
            values,
        })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.pattern.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.pattern.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Values in row-major order of their cells.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `(row, col, value)` in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let p = &*self.pattern;
        p.row_of
            .iter()
            .zip(&p.col_idx)
            .zip(&self.values)
            .map(|((&r, &c), &v)| (r, c, v))
    }

    /// Column indices and values observed in row `r`.
    pub fn row_entries(&self, r: usize) -> (&[usize], &[f64]) {
        let p = &*self.pattern;
        let span = p.row_ptr[r]..p.row_ptr[r + 1];
        (&p.col_idx[span.clone()], &self.values[span])
    }

    /// Row indices and values observed in column `c`.
    pub fn col_entries(&self, c: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let p = &*self.pattern;
        p.by_col[p.col_ptr[c]..p.col_ptr[c + 1]]
            .iter()
            .map(move |&id| (p.row_of[id], self.values[id]))
    }

    pub fn row_nnz(&self, r: usize) -> usize {
        self.pattern.row_ptr[r + 1] - self.pattern.row_ptr[r]
    }

    pub fn col_nnz(&self, c: usize) -> usize {
        self.pattern.col_ptr[c + 1] - self.pattern.col_ptr[c]
    }

    /// Whether both matrices have the same dimensions and observed cells.
    pub fn same_support(&self, other: &MaskedMatrix) -> bool {
        Arc::ptr_eq(&self.pattern, &other.pattern) || self.pattern == other.pattern
    }

    /// `Aᵀ(self)`: observed values in place, zeros elsewhere.
    pub fn to_dense(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.rows(), self.cols());
        for (r, c, v) in self.iter() {
            out.set(r, c, v);
        }
        out
    }

    pub fn sum_sq(&self) -> f64 {
        neumaier_sum(self.values.iter().map(|v| v * v))
    }

    /// `Aᵀ(self) · vᵀ` for `v` of shape `k × cols`; result is `rows × k`.
    pub fn mul_transposed(&self, v: &DenseMatrix) -> Result<DenseMatrix> {
        if v.cols() != self.cols() {
            return Err(Error::Argument(format!(
                "masked {}x{} times transpose of {}x{}",
                self.rows(),
                self.cols(),
                v.rows(),
                v.cols()
            )));
        }
        let k = v.rows();
        let vt = v.transpose();
        let mut out = DenseMatrix::zeros(self.rows(), k);
        for r in 0..self.rows() {
            let (cols, vals) = self.row_entries(r);
            let out_row = out.row_mut(r);
            for (&c, &val) in cols.iter().zip(vals) {
                axpy(val, vt.row(c), out_row);
            }
        }
        Ok(out)
    }

    /// `uᵀ · Aᵀ(self)` for `u` of shape `rows × k`; result is `k × cols`.
    pub fn transpose_mul(&self, u: &DenseMatrix) -> Result<DenseMatrix> {
        if u.rows() != self.rows() {
            return Err(Error::Argument(format!(
                "transpose of {}x{} times masked {}x{}",
                u.rows(),
                u.cols(),
                self.rows(),
                self.cols()
            )));
        }
        let k = u.cols();
        let mut acc = DenseMatrix::zeros(self.cols(), k);
        for c in 0..self.cols() {
            let acc_row = acc.row_mut(c);
            for (r, val) in self.col_entries(c) {
                axpy(val, u.row(r), acc_row);
            }
        }
        Ok(acc.transpose())
    }
}

/// `Y − A(U·V)` on the observed cells of `obs`.
pub fn masked_residual(
    obs: &MaskedMatrix,
    u: &DenseMatrix,
    v: &DenseMatrix,
) -> Result<MaskedMatrix> {
    if u.rows() != obs.rows() || v.cols() != obs.cols() || u.cols() != v.rows() {
        return Err(Error::Argument(format!(
            "factors {}x{} and {}x{} do not match a {}x{} observation matrix",
            u.rows(),
            u.cols(),
            v.rows(),
            v.cols(),
            obs.rows(),
            obs.cols()
        )));
    }
    let vt = v.transpose();
    let values = obs
        .iter()
        .map(|(r, c, y)| y - dot(u.row(r), vt.row(c)))
        .collect();
    obs.with_values(values)
}

/// Largest eigenvalue of a symmetric positive semidefinite matrix by power
/// iteration from the normalized all-ones vector.
///
/// Stops once successive Rayleigh quotients agree to `tol` relative, or
/// after `max_iter` multiplications. If the start vector lies in the null
/// space of a nonzero matrix the iteration restarts from a seeded random
/// vector.
pub fn spectral_norm_sq(g: &DenseMatrix, tol: f64, max_iter: usize) -> Result<f64> {
    if g.rows() != g.cols() {
        return Err(Error::Argument(format!(
            "power iteration needs a square matrix, got {}x{}",
            g.rows(),
            g.cols()
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::Argument(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let n = g.rows();
    if n == 0 || g.max_abs() == 0.0 {
        return Ok(0.0);
    }

    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    let mut w = vec![0.0; n];
    let mut restarted = false;
    let mut lambda = 0.0;
    let mut iter = 0;
    while iter < max_iter {
        for (i, wi) in w.iter_mut().enumerate() {
            *wi = dot(g.row(i), &v);
        }
        let next = dot(&v, &w);
        let norm = dot(&w, &w).sqrt();
        if norm == 0.0 {
            if restarted {
                return Ok(0.0);
            }
            restarted = true;
            let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0f1a);
            v.iter_mut().for_each(|x| *x = rng.random::<f64>() - 0.5);
            let vn = dot(&v, &v).sqrt();
            v.iter_mut().for_each(|x| *x /= vn);
            continue;
        }
        iter += 1;
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / norm;
        }
        let converged = iter > 1 && (next - lambda).abs() <= tol * next.abs();
        lambda = next;
        if converged {
            break;
        }
    }
    Ok(lambda.max(0.0))
}

/// Solves `X · a = b` for `X` (`m × k`), where `a` is `k × k` symmetric
/// positive definite, via a Cholesky factorization of `a`.
pub fn solve_spd(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    let k = a.rows();
    if a.cols() != k {
        return Err(Error::Argument(format!(
            "system matrix must be square, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    if b.cols() != k {
        return Err(Error::Argument(format!(
            "right-hand side has {} columns, system is {k}x{k}",
            b.cols()
        )));
    }
    let scale = a.max_abs().max(f64::MIN_POSITIVE);
    for i in 0..k {
        for j in 0..i {
            if (a.get(i, j) - a.get(j, i)).abs() > 1e-12 * scale {
                return Err(Error::Argument(format!(
                    "system matrix is not symmetric at ({i}, {j})"
                )));
            }
        }
    }

    let l = cholesky(a)?;
    let mut x = DenseMatrix::zeros(b.rows(), k);
    let mut y = vec![0.0; k];
    for r in 0..b.rows() {
        let rhs = b.row(r);
        // L y = rhs
        for i in 0..k {
            let li = l.row(i);
            y[i] = (rhs[i] - dot(&li[..i], &y[..i])) / li[i];
        }
        // Lᵀ x = y
        let xr = x.row_mut(r);
        for i in (0..k).rev() {
            let mut s = y[i];
            for j in i + 1..k {
                s -= l.get(j, i) * xr[j];
            }
            xr[i] = s / l.get(i, i);
        }
    }
    Ok(x)
}

fn cholesky(a: &DenseMatrix) -> Result<DenseMatrix> {
    let k = a.rows();
    let mut l = DenseMatrix::zeros(k, k);
    for j in 0..k {
        let pivot = a.get(j, j) - dot(&l.row(j)[..j], &l.row(j)[..j]);
        if !(pivot > 0.0) || !pivot.is_finite() {
            return Err(Error::Numerical(format!(
                "matrix is not positive definite: Cholesky pivot {j} is {pivot:e}"
            )));
        }
        let d = pivot.sqrt();
        l.set(j, j, d);
        for i in j + 1..k {
            let s = a.get(i, j) - dot(&l.row(i)[..j], &l.row(j)[..j]);
            l.set(i, j, s / d);
        }
    }
    Ok(l)
}

/// `sign(t) · max(0, |t| − s)`, the proximal operator of `s·|·|`.
#[inline]
pub fn soft(t: f64, s: f64) -> f64 {
    if t > s {
        t - s
    } else if t < -s {
        t + s
    } else {
        0.0
    }
}

/// Elementwise [`soft`].
pub fn soft_threshold(t: &DenseMatrix, s: f64) -> Result<DenseMatrix> {
    if !(s >= 0.0) {
        return Err(Error::Argument(format!(
            "threshold must be non-negative, got {s}"
        )));
    }
    let data = t.as_slice().iter().map(|&x| soft(x, s)).collect();
    Ok(DenseMatrix::from_vec_unchecked(t.rows(), t.cols(), data))
}
