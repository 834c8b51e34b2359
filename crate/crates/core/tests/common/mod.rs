#![allow(dead_code)]

use bcs_cf::{DenseMatrix, MaskedMatrix};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_dense(
    rng: &mut ChaCha8Rng,
    rows: usize,
    cols: usize,
    lo: f64,
    hi: f64,
) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.random_range(lo..hi))
}

pub fn to_na(a: &DenseMatrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(a.rows(), a.cols(), a.as_slice())
}

pub fn from_na(a: &DMatrix<f64>) -> DenseMatrix {
    DenseMatrix::from_fn(a.nrows(), a.ncols(), |r, c| a[(r, c)])
}

/// Each cell observed with probability `p`; every row and column keeps at
/// least one entry.
pub fn random_mask(rng: &mut ChaCha8Rng, rows: usize, cols: usize, p: f64) -> Vec<(usize, usize)> {
    let mut on = vec![vec![false; cols]; rows];
    for row in on.iter_mut() {
        for cell in row.iter_mut() {
            *cell = rng.random_bool(p);
        }
    }
    for (r, row) in on.iter_mut().enumerate() {
        row[r % cols] = true;
    }
    for c in 0..cols {
        on[c % rows][c] = true;
    }
    let mut cells = Vec::new();
    for (r, row) in on.iter().enumerate() {
        for (c, &x) in row.iter().enumerate() {
            if x {
                cells.push((r, c));
            }
        }
    }
    cells
}

pub fn random_observed(rng: &mut ChaCha8Rng, rows: usize, cols: usize, p: f64) -> MaskedMatrix {
    let cells = random_mask(rng, rows, cols, p)
        .into_iter()
        .map(|(r, c)| (r, c, rng.random_range(-2.0..2.0)))
        .collect();
    MaskedMatrix::new(rows, cols, cells).unwrap()
}

/// Dense landing matrix: observed cells take the data, the rest `UV`.
pub fn dense_landing(z: &MaskedMatrix, u: &DMatrix<f64>, v: &DMatrix<f64>) -> DMatrix<f64> {
    let mut w = u * v;
    for (r, c, y) in z.iter() {
        w[(r, c)] = y;
    }
    w
}

/// `Σ_Ω (y − (UV)_mn)²` computed cell by cell.
pub fn observed_sq_error(z: &MaskedMatrix, u: &DMatrix<f64>, v: &DMatrix<f64>) -> f64 {
    z.iter()
        .map(|(r, c, y)| {
            let p: f64 = (0..u.ncols()).map(|f| u[(r, f)] * v[(f, c)]).sum();
            (y - p).powi(2)
        })
        .sum()
}

pub fn max_abs_diff(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
