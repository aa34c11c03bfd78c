#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use ndarray::{Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use treecode::pursuit::Dictionary;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || StandardNormal.sample(rng))
}

pub fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

pub fn to_na(a: ArrayView2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

pub fn dict_na(dict: &Dictionary, support: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(dict.dim(), support.len(), |i, j| dict.atom(support[j])[i])
}

/// Residual norm of the least-squares fit of `x` on the given atoms.
pub fn ls_residual(dict: &Dictionary, support: &[usize], x: &[f64]) -> f64 {
    let xv = DVector::from_column_slice(x);
    if support.is_empty() {
        return xv.norm();
    }
    let a = dict_na(dict, support);
    let z = a.clone().svd(true, true).solve(&xv, 1e-13).unwrap();
    (xv - a * z).norm()
}

pub fn subsets(k: usize, q: usize) -> Vec<Vec<usize>> {
    if q == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for last in q - 1..k {
        for mut s in subsets(last, q - 1) {
            s.push(last);
            out.push(s);
        }
    }
    out
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

pub fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}
