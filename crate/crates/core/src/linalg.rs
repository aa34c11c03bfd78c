//! Small dense kernels shared by the pursuit, grouping and tree modules.
//!
//! Gram systems here are at most `q × q` on the coding path and `K × K` in
//! the dictionary update, so a plain Cholesky factorization is enough.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

/// Relative ridge added to every Gram diagonal: `RIDGE_SCALE · trace(G) / n`.
pub const RIDGE_SCALE: f64 = 1e-10;

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = c * 4;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in chunks * 4..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
pub fn dot_f32(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f32; 8];
    let chunks = a.len() / 8;
    for c in 0..chunks {
        let i = c * 8;
        for l in 0..8 {
            acc[l] += a[i + l] * b[i + l];
        }
    }
    let mut tail = 0.0;
    for i in chunks * 8..a.len() {
        tail += a[i] * b[i];
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

pub fn dot_view(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    match (a.as_slice(), b.as_slice()) {
        (Some(a), Some(b)) => dot(a, b),
        _ => a.dot(&b),
    }
}

pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

/// Adds the relative ridge to the diagonal of a symmetric positive
/// semidefinite matrix. Returns the amount added.
pub fn add_ridge(gram: &mut Array2<f64>) -> f64 {
    let n = gram.nrows();
    if n == 0 {
        return 0.0;
    }
    let trace: f64 = (0..n).map(|i| gram[[i, i]]).sum();
    let eps = if trace > 0.0 {
        RIDGE_SCALE * trace / n as f64
    } else {
        RIDGE_SCALE
    };
    for i in 0..n {
        gram[[i, i]] += eps;
    }
    eps
}

/// Lower-triangular Cholesky factor of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    lower: Array2<f64>,
}

impl Cholesky {
    pub fn factor(a: &Array2<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "cholesky needs a square matrix, got {}x{}",
                n,
                a.ncols()
            )));
        }
        let mut l = Array2::<f64>::zeros((n, n));
        for j in 0..n {
            let mut diag = a[[j, j]];
            for k in 0..j {
                diag -= l[[j, k]] * l[[j, k]];
            }
            if !(diag > 0.0) || !diag.is_finite() {
                return Err(Error::Numeric(format!(
                    "matrix not positive definite at pivot {j} ({diag:e})"
                )));
            }
            let d = diag.sqrt();
            l[[j, j]] = d;
            for i in j + 1..n {
                let mut s = a[[i, j]];
                for k in 0..j {
                    s -= l[[i, k]] * l[[j, k]];
                }
                l[[i, j]] = s / d;
            }
        }
        Ok(Self { lower: l })
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.dim();
        let l = &self.lower;
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s -= l[[i, k]] * b[k];
            }
            b[i] = s / l[[i, i]];
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in i + 1..n {
                s -= l[[k, i]] * b[k];
            }
            b[i] = s / l[[i, i]];
        }
    }

    /// Solves `A X = B` column by column.
    pub fn solve_matrix(&self, b: &Array2<f64>) -> Array2<f64> {
        let n = self.dim();
        let mut out = Array2::<f64>::zeros((n, b.ncols()));
        let mut col = vec![0.0; n];
        for j in 0..b.ncols() {
            for i in 0..n {
                col[i] = b[[i, j]];
            }
            self.solve_in_place(&mut col);
            for i in 0..n {
                out[[i, j]] = col[i];
            }
        }
        out
    }

    pub fn inverse(&self) -> Array2<f64> {
        self.solve_matrix(&Array2::eye(self.dim()))
    }
}

/// Factors `gram + ridge`. If rounding still leaves a non-positive pivot the
/// ridge is grown by decades until the factorization succeeds.
pub fn ridge_cholesky(mut gram: Array2<f64>) -> Result<Cholesky> {
    if gram.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite Gram matrix".into()));
    }
    let mut eps = add_ridge(&mut gram);
    for _ in 0..12 {
        match Cholesky::factor(&gram) {
            Ok(c) => return Ok(c),
            Err(_) => {
                let bump = eps * 9.0;
                for i in 0..gram.nrows() {
                    gram[[i, i]] += bump;
                }
                eps += bump;
            }
        }
    }
    Cholesky::factor(&gram)
}

/// `Aᵀ A` for a column-view set.
pub fn gram_of_columns(cols: &[&[f64]]) -> Array2<f64> {
    let n = cols.len();
    let mut g = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let v = dot(cols[i], cols[j]);
            g[[i, j]] = v;
            g[[j, i]] = v;
        }
    }
    g
}

/// Leading eigenvector of a symmetric positive semidefinite matrix by power
/// iteration. Returns `None` when the iterate collapses to zero.
pub fn top_eigenvector(
    a: ArrayView2<f64>,
    init: ArrayView1<f64>,
    max_steps: usize,
    tol: f64,
) -> Option<Array1<f64>> {
    let mut v = init.to_owned();
    let n0 = v.dot(&v).sqrt();
    if !(n0 > 0.0) {
        return None;
    }
    v /= n0;
    for _ in 0..max_steps {
        let mut w = a.dot(&v);
        let nw = w.dot(&w).sqrt();
        if !(nw > 0.0) || !nw.is_finite() {
            return None;
        }
        w /= nw;
        let diff = (&w - &v).mapv(|x| x * x).sum().sqrt();
        v = w;
        if diff < tol {
            break;
        }
    }
    Some(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn cholesky_solves_spd_system() {
        let a = array![[4.0, 2.0, 0.4], [2.0, 5.0, 1.0], [0.4, 1.0, 3.0]];
        let c = Cholesky::factor(&a).unwrap();
        let mut b = vec![1.0, 2.0, 3.0];
        c.solve_in_place(&mut b);
        let x = Array1::from(b);
        let back = a.dot(&x);
        for (got, want) in back.iter().zip([1.0, 2.0, 3.0]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn ridge_rescues_singular_gram() {
        let col = [1.0, 0.0, 0.0];
        let g = gram_of_columns(&[&col, &col]);
        assert!(Cholesky::factor(&g).is_err());
        assert!(ridge_cholesky(g).is_ok());
    }

    #[test]
    fn dot_matches_naive_sum() {
        let a: Vec<f64> = (0..13).map(|i| i as f64 * 0.5).collect();
        let b: Vec<f64> = (0..13).map(|i| 1.0 - i as f64).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - naive).abs() < 1e-12);
    }

    #[test]
    fn power_iteration_finds_dominant_axis() {
        let a = array![[3.0, 0.0], [0.0, 1.0]];
        let v = top_eigenvector(a.view(), array![1.0, 1.0].view(), 200, 1e-12).unwrap();
        assert!(v[0].abs() > 0.999_999);
    }
}
