//! Greedy pursuit: OMP, simultaneous OMP, exact support solves and the
//! dictionary updates that alternate with them.

use ndarray::{Array2, ArrayView2, CowArray, Ix2, ShapeBuilder};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};
use crate::linalg::{self, dot, ridge_cholesky, Cholesky};

/// Pursuit stops once the residual norm drops below this (absolute).
pub const RESIDUAL_FLOOR: f64 = 1e-12;

/// A `d × K` matrix of unit-norm atoms stored column-major so every atom is
/// a contiguous slice.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    dim: usize,
    n_atoms: usize,
    data: Vec<f64>,
}

impl Dictionary {
    /// Builds a dictionary from a `d × K` matrix, normalizing every column.
    pub fn from_matrix(atoms: ArrayView2<f64>) -> Result<Self> {
        let (d, k) = atoms.dim();
        if d == 0 || k == 0 {
            return Err(invalid("dictionary needs d >= 1 and K >= 1"));
        }
        if atoms.iter().any(|v| !v.is_finite()) {
            return Err(invalid("dictionary has non-finite entries"));
        }
        let mut data = Vec::with_capacity(d * k);
        for col in atoms.columns() {
            data.extend(col.iter().copied());
        }
        let mut dict = Self {
            dim: d,
            n_atoms: k,
            data,
        };
        for j in 0..k {
            let n = linalg::norm_sq(dict.atom(j)).sqrt();
            if !(n > 0.0) {
                return Err(invalid(format!("atom {j} has zero norm")));
            }
            dict.atom_mut(j).iter_mut().for_each(|v| *v /= n);
        }
        Ok(dict)
    }

    /// Column-major raw data, `d·K` values, taken as-is (no normalization).
    pub(crate) fn from_raw(dim: usize, n_atoms: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || n_atoms == 0 || data.len() != dim * n_atoms {
            return Err(Error::Format(format!(
                "dictionary payload of {} values does not match {dim}x{n_atoms}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format("dictionary has non-finite entries".into()));
        }
        Ok(Self { dim, n_atoms, data })
    }

    pub fn random<R: Rng + ?Sized>(dim: usize, n_atoms: usize, rng: &mut R) -> Result<Self> {
        let m = Array2::from_shape_fn((dim, n_atoms), |_| rng.sample::<f64, _>(StandardNormal));
        Self::from_matrix(m.view())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    #[inline]
    pub fn atom(&self, k: usize) -> &[f64] {
        &self.data[k * self.dim..(k + 1) * self.dim]
    }

    fn atom_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.data[k * self.dim..(k + 1) * self.dim]
    }

    /// Overwrites atom `k` with `v / ‖v‖`.
    pub fn set_atom(&mut self, k: usize, v: &[f64]) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "atom of length {} for dictionary of dimension {}",
                v.len(),
                self.dim
            )));
        }
        let n = linalg::norm_sq(v).sqrt();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::Numeric(format!("cannot normalize atom {k}")));
        }
        self.atom_mut(k)
            .iter_mut()
            .zip(v)
            .for_each(|(dst, src)| *dst = src / n);
        Ok(())
    }

    pub fn column_major_data(&self) -> &[f64] {
        &self.data
    }

    pub fn to_matrix(&self) -> Array2<f64> {
        Array2::from_shape_vec((self.dim, self.n_atoms).f(), self.data.clone())
            .expect("shape matches storage")
    }

    /// `W_Ω z`.
    pub fn reconstruct(&self, support: &[usize], values: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (&k, &z) in support.iter().zip(values) {
            for (o, a) in out.iter_mut().zip(self.atom(k)) {
                *o += z * a;
            }
        }
        out
    }

    pub(crate) fn check_support(&self, support: &[usize]) -> Result<()> {
        for (i, &k) in support.iter().enumerate() {
            if k >= self.n_atoms {
                return Err(invalid(format!(
                    "atom index {k} out of range for K={}",
                    self.n_atoms
                )));
            }
            if support[..i].contains(&k) {
                return Err(invalid(format!("duplicate atom index {k} in support")));
            }
        }
        Ok(())
    }

    fn support_gram(&self, support: &[usize]) -> Array2<f64> {
        let cols: Vec<&[f64]> = support.iter().map(|&k| self.atom(k)).collect();
        linalg::gram_of_columns(&cols)
    }
}

/// Support and coefficients of one coded vector.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseCode {
    pub support: Vec<usize>,
    pub values: Vec<f64>,
    /// `‖W_Ω z − x‖²`; fast coding paths skip computing it.
    pub reconstruction_error: Option<f64>,
}

impl SparseCode {
    pub fn empty() -> Self {
        Self {
            support: Vec::new(),
            values: Vec::new(),
            reconstruction_error: None,
        }
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    /// Dense length-`K` representation.
    pub fn to_dense(&self, n_atoms: usize) -> Vec<f64> {
        let mut out = vec![0.0; n_atoms];
        for (&k, &v) in self.support.iter().zip(&self.values) {
            out[k] = v;
        }
        out
    }
}

/// Shared state of the greedy iterations.
#[derive(Debug, Clone)]
pub struct PursuitState {
    pub residual: Array2<f64>,
    pub active: Vec<usize>,
    pub iteration: usize,
}

/// Column `j` of `x` as a contiguous slice of the transposed standard-layout
/// copy; avoids copying when `x` is already column-major.
pub(crate) fn columns_of(x: ArrayView2<'_, f64>) -> CowArray<'_, f64, Ix2> {
    let t = x.reversed_axes();
    if t.is_standard_layout() {
        CowArray::from(t)
    } else {
        CowArray::from(t.as_standard_layout().into_owned())
    }
}

fn check_finite(x: &[f64], what: &str) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(invalid(format!("{what} contains non-finite entries")))
    }
}

fn check_budget(dict: &Dictionary, q: usize) -> Result<()> {
    let cap = dict.dim().min(dict.n_atoms());
    if q > cap {
        return Err(invalid(format!(
            "sparsity budget {q} exceeds min(d, K) = {cap}"
        )));
    }
    Ok(())
}

/// Coefficients of `x` on `support` via the ridge-regularized normal
/// equations. Returns the coefficients and the residual vector.
fn solve_single(x: &[f64], dict: &Dictionary, support: &[usize]) -> Result<(Vec<f64>, Vec<f64>)> {
    let chol = ridge_cholesky(dict.support_gram(support))?;
    let mut z: Vec<f64> = support.iter().map(|&k| dot(dict.atom(k), x)).collect();
    chol.solve_in_place(&mut z);
    let recon = dict.reconstruct(support, &z);
    let residual = x.iter().zip(&recon).map(|(a, b)| a - b).collect();
    Ok((z, residual))
}

/// Greedy pursuit core shared by [`omp`] and the group-constrained variant.
/// `candidates` receives the current support and returns the atoms allowed
/// for the next step (`None` means every atom).
pub(crate) fn greedy_pursuit<F>(
    x: &[f64],
    dict: &Dictionary,
    q: usize,
    mut candidates: F,
    mut trace: Option<&mut Vec<f64>>,
) -> Result<SparseCode>
where
    F: FnMut(&[usize]) -> Option<Vec<usize>>,
{
    if x.len() != dict.dim() {
        return Err(Error::DimensionMismatch(format!(
            "input of length {} for dictionary of dimension {}",
            x.len(),
            dict.dim()
        )));
    }
    check_finite(x, "input")?;
    check_budget(dict, q)?;

    let mut support: Vec<usize> = Vec::with_capacity(q);
    let mut values: Vec<f64> = Vec::new();
    let mut residual = x.to_vec();
    let mut res_sq = linalg::norm_sq(&residual);
    if let Some(t) = trace.as_deref_mut() {
        t.push(res_sq.sqrt());
    }

    while support.len() < q && res_sq.sqrt() >= RESIDUAL_FLOOR {
        let allowed = candidates(&support);
        let mut best: Option<(usize, f64)> = None;
        let mut consider = |k: usize| {
            if support.contains(&k) {
                return;
            }
            let c = dot(dict.atom(k), &residual).abs();
            match best {
                Some((_, b)) if c <= b => {}
                _ => best = Some((k, c)),
            }
        };
        match &allowed {
            None => (0..dict.n_atoms()).for_each(&mut consider),
            Some(list) => list.iter().copied().for_each(&mut consider),
        }
        let Some((k, score)) = best else { break };
        if score == 0.0 {
            break;
        }
        support.push(k);
        let (z, r) = solve_single(x, dict, &support)?;
        values = z;
        residual = r;
        res_sq = linalg::norm_sq(&residual);
        if let Some(t) = trace.as_deref_mut() {
            t.push(res_sq.sqrt());
        }
    }

    Ok(SparseCode {
        support,
        values,
        reconstruction_error: Some(res_sq),
    })
}

/// Orthogonal matching pursuit with budget `q`.
pub fn omp(x: &[f64], dict: &Dictionary, q: usize) -> Result<SparseCode> {
    greedy_pursuit(x, dict, q, |_| None, None)
}

/// [`omp`] that also returns the residual norm after every iteration
/// (entry 0 is `‖x‖`).
pub fn omp_traced(x: &[f64], dict: &Dictionary, q: usize) -> Result<(SparseCode, Vec<f64>)> {
    let mut trace = Vec::with_capacity(q + 1);
    let code = greedy_pursuit(x, dict, q, |_| None, Some(&mut trace))?;
    Ok((code, trace))
}

#[derive(Debug, Clone)]
pub struct SompResult {
    pub support: Vec<usize>,
    /// `|Ω| × N` coefficient matrix.
    pub coefficients: Array2<f64>,
    /// Frobenius norm of the final residual.
    pub residual_norm: f64,
    /// Residual Frobenius norm after every iteration (entry 0 is `‖X‖_F`).
    pub residual_trace: Vec<f64>,
}

/// Simultaneous OMP: one shared support for all columns of `x`, each step
/// adding `argmax_i Σ_s |W_iᵀ R_s|`.
pub fn somp(x: ArrayView2<f64>, dict: &Dictionary, q: usize) -> Result<SompResult> {
    let (d, n) = x.dim();
    if n == 0 {
        return Err(invalid("somp needs at least one column"));
    }
    if d != dict.dim() {
        return Err(Error::DimensionMismatch(format!(
            "data of dimension {d} for dictionary of dimension {}",
            dict.dim()
        )));
    }
    check_budget(dict, q)?;
    let cols = columns_of(x);
    for j in 0..n {
        check_finite(cols.row(j).as_slice().unwrap(), "data")?;
    }

    let mut state = PursuitState {
        residual: cols.to_owned(),
        active: Vec::with_capacity(q),
        iteration: 0,
    };
    let mut coefficients = Array2::<f64>::zeros((0, n));
    let mut res_sq: f64 = state.residual.iter().map(|v| v * v).sum();
    let mut residual_trace = vec![res_sq.sqrt()];

    while state.active.len() < q && res_sq.sqrt() >= RESIDUAL_FLOOR {
        let mut best: Option<(usize, f64)> = None;
        for k in 0..dict.n_atoms() {
            if state.active.contains(&k) {
                continue;
            }
            let atom = dict.atom(k);
            let score: f64 = state
                .residual
                .rows()
                .into_iter()
                .map(|r| dot(atom, r.as_slice().unwrap()).abs())
                .sum();
            match best {
                Some((_, b)) if score <= b => {}
                _ => best = Some((k, score)),
            }
        }
        let Some((k, score)) = best else { break };
        if score == 0.0 {
            break;
        }
        state.active.push(k);
        state.iteration += 1;
        coefficients = solve_on_support(x, dict, &state.active)?;
        for j in 0..n {
            let xj = cols.row(j);
            let zj: Vec<f64> = coefficients.column(j).to_vec();
            let recon = dict.reconstruct(&state.active, &zj);
            let mut r = state.residual.row_mut(j);
            for i in 0..d {
                r[i] = xj[i] - recon[i];
            }
        }
        res_sq = state.residual.iter().map(|v| v * v).sum();
        residual_trace.push(res_sq.sqrt());
    }

    Ok(SompResult {
        support: state.active,
        coefficients,
        residual_norm: res_sq.sqrt(),
        residual_trace,
    })
}

/// `(W_Ωᵀ W_Ω + εI)⁻¹ W_Ωᵀ X`, returned as an `|Ω| × N` matrix.
pub fn solve_on_support(
    x: ArrayView2<f64>,
    dict: &Dictionary,
    support: &[usize],
) -> Result<Array2<f64>> {
    let (d, n) = x.dim();
    if support.is_empty() {
        return Err(invalid("support must be nonempty"));
    }
    if support.len() > d {
        return Err(invalid(format!(
            "support of size {} exceeds dimension {d}",
            support.len()
        )));
    }
    if d != dict.dim() {
        return Err(Error::DimensionMismatch(format!(
            "data of dimension {d} for dictionary of dimension {}",
            dict.dim()
        )));
    }
    dict.check_support(support)?;
    let chol = ridge_cholesky(dict.support_gram(support))?;
    let cols = columns_of(x);
    let m = support.len();
    let mut out = Array2::<f64>::zeros((m, n));
    let mut rhs = vec![0.0; m];
    for j in 0..n {
        let xj = cols.row(j);
        let xj = xj.as_slice().unwrap();
        for (r, &k) in rhs.iter_mut().zip(support) {
            *r = dot(dict.atom(k), xj);
        }
        chol.solve_in_place(&mut rhs);
        for i in 0..m {
            out[[i, j]] = rhs[i];
        }
    }
    Ok(out)
}

/// Cached `(W_Ωᵀ W_Ω + εI)⁻¹ W_Ωᵀ` for one support.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportProjector {
    pub support: Vec<usize>,
    /// `|Ω| × d` row-major pseudoinverse.
    pub pinv: Array2<f64>,
}

impl SupportProjector {
    pub fn new(dict: &Dictionary, support: &[usize]) -> Result<Self> {
        let d = dict.dim();
        if support.len() > d {
            return Err(invalid(format!(
                "support of size {} exceeds dimension {d}",
                support.len()
            )));
        }
        dict.check_support(support)?;
        let m = support.len();
        if m == 0 {
            return Ok(Self {
                support: Vec::new(),
                pinv: Array2::zeros((0, d)),
            });
        }
        let chol: Cholesky = ridge_cholesky(dict.support_gram(support))?;
        let inv = chol.inverse();
        let mut pinv = Array2::<f64>::zeros((m, d));
        for i in 0..m {
            for (jj, &k) in support.iter().enumerate() {
                let c = inv[[i, jj]];
                let atom = dict.atom(k);
                for t in 0..d {
                    pinv[[i, t]] += c * atom[t];
                }
            }
        }
        Ok(Self {
            support: support.to_vec(),
            pinv,
        })
    }

    pub fn coefficients(&self, x: &[f64]) -> Vec<f64> {
        self.pinv
            .rows()
            .into_iter()
            .map(|r| dot(r.as_slice().unwrap(), x))
            .collect()
    }

    /// Coefficients and `‖P x − x‖²`.
    pub fn project(&self, dict: &Dictionary, x: &[f64]) -> (Vec<f64>, f64) {
        let z = self.coefficients(x);
        let recon = dict.reconstruct(&self.support, &z);
        let err = x.iter().zip(&recon).map(|(a, b)| (a - b) * (a - b)).sum();
        (z, err)
    }
}

/// `Σ_j ‖W z_j − x_j‖²`.
pub fn energy(x: ArrayView2<f64>, dict: &Dictionary, codes: &[SparseCode]) -> f64 {
    let cols = columns_of(x);
    let mut total = 0.0;
    for (j, code) in codes.iter().enumerate() {
        let xj = cols.row(j);
        let recon = dict.reconstruct(&code.support, &code.values);
        total += xj
            .iter()
            .zip(&recon)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
    }
    total
}

/// Result of a dictionary update: the new atoms plus the codes rescaled so
/// that `W·Z` is unchanged by column renormalization.
#[derive(Debug, Clone)]
pub struct DictionaryUpdateResult {
    pub dict: Dictionary,
    pub codes: Vec<SparseCode>,
}

fn check_codes(x: ArrayView2<f64>, dict: &Dictionary, codes: &[SparseCode]) -> Result<()> {
    let (d, n) = x.dim();
    if d != dict.dim() {
        return Err(Error::DimensionMismatch(format!(
            "data of dimension {d} for dictionary of dimension {}",
            dict.dim()
        )));
    }
    if codes.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} codes for {n} data columns",
            codes.len()
        )));
    }
    for c in codes {
        if c.support.len() != c.values.len() {
            return Err(invalid("code support and values differ in length"));
        }
        dict.check_support(&c.support)?;
    }
    Ok(())
}

fn used_atoms(dict: &Dictionary, codes: &[SparseCode]) -> Vec<Option<usize>> {
    let mut slot = vec![None; dict.n_atoms()];
    let mut next = 0;
    for c in codes {
        for (&k, &v) in c.support.iter().zip(&c.values) {
            if v != 0.0 && slot[k].is_none() {
                slot[k] = Some(next);
                next += 1;
            }
        }
    }
    slot
}

/// Renormalizes atoms in `raw` (unnormalized new columns for the listed
/// atoms) and rescales the matching code rows.
fn renormalize(
    mut dict: Dictionary,
    mut codes: Vec<SparseCode>,
    raw: Vec<(usize, Vec<f64>)>,
) -> Result<DictionaryUpdateResult> {
    let mut scale = vec![1.0; dict.n_atoms()];
    for (k, col) in raw {
        let n = linalg::norm_sq(&col).sqrt();
        if n > 1e-300 && n.is_finite() {
            dict.set_atom(k, &col)?;
            scale[k] = n;
        } else {
            // the least-squares column vanished: W·Z is preserved by keeping
            // the old atom and dropping its coefficients
            scale[k] = 0.0;
        }
    }
    for c in &mut codes {
        for (&k, v) in c.support.iter().zip(c.values.iter_mut()) {
            *v *= scale[k];
        }
        c.reconstruction_error = None;
    }
    Ok(DictionaryUpdateResult { dict, codes })
}

/// Least-squares dictionary update with the codes fixed:
/// `W_U = X Z_Uᵀ (Z_U Z_Uᵀ + εI)⁻¹` over used atoms `U`; unused atoms are
/// left unchanged.
pub fn dictionary_update(
    x: ArrayView2<f64>,
    codes: &[SparseCode],
    dict: &Dictionary,
) -> Result<DictionaryUpdateResult> {
    check_codes(x, dict, codes)?;
    let raw = least_squares_columns(x, codes, dict)?;
    renormalize(dict.clone(), codes.to_vec(), raw)
}

/// Unnormalized least-squares atoms for every used atom.
pub fn least_squares_columns(
    x: ArrayView2<f64>,
    codes: &[SparseCode],
    dict: &Dictionary,
) -> Result<Vec<(usize, Vec<f64>)>> {
    let d = dict.dim();
    let slot = used_atoms(dict, codes);
    let m = slot.iter().flatten().count();
    if m == 0 {
        return Ok(Vec::new());
    }
    let cols = columns_of(x);
    let mut zzt = Array2::<f64>::zeros((m, m));
    // X Z_Uᵀ stored transposed (m × d) so each row is one atom's target
    let mut xzt = Array2::<f64>::zeros((m, d));
    for (j, c) in codes.iter().enumerate() {
        let xj = cols.row(j);
        for (a, (&ka, &va)) in c.support.iter().zip(&c.values).enumerate() {
            let Some(ia) = slot[ka] else { continue };
            if va == 0.0 {
                continue;
            }
            for (&kb, &vb) in c.support[..=a].iter().zip(&c.values[..=a]) {
                let Some(ib) = slot[kb] else { continue };
                zzt[[ia, ib]] += va * vb;
                if ia != ib {
                    zzt[[ib, ia]] += va * vb;
                }
            }
            let mut row = xzt.row_mut(ia);
            for t in 0..d {
                row[t] += va * xj[t];
            }
        }
    }
    let chol = ridge_cholesky(zzt)?;
    let sol = chol.solve_matrix(&xzt);
    let mut out = Vec::with_capacity(m);
    for (k, s) in slot.iter().enumerate() {
        if let Some(i) = s {
            out.push((k, sol.row(*i).to_vec()));
        }
    }
    Ok(out)
}

/// K-SVD sweep: each used atom and its coefficient row are replaced by the
/// best rank-one fit to the residual restricted to the columns using it.
/// The rank-one fit is refined by alternating least squares started from
/// the current atom, so every sweep step is non-increasing in energy.
pub fn ksvd_update(
    x: ArrayView2<f64>,
    codes: &[SparseCode],
    dict: &Dictionary,
) -> Result<DictionaryUpdateResult> {
    const SWEEPS: usize = 30;
    check_codes(x, dict, codes)?;
    let d = dict.dim();
    let cols = columns_of(x);
    let mut dict = dict.clone();
    let mut codes = codes.to_vec();
    let mut users: Vec<Vec<(usize, usize)>> = vec![Vec::new(); dict.n_atoms()];
    for (j, c) in codes.iter().enumerate() {
        for (pos, (&k, &v)) in c.support.iter().zip(&c.values).enumerate() {
            if v != 0.0 {
                users[k].push((j, pos));
            }
        }
    }
    let mut residuals: Vec<Vec<f64>> = (0..codes.len())
        .map(|j| {
            let recon = dict.reconstruct(&codes[j].support, &codes[j].values);
            cols.row(j).iter().zip(&recon).map(|(a, b)| a - b).collect()
        })
        .collect();

    for k in 0..dict.n_atoms() {
        let list = &users[k];
        if list.is_empty() {
            continue;
        }
        let old = dict.atom(k).to_vec();
        // E_k columns: residual with atom k's contribution added back
        let e: Vec<Vec<f64>> = list
            .iter()
            .map(|&(j, pos)| {
                let z = codes[j].values[pos];
                residuals[j]
                    .iter()
                    .zip(&old)
                    .map(|(r, a)| r + z * a)
                    .collect()
            })
            .collect();
        let mut u = old.clone();
        let mut v: Vec<f64> = e.iter().map(|col| dot(col, &u)).collect();
        for _ in 0..SWEEPS {
            let mut nu = vec![0.0; d];
            for (col, &vj) in e.iter().zip(&v) {
                for t in 0..d {
                    nu[t] += vj * col[t];
                }
            }
            let n = linalg::norm_sq(&nu).sqrt();
            if !(n > 0.0) || !n.is_finite() {
                break;
            }
            nu.iter_mut().for_each(|t| *t /= n);
            let nv: Vec<f64> = e.iter().map(|col| dot(col, &nu)).collect();
            let delta: f64 = nu.iter().zip(&u).map(|(a, b)| (a - b) * (a - b)).sum();
            u = nu;
            v = nv;
            if delta < 1e-24 {
                break;
            }
        }
        dict.set_atom(k, &u)?;
        let u = dict.atom(k).to_vec();
        let v: Vec<f64> = e.iter().map(|col| dot(col, &u)).collect();
        for ((&(j, pos), col), &vj) in list.iter().zip(&e).zip(&v) {
            codes[j].values[pos] = vj;
            residuals[j] = col.iter().zip(&u).map(|(c, a)| c - vj * a).collect();
        }
    }
    for c in &mut codes {
        c.reconstruction_error = None;
    }
    Ok(DictionaryUpdateResult { dict, codes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn identity2() -> Dictionary {
        Dictionary::from_matrix(array![[1.0, 0.0], [0.0, 1.0]].view()).unwrap()
    }

    #[test]
    fn omp_recovers_orthonormal_atom() {
        let code = omp(&[1.0, 0.0], &identity2(), 1).unwrap();
        assert_eq!(code.support, vec![0]);
        assert!((code.values[0] - 1.0).abs() < 1e-9);
        assert!(code.reconstruction_error.unwrap() < 1e-18);
    }

    #[test]
    fn omp_zero_input_is_empty() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let dict = Dictionary::random(4, 6, &mut rng).unwrap();
        let code = omp(&[0.0; 4], &dict, 3).unwrap();
        assert!(code.is_empty());
        assert_eq!(code.reconstruction_error, Some(0.0));
    }

    #[test]
    fn omp_rejects_oversized_budget_and_nan() {
        let dict = identity2();
        assert!(omp(&[1.0, 0.0], &dict, 3).is_err());
        assert!(omp(&[f64::NAN, 0.0], &dict, 1).is_err());
        assert!(omp(&[1.0], &dict, 1).is_err());
    }

    #[test]
    fn omp_ties_pick_smallest_index() {
        let code = omp(&[1.0, 1.0], &identity2(), 1).unwrap();
        assert_eq!(code.support, vec![0]);
    }

    #[test]
    fn somp_recovers_single_atom() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let dict = Dictionary::random(5, 7, &mut rng).unwrap();
        let x = Array2::from_shape_vec((5, 1), dict.atom(3).to_vec()).unwrap();
        let res = somp(x.view(), &dict, 1).unwrap();
        assert_eq!(res.support, vec![3]);
        assert!((res.coefficients[[0, 0]] - 1.0).abs() < 1e-9);
        assert!(res.residual_norm < 1e-9);
    }

    #[test]
    fn somp_zero_matrix() {
        let dict = identity2();
        let res = somp(Array2::zeros((2, 3)).view(), &dict, 2).unwrap();
        assert!(res.support.is_empty());
        assert_eq!(res.coefficients.len(), 0);
    }

    #[test]
    fn solve_on_support_rejects_bad_supports() {
        let dict = identity2();
        let x = array![[1.0], [2.0]];
        assert!(solve_on_support(x.view(), &dict, &[]).is_err());
        assert!(solve_on_support(x.view(), &dict, &[0, 0]).is_err());
        assert!(solve_on_support(x.view(), &dict, &[5]).is_err());
    }

    #[test]
    fn dictionary_update_rank_one_is_normalized_mean() {
        let x = array![[1.0, 3.0, 2.0], [2.0, 0.0, 1.0]];
        let dict = Dictionary::from_matrix(array![[0.0], [1.0]].view()).unwrap();
        let codes: Vec<SparseCode> = (0..3)
            .map(|_| SparseCode {
                support: vec![0],
                values: vec![1.0],
                reconstruction_error: None,
            })
            .collect();
        let out = dictionary_update(x.view(), &codes, &dict).unwrap();
        let mean = [2.0, 1.0];
        let n = (5.0f64).sqrt();
        assert!((out.dict.atom(0)[0] - mean[0] / n).abs() < 1e-9);
        assert!((out.dict.atom(0)[1] - mean[1] / n).abs() < 1e-9);
        assert!((out.codes[0].values[0] - n).abs() < 1e-8);
    }

    #[test]
    fn dictionary_update_keeps_unused_atoms() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let dict = Dictionary::random(3, 4, &mut rng).unwrap();
        let x = array![[1.0, 0.5], [0.0, 1.0], [2.0, 0.3]];
        let codes = vec![
            SparseCode {
                support: vec![1],
                values: vec![0.7],
                reconstruction_error: None,
            },
            SparseCode {
                support: vec![1, 2],
                values: vec![0.2, 0.0],
                reconstruction_error: None,
            },
        ];
        let out = dictionary_update(x.view(), &codes, &dict).unwrap();
        assert_eq!(out.dict.atom(0), dict.atom(0));
        assert_eq!(out.dict.atom(2), dict.atom(2));
        assert_eq!(out.dict.atom(3), dict.atom(3));
        assert_ne!(out.dict.atom(1), dict.atom(1));
    }
}
