//! Structured sparse coding with a given list of allowed active sets.

use ndarray::ArrayView2;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::pursuit::{
    self, columns_of, dictionary_update, energy, greedy_pursuit, Dictionary, SparseCode,
    SupportProjector,
};

/// `L` possibly overlapping index sets over the atoms, with an inverted
/// atom → groups index kept in sync.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupTable {
    groups: Vec<Vec<usize>>,
    n_atoms: usize,
    membership: Vec<Vec<usize>>,
}

impl GroupTable {
    pub fn new(groups: Vec<Vec<usize>>, n_atoms: usize) -> Result<Self> {
        if groups.is_empty() {
            return Err(invalid("group table needs at least one group"));
        }
        for (g, set) in groups.iter().enumerate() {
            for (i, &k) in set.iter().enumerate() {
                if k >= n_atoms {
                    return Err(invalid(format!(
                        "group {g} references atom {k} but K={n_atoms}"
                    )));
                }
                if set[..i].contains(&k) {
                    return Err(invalid(format!("group {g} repeats atom {k}")));
                }
            }
        }
        let mut table = Self {
            groups,
            n_atoms,
            membership: Vec::new(),
        };
        table.reindex();
        Ok(table)
    }

    fn reindex(&mut self) {
        let mut membership = vec![Vec::new(); self.n_atoms];
        for (g, set) in self.groups.iter().enumerate() {
            for &k in set {
                membership[k].push(g);
            }
        }
        self.membership = membership;
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    pub fn group(&self, g: usize) -> &[usize] {
        &self.groups[g]
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn max_group_size(&self) -> usize {
        self.groups.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn set_group(&mut self, g: usize, atoms: Vec<usize>) -> Result<()> {
        for (i, &k) in atoms.iter().enumerate() {
            if k >= self.n_atoms || atoms[..i].contains(&k) {
                return Err(invalid(format!("invalid atom {k} for group {g}")));
            }
        }
        self.groups[g] = atoms;
        self.reindex();
        Ok(())
    }

    /// Groups that contain atom `k`.
    pub fn groups_with_atom(&self, k: usize) -> &[usize] {
        &self.membership[k]
    }

    /// Number of groups containing each atom.
    pub fn popularity(&self) -> Vec<usize> {
        self.membership.iter().map(Vec::len).collect()
    }

    /// `⋃ { G : Ω ⊆ G }`, sorted ascending.
    pub fn union_containing(&self, omega: &[usize]) -> Vec<usize> {
        let mut mark = vec![false; self.n_atoms];
        let visit = |g: usize, mark: &mut [bool]| {
            for &k in &self.groups[g] {
                mark[k] = true;
            }
        };
        match omega.split_first() {
            None => (0..self.groups.len()).for_each(|g| visit(g, &mut mark)),
            Some((&first, rest)) => {
                for &g in &self.membership[first] {
                    if rest.iter().all(|k| self.groups[g].contains(k)) {
                        visit(g, &mut mark);
                    }
                }
            }
        }
        (0..self.n_atoms).filter(|&k| mark[k]).collect()
    }
}

/// Column → group map with the projection error of each column.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub group_of: Vec<usize>,
    pub projection_error: Vec<f64>,
}

impl Assignment {
    pub fn members(&self, n_groups: usize) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); n_groups];
        for (j, &g) in self.group_of.iter().enumerate() {
            out[g].push(j);
        }
        out
    }

    pub fn total_error(&self) -> f64 {
        self.projection_error.iter().sum()
    }
}

fn check_table(dict: &Dictionary, groups: &GroupTable) -> Result<()> {
    if groups.n_atoms() != dict.n_atoms() {
        return Err(Error::DimensionMismatch(format!(
            "group table over {} atoms for dictionary with {}",
            groups.n_atoms(),
            dict.n_atoms()
        )));
    }
    Ok(())
}

pub(crate) fn projectors(dict: &Dictionary, groups: &GroupTable) -> Result<Vec<SupportProjector>> {
    groups
        .groups()
        .iter()
        .map(|g| SupportProjector::new(dict, g))
        .collect()
}

/// Index of the smallest value; ties go to the smallest index.
fn argmin(errors: impl Iterator<Item = f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, e) in errors.enumerate() {
        if e < best.1 {
            best = (i, e);
        }
    }
    best
}

/// Exact assignment: every column goes to the group whose span it projects
/// onto with the least error.
pub fn assign_groups(
    x: ArrayView2<f64>,
    dict: &Dictionary,
    groups: &GroupTable,
) -> Result<Assignment> {
    check_table(dict, groups)?;
    if x.nrows() != dict.dim() {
        return Err(Error::DimensionMismatch(format!(
            "data of dimension {} for dictionary of dimension {}",
            x.nrows(),
            dict.dim()
        )));
    }
    let proj = projectors(dict, groups)?;
    let cols = columns_of(x);
    let n = x.ncols();
    let picked: Vec<(usize, f64)> = (0..n)
        .into_par_iter()
        .map(|j| {
            let xj = cols.row(j);
            let xj = xj.as_slice().unwrap();
            argmin(proj.iter().map(|p| p.project(dict, xj).1))
        })
        .collect();
    Ok(Assignment {
        group_of: picked.iter().map(|p| p.0).collect(),
        projection_error: picked.iter().map(|p| p.1).collect(),
    })
}

/// Assignment where all columns sharing a bucket must choose one group: the
/// group minimizing the summed projection error of the bucket.
pub fn assign_buckets(
    x: ArrayView2<f64>,
    dict: &Dictionary,
    groups: &GroupTable,
    bucket_of: &[usize],
    n_buckets: usize,
) -> Result<(Assignment, Vec<usize>)> {
    check_table(dict, groups)?;
    let n = x.ncols();
    if bucket_of.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "bucket map of length {} for {n} columns",
            bucket_of.len()
        )));
    }
    if let Some(&b) = bucket_of.iter().find(|&&b| b >= n_buckets) {
        return Err(invalid(format!("bucket index {b} out of range")));
    }
    let proj = projectors(dict, groups)?;
    let cols = columns_of(x);
    let mut members = vec![Vec::new(); n_buckets];
    for (j, &b) in bucket_of.iter().enumerate() {
        members[b].push(j);
    }
    // per bucket: per-group error of every member, then pick the best group
    let per_bucket: Vec<(usize, Vec<f64>)> = members
        .par_iter()
        .map(|list| {
            if list.is_empty() {
                return (0, Vec::new());
            }
            let errs: Vec<Vec<f64>> = list
                .iter()
                .map(|&j| {
                    let xj = cols.row(j);
                    let xj = xj.as_slice().unwrap();
                    proj.iter().map(|p| p.project(dict, xj).1).collect()
                })
                .collect();
            let (g, _) = argmin((0..proj.len()).map(|g| errs.iter().map(|e| e[g]).sum()));
            (g, errs.iter().map(|e| e[g]).collect())
        })
        .collect();
    let mut group_of = vec![0; n];
    let mut projection_error = vec![0.0; n];
    let mut bucket_group = vec![0; n_buckets];
    for (b, (g, errs)) in per_bucket.into_iter().enumerate() {
        bucket_group[b] = g;
        for (&j, e) in members[b].iter().zip(errs) {
            group_of[j] = g;
            projection_error[j] = e;
        }
    }
    Ok((
        Assignment {
            group_of,
            projection_error,
        },
        bucket_group,
    ))
}

/// OMP where the next atom must come from the union of all groups that
/// contain the current support. Forfeits the energy guarantee of the exact
/// assignment path.
pub fn greedy_group_omp(
    x: &[f64],
    dict: &Dictionary,
    groups: &GroupTable,
    q: usize,
) -> Result<SparseCode> {
    check_table(dict, groups)?;
    if groups.max_group_size() == 0 {
        return Err(invalid("greedy group OMP needs a nonempty group"));
    }
    greedy_pursuit(
        x,
        dict,
        q,
        |omega| {
            let allowed = groups.union_containing(omega);
            debug_assert!(omega.is_empty() || !groups.groups_with_atom(omega[0]).is_empty());
            Some(allowed)
        },
        None,
    )
}

/// Codes for every column on its assigned group via the explicit support
/// solve.
pub fn codes_for_assignment(
    x: ArrayView2<f64>,
    dict: &Dictionary,
    groups: &GroupTable,
    assignment: &Assignment,
) -> Result<Vec<SparseCode>> {
    let n = x.ncols();
    let mut codes = vec![SparseCode::empty(); n];
    let cols = columns_of(x);
    for (g, list) in assignment.members(groups.len()).iter().enumerate() {
        let support = groups.group(g);
        if list.is_empty() || support.is_empty() {
            continue;
        }
        let sub = gather(cols.view(), list);
        let z = pursuit::solve_on_support(sub.view(), dict, support)?;
        for (c, &j) in list.iter().enumerate() {
            codes[j] = SparseCode {
                support: support.to_vec(),
                values: z.column(c).to_vec(),
                reconstruction_error: None,
            };
        }
    }
    Ok(codes)
}

/// `d × |list|` matrix of the listed columns (`cols` holds columns as rows).
pub(crate) fn gather(cols: ArrayView2<f64>, list: &[usize]) -> ndarray::Array2<f64> {
    let d = cols.ncols();
    let mut out = ndarray::Array2::<f64>::zeros((d, list.len()));
    for (c, &j) in list.iter().enumerate() {
        out.column_mut(c).assign(&cols.row(j));
    }
    out
}

#[derive(Debug, Clone)]
pub struct LloydResult {
    pub dict: Dictionary,
    pub assignment: Assignment,
    pub codes: Vec<SparseCode>,
    /// `Σ ‖W z − x‖²` after each iteration's dictionary update.
    pub energy_trace: Vec<f64>,
}

/// Lloyd-style alternation with fixed groups: exact assignment, support
/// solve, least-squares dictionary update.
pub fn lloyd_train(
    x: ArrayView2<f64>,
    dict: &Dictionary,
    groups: &GroupTable,
    iters: usize,
) -> Result<LloydResult> {
    if iters == 0 {
        return Err(invalid("lloyd_train needs iters >= 1"));
    }
    if x.ncols() == 0 {
        return Err(invalid("lloyd_train needs data"));
    }
    let mut dict = dict.clone();
    let mut trace = Vec::with_capacity(iters);
    let mut last = None;
    for _ in 0..iters {
        let assignment = assign_groups(x, &dict, groups)?;
        let codes = codes_for_assignment(x, &dict, groups, &assignment)?;
        let upd = dictionary_update(x, &codes, &dict)?;
        dict = upd.dict;
        trace.push(energy(x, &dict, &upd.codes));
        last = Some((assignment, upd.codes));
    }
    let (assignment, codes) = last.expect("iters >= 1");
    Ok(LloydResult {
        dict,
        assignment,
        codes,
        energy_trace: trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn union_containing_follows_inverted_index() {
        let t = GroupTable::new(vec![vec![0, 1], vec![1, 2], vec![3]], 5).unwrap();
        assert_eq!(t.union_containing(&[]), vec![0, 1, 2, 3]);
        assert_eq!(t.union_containing(&[1]), vec![0, 1, 2]);
        assert_eq!(t.union_containing(&[1, 2]), vec![1, 2]);
        assert_eq!(t.union_containing(&[0, 2]), Vec::<usize>::new());
        assert_eq!(t.popularity(), vec![1, 2, 1, 1, 0]);
    }

    #[test]
    fn table_rejects_bad_indices() {
        assert!(GroupTable::new(vec![], 3).is_err());
        assert!(GroupTable::new(vec![vec![3]], 3).is_err());
        assert!(GroupTable::new(vec![vec![1, 1]], 3).is_err());
    }

    #[test]
    fn exact_containment_and_ties() {
        let dict = Dictionary::from_matrix(array![[1.0, 0.0], [0.0, 1.0]].view()).unwrap();
        let groups = GroupTable::new(vec![vec![0], vec![1]], 2).unwrap();
        let x = array![[1.0, 0.0, 1.0], [0.0, 1.0, 1.0]];
        let a = assign_groups(x.view(), &dict, &groups).unwrap();
        assert_eq!(a.group_of, vec![0, 1, 0]);
    }

    #[test]
    fn greedy_group_omp_respects_singletons() {
        let dict = Dictionary::from_matrix(array![[1.0, 0.6], [0.0, 0.8]].view()).unwrap();
        let groups = GroupTable::new(vec![vec![0], vec![1]], 2).unwrap();
        let code = greedy_group_omp(&[0.5, 0.9], &dict, &groups, 2).unwrap();
        assert_eq!(code.support, vec![1]);
    }

    #[test]
    fn lloyd_rejects_zero_iterations() {
        let dict = Dictionary::from_matrix(array![[1.0], [0.0]].view()).unwrap();
        let groups = GroupTable::new(vec![vec![0]], 1).unwrap();
        assert!(lloyd_train(array![[1.0], [0.0]].view(), &dict, &groups, 0).is_err());
    }
}
