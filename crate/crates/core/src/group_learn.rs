//! Joint learning of the dictionary and the groups: every iteration assigns
//! data to groups, re-chooses each group's atoms by SOMP over its members,
//! then updates the dictionary. Dead groups and atoms are regenerated.

use ndarray::{Array1, Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::grouped::{self, assign_buckets, assign_groups, gather, Assignment, GroupTable};
use crate::linalg;
use crate::pursuit::{columns_of, energy, somp, Dictionary, SparseCode};
use crate::registry;

/// Power-iteration budget for dead-atom replacement.
pub const PCA_STEPS: usize = 50;
pub const PCA_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AssignmentMode {
    /// Exhaustive projection onto every group.
    #[default]
    Exact,
    /// Group-constrained greedy OMP; cheaper for large `L`, no energy
    /// guarantee.
    Greedy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupLearnConfig {
    pub n_atoms: usize,
    pub sparsity: usize,
    pub n_groups: usize,
    pub iters: usize,
    /// Name of a registered dictionary update rule.
    pub update_rule: String,
    pub seed: u64,
    pub assignment: AssignmentMode,
}

impl Default for GroupLearnConfig {
    fn default() -> Self {
        Self {
            n_atoms: 64,
            sparsity: 5,
            n_groups: 128,
            iters: 10,
            update_rule: "least_squares".into(),
            seed: 0,
            assignment: AssignmentMode::Exact,
        }
    }
}

/// Hash buckets that force their members to share a group.
#[derive(Debug, Clone, PartialEq)]
pub struct Buckets {
    pub bucket_of: Vec<usize>,
    pub n_buckets: usize,
    /// Bucket `b` always uses group `b` (requires `L == n_buckets`).
    pub fixed_groups: bool,
}

impl Buckets {
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_buckets];
        for (j, &b) in self.bucket_of.iter().enumerate() {
            out[b].push(j);
        }
        out
    }
}

/// Mutable training state.
#[derive(Debug, Clone)]
pub struct LearnState {
    pub dict: Dictionary,
    pub groups: GroupTable,
    pub assignment: Assignment,
    /// Current codes, one per column; empty before the first SOMP step.
    pub codes: Vec<SparseCode>,
    /// Units that choose groups together: buckets, or single columns.
    pub units: Vec<Vec<usize>>,
    /// Group chosen by each unit.
    pub unit_group: Vec<usize>,
    /// Whether units are pinned to their own group index.
    pub fixed_units: bool,
}

#[derive(Debug, Clone)]
pub struct GroupLearnResult {
    pub dict: Dictionary,
    pub groups: GroupTable,
    pub assignment: Assignment,
    pub codes: Vec<SparseCode>,
    /// Energy after each iteration's dictionary update.
    pub energy_trace: Vec<f64>,
    /// Group chosen by each bucket when buckets were given.
    pub bucket_group: Option<Vec<usize>>,
}

fn validate(x: ArrayView2<f64>, cfg: &GroupLearnConfig, buckets: Option<&Buckets>) -> Result<()> {
    let (d, n) = x.dim();
    if n == 0 || d == 0 {
        return Err(invalid("training needs nonempty data"));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(invalid("training data contains non-finite entries"));
    }
    if cfg.sparsity == 0 || cfg.sparsity > d.min(cfg.n_atoms) {
        return Err(invalid(format!(
            "sparsity {} must be in 1..=min(d={d}, K={})",
            cfg.sparsity, cfg.n_atoms
        )));
    }
    if cfg.n_groups == 0 {
        return Err(invalid("need at least one group"));
    }
    if cfg.iters == 0 {
        return Err(invalid("need at least one iteration"));
    }
    registry::update_rule(&cfg.update_rule)?;
    if let Some(b) = buckets {
        if b.bucket_of.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "bucket map of length {} for {n} columns",
                b.bucket_of.len()
            )));
        }
        if b.bucket_of.iter().any(|&v| v >= b.n_buckets) {
            return Err(invalid("bucket index out of range"));
        }
        if b.fixed_groups && b.n_buckets != cfg.n_groups {
            return Err(invalid(format!(
                "fixed bucket groups need L == bucket count ({} != {})",
                cfg.n_groups, b.n_buckets
            )));
        }
        if b.fixed_groups && cfg.assignment == AssignmentMode::Greedy {
            return Err(invalid(
                "greedy assignment cannot be combined with fixed buckets",
            ));
        }
    }
    Ok(())
}

fn random_unit<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        if linalg::norm_sq(&v) > 0.0 {
            return v;
        }
    }
}

/// `K` distinct data columns chosen by farthest-point sampling (first one
/// at random), normalized. Falls back to random unit atoms when the data
/// has fewer than `K` distinct nonzero columns.
pub fn farthest_point_init(
    x: ArrayView2<f64>,
    n_atoms: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Dictionary> {
    let (d, n) = x.dim();
    let cols = columns_of(x);
    let nonzero: Vec<usize> = (0..n)
        .filter(|&j| cols.row(j).iter().any(|&v| v != 0.0))
        .collect();
    let mut atoms = Array2::<f64>::zeros((d, n_atoms));
    let mut filled = 0;
    if !nonzero.is_empty() {
        let first = nonzero[rng.random_range(0..nonzero.len())];
        let mut min_dist = vec![f64::INFINITY; n];
        let mut pick = first;
        while filled < n_atoms {
            atoms.column_mut(filled).assign(&cols.row(pick));
            filled += 1;
            let chosen = cols.row(pick).to_owned();
            let chosen = chosen.as_slice().unwrap();
            min_dist.par_iter_mut().enumerate().for_each(|(j, md)| {
                let xj = cols.row(j);
                let dist: f64 = xj.iter().zip(chosen).map(|(a, b)| (a - b) * (a - b)).sum();
                if dist < *md {
                    *md = dist;
                }
            });
            let mut best: Option<(usize, f64)> = None;
            for &j in &nonzero {
                if min_dist[j] > best.map_or(0.0, |b| b.1) {
                    best = Some((j, min_dist[j]));
                }
            }
            match best {
                Some((j, _)) => pick = j,
                None => break,
            }
        }
    }
    for k in filled..n_atoms {
        let v = random_unit(d, rng);
        atoms.column_mut(k).assign(&Array1::from(v));
    }
    Dictionary::from_matrix(atoms.view())
}

fn somp_on(
    cols: ArrayView2<f64>,
    members: &[usize],
    dict: &Dictionary,
    q: usize,
) -> Result<(Vec<usize>, Array2<f64>)> {
    let sub = gather(cols, members);
    let r = somp(sub.view(), dict, q)?;
    Ok((r.support, r.coefficients))
}

/// Group seeding by farthest insertion: the first group is the SOMP support
/// of a random unit, every further group that of the unit worst represented
/// by the groups chosen so far (ties to the smallest unit).
fn farthest_groups(
    cols: ArrayView2<f64>,
    units: &[Vec<usize>],
    live: &[usize],
    dict: &Dictionary,
    cfg: &GroupLearnConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec<usize>>> {
    let mut out = Vec::with_capacity(cfg.n_groups);
    if live.is_empty() {
        return Ok(vec![Vec::new(); cfg.n_groups]);
    }
    let mut worst = vec![f64::INFINITY; live.len()];
    let mut pick = live[rng.random_range(0..live.len())];
    while out.len() < cfg.n_groups {
        let (support, _) = somp_on(cols, &units[pick], dict, cfg.sparsity)?;
        if !support.is_empty() {
            let proj = crate::pursuit::SupportProjector::new(dict, &support)?;
            worst.par_iter_mut().enumerate().for_each(|(i, w)| {
                let e: f64 = units[live[i]]
                    .iter()
                    .map(|&j| proj.project(dict, cols.row(j).as_slice().unwrap()).1)
                    .sum();
                *w = w.min(e);
            });
        }
        out.push(support);
        let mut best = 0;
        for i in 1..live.len() {
            if worst[i] > worst[best] {
                best = i;
            }
        }
        pick = if worst[best] > 0.0 {
            live[best]
        } else {
            live[rng.random_range(0..live.len())]
        };
    }
    Ok(out)
}

impl LearnState {
    fn init(
        x: ArrayView2<f64>,
        cfg: &GroupLearnConfig,
        buckets: Option<&Buckets>,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let n = x.ncols();
        let dict = farthest_point_init(x, cfg.n_atoms, rng)?;
        let (units, fixed_units) = match buckets {
            Some(b) => (b.members(), b.fixed_groups),
            None => ((0..n).map(|j| vec![j]).collect(), false),
        };
        let cols = columns_of(x);
        let live: Vec<usize> = (0..units.len()).filter(|&u| !units[u].is_empty()).collect();
        let supports = if fixed_units {
            (0..cfg.n_groups)
                .into_par_iter()
                .map(|u| {
                    if units[u].is_empty() {
                        return Ok(Vec::new());
                    }
                    somp_on(cols.view(), &units[u], &dict, cfg.sparsity).map(|r| r.0)
                })
                .collect::<Result<Vec<_>>>()?
        } else {
            farthest_groups(cols.view(), &units, &live, &dict, cfg, rng)?
        };
        let groups = GroupTable::new(supports, cfg.n_atoms)?;
        let unit_group = if fixed_units {
            (0..units.len()).collect()
        } else {
            vec![0; units.len()]
        };
        Ok(Self {
            dict,
            groups,
            assignment: Assignment {
                group_of: vec![0; n],
                projection_error: vec![0.0; n],
            },
            codes: Vec::new(),
            units,
            unit_group,
            fixed_units,
        })
    }
}

fn assign_step(
    x: ArrayView2<f64>,
    state: &mut LearnState,
    cfg: &GroupLearnConfig,
    buckets: Option<&Buckets>,
) -> Result<()> {
    let n = x.ncols();
    if state.fixed_units {
        let proj = grouped::projectors(&state.dict, &state.groups)?;
        let cols = columns_of(x);
        let mut group_of = vec![0; n];
        let mut err = vec![0.0; n];
        for (u, members) in state.units.iter().enumerate() {
            for &j in members {
                group_of[j] = u;
                let xj = cols.row(j);
                err[j] = proj[u].project(&state.dict, xj.as_slice().unwrap()).1;
            }
        }
        state.assignment = Assignment {
            group_of,
            projection_error: err,
        };
        return Ok(());
    }
    match (buckets, cfg.assignment) {
        (Some(b), AssignmentMode::Exact) => {
            let (a, bg) = assign_buckets(x, &state.dict, &state.groups, &b.bucket_of, b.n_buckets)?;
            state.assignment = a;
            state.unit_group = bg;
        }
        (None, AssignmentMode::Exact) => {
            let a = assign_groups(x, &state.dict, &state.groups)?;
            state.unit_group = a.group_of.clone();
            state.assignment = a;
        }
        (_, AssignmentMode::Greedy) => {
            let a = greedy_assignment(x, &state.dict, &state.groups, cfg.sparsity, buckets)?;
            state.unit_group = match buckets {
                Some(b) => {
                    let mut bg = vec![0; b.n_buckets];
                    for (u, members) in state.units.iter().enumerate() {
                        if let Some(&j) = members.first() {
                            bg[u] = a.group_of[j];
                        }
                    }
                    bg
                }
                None => a.group_of.clone(),
            };
            state.assignment = a;
        }
    }
    Ok(())
}

/// Greedy assignment: each column is coded by group-constrained OMP and
/// mapped to the first group containing the resulting support. With buckets,
/// the bucket takes the group most of its members picked (ties to smallest).
fn greedy_assignment(
    x: ArrayView2<f64>,
    dict: &Dictionary,
    groups: &GroupTable,
    q: usize,
    buckets: Option<&Buckets>,
) -> Result<Assignment> {
    let cols = columns_of(x);
    let n = x.ncols();
    let picked: Vec<(usize, f64)> = (0..n)
        .into_par_iter()
        .map(|j| {
            let xj = cols.row(j);
            let code = grouped::greedy_group_omp(xj.as_slice().unwrap(), dict, groups, q)?;
            let g = (0..groups.len())
                .find(|&g| code.support.iter().all(|k| groups.group(g).contains(k)))
                .expect("greedy support lies inside a group");
            Ok((g, code.reconstruction_error.unwrap_or(0.0)))
        })
        .collect::<Result<_>>()?;
    let mut group_of: Vec<usize> = picked.iter().map(|p| p.0).collect();
    let mut err: Vec<f64> = picked.iter().map(|p| p.1).collect();
    if let Some(b) = buckets {
        let proj = grouped::projectors(dict, groups)?;
        for members in b.members() {
            if members.is_empty() {
                continue;
            }
            let mut votes = vec![0usize; groups.len()];
            for &j in &members {
                votes[group_of[j]] += 1;
            }
            let top = *votes.iter().max().unwrap();
            let g = votes.iter().position(|&v| v == top).unwrap();
            for &j in &members {
                group_of[j] = g;
                err[j] = proj[g].project(dict, cols.row(j).as_slice().unwrap()).1;
            }
        }
    }
    Ok(Assignment {
        group_of,
        projection_error: err,
    })
}

/// Rebuilds groups with no assigned data from the SOMP output of a random
/// unit (moving that unit to the rebuilt group when its current group keeps
/// other members), then replaces atoms used by no group with the leading
/// principal directions of the current residual.
pub fn regenerate_dead_groups(
    x: ArrayView2<f64>,
    state: &mut LearnState,
    q: usize,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let n_groups = state.groups.len();
    let cols = columns_of(x);
    let mut count = vec![0usize; n_groups];
    for &g in &state.assignment.group_of {
        count[g] += 1;
    }
    let live: Vec<usize> = (0..state.units.len())
        .filter(|&u| !state.units[u].is_empty())
        .collect();
    for g in 0..n_groups {
        if count[g] > 0 || live.is_empty() {
            continue;
        }
        let u = live[rng.random_range(0..live.len())];
        let (support, _) = somp_on(cols.view(), &state.units[u], &state.dict, q)?;
        if support.is_empty() {
            continue;
        }
        state.groups.set_group(g, support)?;
        if state.fixed_units {
            continue;
        }
        let old = state.unit_group[u];
        let size = state.units[u].len();
        if count[old] > size {
            count[old] -= size;
            count[g] += size;
            state.unit_group[u] = g;
            let proj = crate::pursuit::SupportProjector::new(&state.dict, state.groups.group(g))?;
            for &j in &state.units[u] {
                state.assignment.group_of[j] = g;
                state.assignment.projection_error[j] =
                    proj.project(&state.dict, cols.row(j).as_slice().unwrap()).1;
            }
        }
    }
    replace_dead_atoms(x, &mut state.dict, &state.groups, &state.codes, rng)
}

/// Every atom in no group is replaced by the next principal direction of the
/// residual `X − W Z` (power iteration on the residual covariance, deflated
/// after each replacement). All-zero residuals give random unit atoms.
pub fn replace_dead_atoms(
    x: ArrayView2<f64>,
    dict: &mut Dictionary,
    groups: &GroupTable,
    codes: &[SparseCode],
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let dead: Vec<usize> = groups
        .popularity()
        .iter()
        .enumerate()
        .filter(|(_, &p)| p == 0)
        .map(|(k, _)| k)
        .collect();
    if dead.is_empty() {
        return Ok(());
    }
    let mut cov = residual_covariance(x, dict, codes);
    let d = dict.dim();
    for k in dead {
        let trace: f64 = (0..d).map(|i| cov[[i, i]]).sum();
        let init = Array1::from(random_unit(d, rng));
        let dir = if trace > 1e-300 {
            linalg::top_eigenvector(cov.view(), init.view(), PCA_STEPS, PCA_TOL)
        } else {
            None
        };
        match dir {
            Some(u) => {
                let lambda = u.dot(&cov.dot(&u));
                for i in 0..d {
                    for j in 0..d {
                        cov[[i, j]] -= lambda * u[i] * u[j];
                    }
                }
                dict.set_atom(k, u.as_slice().unwrap())?;
            }
            None => dict.set_atom(k, init.as_slice().unwrap())?,
        }
    }
    Ok(())
}

/// `R Rᵀ` with `R = X − W Z` (`R = X` when no codes exist yet).
pub fn residual_covariance(
    x: ArrayView2<f64>,
    dict: &Dictionary,
    codes: &[SparseCode],
) -> Array2<f64> {
    let (d, n) = x.dim();
    let cols = columns_of(x);
    let mut r = Array2::<f64>::zeros((d, n));
    for j in 0..n {
        let xj = cols.row(j);
        let mut col = r.column_mut(j);
        match codes.get(j) {
            Some(c) => {
                let recon = dict.reconstruct(&c.support, &c.values);
                for i in 0..d {
                    col[i] = xj[i] - recon[i];
                }
            }
            None => col.assign(&xj),
        }
    }
    r.dot(&r.t())
}

/// SOMP for every group over its assigned columns. Groups without members,
/// or whose members are all zero, keep their atoms.
fn reselect_step(x: ArrayView2<f64>, state: &mut LearnState, q: usize) -> Result<()> {
    let n = x.ncols();
    let cols = columns_of(x);
    let members = state.assignment.members(state.groups.len());
    let picks: Vec<Option<(Vec<usize>, Array2<f64>)>> = members
        .par_iter()
        .map(|list| {
            if list.is_empty() {
                return Ok(None);
            }
            somp_on(cols.view(), list, &state.dict, q).map(Some)
        })
        .collect::<Result<_>>()?;
    let mut codes = vec![SparseCode::empty(); n];
    for (g, pick) in picks.into_iter().enumerate() {
        let Some((support, coef)) = pick else {
            continue;
        };
        if support.is_empty() {
            for &j in &members[g] {
                codes[j] = SparseCode::empty();
            }
            continue;
        }
        for (c, &j) in members[g].iter().enumerate() {
            codes[j] = SparseCode {
                support: support.clone(),
                values: coef.column(c).to_vec(),
                reconstruction_error: None,
            };
        }
        state.groups.set_group(g, support)?;
    }
    state.codes = codes;
    Ok(())
}

/// Learns the dictionary and groups jointly. With `buckets`, every bucket
/// chooses one group for all of its members.
pub fn train(
    x: ArrayView2<f64>,
    cfg: &GroupLearnConfig,
    buckets: Option<&Buckets>,
) -> Result<GroupLearnResult> {
    validate(x, cfg, buckets)?;
    let rule = registry::update_rule(&cfg.update_rule)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = LearnState::init(x, cfg, buckets, &mut rng)?;
    let mut trace = Vec::with_capacity(cfg.iters);
    for it in 0..cfg.iters {
        assign_step(x, &mut state, cfg, buckets)?;
        regenerate_dead_groups(x, &mut state, cfg.sparsity, &mut rng)?;
        reselect_step(x, &mut state, cfg.sparsity)?;
        let upd = rule.update(x, &state.codes, &state.dict)?;
        state.dict = upd.dict;
        state.codes = upd.codes;
        let e = energy(x, &state.dict, &state.codes);
        log::debug!("group learning iteration {it}: energy {e:.6e}");
        trace.push(e);
    }
    Ok(GroupLearnResult {
        dict: state.dict,
        groups: state.groups,
        assignment: state.assignment,
        codes: state.codes,
        energy_trace: trace,
        bucket_group: buckets.map(|_| state.unit_group),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn rejects_bad_configs() {
        let x = array![[1.0, 0.0], [0.0, 1.0]];
        let mut cfg = GroupLearnConfig {
            n_atoms: 2,
            sparsity: 3,
            n_groups: 1,
            iters: 1,
            ..Default::default()
        };
        assert!(train(x.view(), &cfg, None).is_err());
        cfg.sparsity = 1;
        cfg.update_rule = "nope".into();
        assert!(train(x.view(), &cfg, None).is_err());
        cfg.update_rule = "least_squares".into();
        assert!(train(Array2::<f64>::zeros((2, 0)).view(), &cfg, None).is_err());
        assert!(train(x.view(), &cfg, None).is_ok());
    }

    #[test]
    fn farthest_point_picks_distinct_columns() {
        let x = array![[1.0, 1.0, -1.0, 0.0], [0.0, 0.1, 0.0, 0.0]];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let dict = farthest_point_init(x.view(), 2, &mut rng).unwrap();
        let a0 = dict.atom(0).to_vec();
        let a1 = dict.atom(1).to_vec();
        assert!(linalg::dot(&a0, &a1) < 0.0);
    }

    #[test]
    fn no_dead_groups_leaves_state_unchanged() {
        let x = array![[1.0, 0.0, 2.0], [0.0, 1.0, 0.0]];
        let dict = Dictionary::from_matrix(array![[1.0, 0.0], [0.0, 1.0]].view()).unwrap();
        let groups = GroupTable::new(vec![vec![0], vec![1]], 2).unwrap();
        let mut state = LearnState {
            dict: dict.clone(),
            groups: groups.clone(),
            assignment: Assignment {
                group_of: vec![0, 1, 0],
                projection_error: vec![0.0; 3],
            },
            codes: Vec::new(),
            units: vec![vec![0], vec![1], vec![2]],
            unit_group: vec![0, 1, 0],
            fixed_units: false,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        regenerate_dead_groups(x.view(), &mut state, 1, &mut rng).unwrap();
        assert_eq!(state.dict, dict);
        assert_eq!(state.groups, groups);
        assert_eq!(state.unit_group, vec![0, 1, 0]);
    }
}
