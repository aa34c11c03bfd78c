//! Median-split 2-means tree used as a hash from input vectors to leaves,
//! training of a dictionary that respects it, and the fast encode path that
//! routes a vector to its leaf and applies the leaf's cached pseudoinverse.
//!
//! Routing runs in `f32`: split directions are stored rounded to `f32` and
//! the build computes projections with the exact routine [`HashTree::route`]
//! uses, so every training point routes to the leaf it was built into.

use ndarray::{Array2, ArrayView2};

use crate::error::{invalid, Error, Result};
use crate::group_learn::{self, Buckets, GroupLearnConfig};
use crate::grouped::GroupTable;
use crate::linalg::dot_f32;
use crate::pursuit::{columns_of, Dictionary, SparseCode, SupportProjector};

/// Multiply counter for the encode path (debug builds only).
#[cfg(debug_assertions)]
pub mod ops {
    use std::cell::Cell;

    thread_local! {
        static MULTIPLIES: Cell<u64> = const { Cell::new(0) };
    }

    pub(crate) fn add(n: usize) {
        MULTIPLIES.with(|c| c.set(c.get() + n as u64));
    }

    /// Returns the multiplies counted on this thread and resets the counter.
    pub fn take() -> u64 {
        MULTIPLIES.with(|c| c.replace(0))
    }
}

#[inline]
fn count_multiplies(_n: usize) {
    #[cfg(debug_assertions)]
    ops::add(_n);
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeConfig {
    /// Maximum depth `p`; the tree has at most `2^p` leaves.
    pub max_depth: usize,
    /// A cell whose points all lie within this distance of their mean
    /// becomes a leaf.
    pub stop_radius: f64,
    /// Lloyd iterations after farthest-insertion seeding (0 = seeding only).
    pub two_means_iters: usize,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self {
            max_depth: 8,
            stop_radius: 0.0,
            two_means_iters: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Split {
        /// Unit `c₁ − c₂` direction, rounded to `f32`.
        direction: Vec<f32>,
        threshold: f32,
        left: u32,
        right: u32,
    },
    Leaf {
        leaf: u32,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct HashTree {
    dim: usize,
    max_depth: usize,
    nodes: Vec<TreeNode>,
    leaf_depth: Vec<usize>,
}

struct Builder<'a> {
    points: Vec<Vec<f32>>,
    exact: &'a [Vec<f64>],
    cfg: &'a TreeConfig,
    nodes: Vec<TreeNode>,
    leaf_depth: Vec<usize>,
    leaf_of: Vec<usize>,
}

fn to_f32(x: &[f64]) -> Vec<f32> {
    x.iter().map(|&v| v as f32).collect()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn mean_of(points: &[Vec<f64>], idx: &[usize]) -> Vec<f64> {
    let d = points[idx[0]].len();
    let mut m = vec![0.0; d];
    for &i in idx {
        for (a, b) in m.iter_mut().zip(&points[i]) {
            *a += b;
        }
    }
    m.iter_mut().for_each(|v| *v /= idx.len() as f64);
    m
}

fn farthest_from(points: &[Vec<f64>], idx: &[usize], from: &[f64]) -> (usize, f64) {
    let mut best = (idx[0], -1.0);
    for &i in idx {
        let d = sq_dist(&points[i], from);
        if d > best.1 {
            best = (i, d);
        }
    }
    best
}

impl Builder<'_> {
    fn leaf(&mut self, idx: &[usize], depth: usize) -> u32 {
        let leaf = self.leaf_depth.len();
        self.leaf_depth.push(depth);
        for &i in idx {
            self.leaf_of[i] = leaf;
        }
        self.nodes.push(TreeNode::Leaf { leaf: leaf as u32 });
        (self.nodes.len() - 1) as u32
    }

    /// Farthest-insertion seeded 2-means; returns `c₁ − c₂`.
    fn two_means(&self, idx: &[usize]) -> Vec<f64> {
        let pts = self.exact;
        let mean = mean_of(pts, idx);
        let (a, _) = farthest_from(pts, idx, &mean);
        let (b, _) = farthest_from(pts, idx, &pts[a]);
        let mut c1 = pts[a].clone();
        let mut c2 = pts[b].clone();
        let mut side: Vec<bool> = Vec::new();
        for _ in 0..self.cfg.two_means_iters {
            let next: Vec<bool> = idx
                .iter()
                .map(|&i| sq_dist(&pts[i], &c1) <= sq_dist(&pts[i], &c2))
                .collect();
            if next == side {
                break;
            }
            let first: Vec<usize> = idx
                .iter()
                .zip(&next)
                .filter(|p| *p.1)
                .map(|p| *p.0)
                .collect();
            let second: Vec<usize> = idx
                .iter()
                .zip(&next)
                .filter(|p| !*p.1)
                .map(|p| *p.0)
                .collect();
            if first.is_empty() || second.is_empty() {
                break;
            }
            c1 = mean_of(pts, &first);
            c2 = mean_of(pts, &second);
            side = next;
        }
        c1.iter().zip(&c2).map(|(x, y)| x - y).collect()
    }

    fn build(&mut self, idx: Vec<usize>, depth: usize) -> u32 {
        if depth >= self.cfg.max_depth || idx.len() < 2 {
            return self.leaf(&idx, depth);
        }
        let mean = mean_of(self.exact, &idx);
        let radius = farthest_from(self.exact, &idx, &mean).1.sqrt();
        if radius <= self.cfg.stop_radius {
            return self.leaf(&idx, depth);
        }
        let dir = self.two_means(&idx);
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 0.0) {
            return self.leaf(&idx, depth);
        }
        let direction: Vec<f32> = dir.iter().map(|v| (v / norm) as f32).collect();

        let mut proj: Vec<(f32, usize)> = idx
            .iter()
            .map(|&i| (dot_f32(&direction, &self.points[i]), i))
            .collect();
        // idx is in canonical order, so a stable sort breaks ties by it
        proj.sort_by(|a, b| a.0.total_cmp(&b.0));
        let n = proj.len();
        let Some(split) = split_point(&proj, n.div_ceil(2)) else {
            return self.leaf(&idx, depth);
        };
        let lo = proj[split - 1].0;
        let hi = proj[split].0;
        let mut threshold = lo + (hi - lo) * 0.5;
        if !(threshold < hi) || threshold < lo {
            threshold = lo;
        }
        let left_idx: Vec<usize> = proj[..split].iter().map(|p| p.1).collect();
        let right_idx: Vec<usize> = proj[split..].iter().map(|p| p.1).collect();

        let slot = self.nodes.len();
        self.nodes.push(TreeNode::Leaf { leaf: u32::MAX });
        let left = self.build(left_idx, depth + 1);
        let right = self.build(right_idx, depth + 1);
        self.nodes[slot] = TreeNode::Split {
            direction,
            threshold,
            left,
            right,
        };
        slot as u32
    }
}

/// Position `s` (left takes `proj[..s]`) closest to `target` where the sorted
/// projections strictly increase; `None` when all projections are equal.
fn split_point(proj: &[(f32, usize)], target: usize) -> Option<usize> {
    let n = proj.len();
    let ok = |s: usize| s >= 1 && s < n && proj[s - 1].0 < proj[s].0;
    (0..n).find_map(|off| {
        if ok(target + off) {
            Some(target + off)
        } else if off <= target && ok(target - off) {
            Some(target - off)
        } else {
            None
        }
    })
}

impl HashTree {
    /// Builds the tree over the columns of `x` and returns it with each
    /// column's leaf.
    pub fn build(x: ArrayView2<f64>, cfg: &TreeConfig) -> Result<(Self, Vec<usize>)> {
        let (d, n) = x.dim();
        if d == 0 {
            return Err(invalid("tree needs d >= 1"));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(invalid("tree data contains non-finite entries"));
        }
        if cfg.stop_radius.is_nan() || cfg.stop_radius < 0.0 {
            return Err(invalid("stop radius must be >= 0"));
        }
        let cols = columns_of(x);
        let exact: Vec<Vec<f64>> = (0..n).map(|j| cols.row(j).to_vec()).collect();
        // canonical (lexicographic) column order makes the tree independent of
        // the order the data was presented in
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            exact[a]
                .iter()
                .zip(&exact[b])
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let mut b = Builder {
            points: exact.iter().map(|p| to_f32(p)).collect(),
            exact: &exact,
            cfg,
            nodes: Vec::new(),
            leaf_depth: Vec::new(),
            leaf_of: vec![0; n],
        };
        if n == 0 {
            b.leaf(&[], 0);
        } else {
            b.build(order, 0);
        }
        let tree = Self {
            dim: d,
            max_depth: cfg.max_depth,
            nodes: b.nodes,
            leaf_depth: b.leaf_depth,
        };
        Ok((tree, b.leaf_of))
    }

    /// Reassembles a tree from stored nodes, checking its shape.
    pub fn from_nodes(dim: usize, max_depth: usize, nodes: Vec<TreeNode>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::Format("tree has no nodes".into()));
        }
        let mut seen = vec![false; nodes.len()];
        let mut leaf_depth: Vec<Option<usize>> = Vec::new();
        let mut stack = vec![(0usize, 0usize)];
        while let Some((i, depth)) = stack.pop() {
            if i >= nodes.len() || seen[i] {
                return Err(Error::Format(format!("tree node {i} is invalid or shared")));
            }
            seen[i] = true;
            match &nodes[i] {
                TreeNode::Split {
                    direction,
                    threshold,
                    left,
                    right,
                } => {
                    if direction.len() != dim || !threshold.is_finite() {
                        return Err(Error::Format(format!("tree node {i} is malformed")));
                    }
                    stack.push((*left as usize, depth + 1));
                    stack.push((*right as usize, depth + 1));
                }
                TreeNode::Leaf { leaf } => {
                    let l = *leaf as usize;
                    if l >= nodes.len() {
                        return Err(Error::Format(format!("leaf id {l} out of range")));
                    }
                    if leaf_depth.len() <= l {
                        leaf_depth.resize(l + 1, None);
                    }
                    if leaf_depth[l].is_some() {
                        return Err(Error::Format(format!("leaf id {l} repeated")));
                    }
                    leaf_depth[l] = Some(depth);
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Format("tree has unreachable nodes".into()));
        }
        let leaf_depth: Option<Vec<usize>> = leaf_depth.into_iter().collect();
        let leaf_depth =
            leaf_depth.ok_or_else(|| Error::Format("leaf ids are not contiguous".into()))?;
        Ok(Self {
            dim,
            max_depth,
            nodes,
            leaf_depth,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn max_depth(&self) -> usize {
        self.max_depth
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn n_leaves(&self) -> usize {
        self.leaf_depth.len()
    }

    pub fn leaf_depth(&self, leaf: usize) -> usize {
        self.leaf_depth[leaf]
    }

    /// Depth of the deepest leaf.
    pub fn depth(&self) -> usize {
        self.leaf_depth.iter().copied().max().unwrap_or(0)
    }

    /// Leaf reached by an `f32` input; points on a hyperplane go left.
    #[inline]
    pub fn route_f32(&self, x: &[f32]) -> usize {
        let mut i = 0usize;
        loop {
            match &self.nodes[i] {
                TreeNode::Split {
                    direction,
                    threshold,
                    left,
                    right,
                } => {
                    count_multiplies(direction.len());
                    i = if dot_f32(direction, x) <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
                TreeNode::Leaf { leaf } => return *leaf as usize,
            }
        }
    }

    pub fn route(&self, x: &[f64]) -> Result<usize> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "input of length {} for tree of dimension {}",
                x.len(),
                self.dim
            )));
        }
        Ok(self.route_f32(&to_f32(x)))
    }
}

/// Active set and cached pseudoinverse for one group of leaves.
#[derive(Debug, Clone, PartialEq)]
pub struct LeafEntry {
    pub active_set: Vec<usize>,
    /// `|Ω| × d` matrix `(W_Ωᵀ W_Ω + εI)⁻¹ W_Ωᵀ`.
    pub decoder: Array2<f64>,
    decoder_f32: Vec<f32>,
}

impl LeafEntry {
    pub fn new(dict: &Dictionary, active_set: &[usize]) -> Result<Self> {
        let p = SupportProjector::new(dict, active_set)?;
        Ok(Self::from_decoder(p.support, p.pinv))
    }

    pub(crate) fn from_decoder(active_set: Vec<usize>, decoder: Array2<f64>) -> Self {
        let decoder_f32 = decoder.iter().map(|&v| v as f32).collect();
        Self {
            active_set,
            decoder,
            decoder_f32,
        }
    }

    #[inline]
    fn apply(&self, x: &[f32], out: &mut [f32]) {
        let d = x.len();
        for (i, o) in out.iter_mut().enumerate() {
            *o = dot_f32(&self.decoder_f32[i * d..(i + 1) * d], x);
        }
        count_multiplies(d * out.len());
    }
}

/// Which group each leaf uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LeafGroups {
    /// One group per leaf.
    #[default]
    Identity,
    /// Leaves choose among `L` shared groups (gluing leaves together).
    Learned,
}

/// Tree + dictionary + per-group lookup table. Immutable after training.
#[derive(Debug, Clone, PartialEq)]
pub struct HashedModel {
    pub tree: HashTree,
    pub dict: Dictionary,
    pub groups: GroupTable,
    /// Group used by each leaf.
    pub leaf_group: Vec<usize>,
    pub entries: Vec<LeafEntry>,
}

#[derive(Debug, Clone)]
pub struct HashedTraining {
    pub model: HashedModel,
    pub energy_trace: Vec<f64>,
}

impl HashedModel {
    /// Assembles a model and computes each group's decoder.
    pub fn new(
        tree: HashTree,
        dict: Dictionary,
        groups: GroupTable,
        leaf_group: Vec<usize>,
    ) -> Result<Self> {
        let entries = groups
            .groups()
            .iter()
            .map(|g| LeafEntry::new(&dict, g))
            .collect::<Result<Vec<_>>>()?;
        Self::from_parts(tree, dict, groups, leaf_group, entries)
    }

    pub(crate) fn from_parts(
        tree: HashTree,
        dict: Dictionary,
        groups: GroupTable,
        leaf_group: Vec<usize>,
        entries: Vec<LeafEntry>,
    ) -> Result<Self> {
        if tree.dim() != dict.dim() {
            return Err(Error::DimensionMismatch(format!(
                "tree dimension {} vs dictionary dimension {}",
                tree.dim(),
                dict.dim()
            )));
        }
        if leaf_group.len() != tree.n_leaves() {
            return Err(Error::DimensionMismatch(format!(
                "{} leaf groups for {} leaves",
                leaf_group.len(),
                tree.n_leaves()
            )));
        }
        if leaf_group.iter().any(|&g| g >= groups.len()) || entries.len() != groups.len() {
            return Err(invalid("leaf group table references a missing group"));
        }
        if groups.n_atoms() != dict.n_atoms() {
            return Err(invalid("group table and dictionary disagree on K"));
        }
        for (e, g) in entries.iter().zip(groups.groups()) {
            if e.active_set != *g || e.decoder.dim() != (g.len(), dict.dim()) {
                return Err(invalid("leaf entry does not match its group"));
            }
        }
        Ok(Self {
            tree,
            dict,
            groups,
            leaf_group,
            entries,
        })
    }

    pub fn leaf_entry(&self, leaf: usize) -> &LeafEntry {
        &self.entries[self.leaf_group[leaf]]
    }

    /// Allocation-free coding of an `f32` input; writes the coefficients into
    /// `values` (resized) and returns the active set.
    #[inline]
    pub fn encode_f32<'a>(&'a self, x: &[f32], values: &mut Vec<f32>) -> &'a [usize] {
        let entry = self.leaf_entry(self.tree.route_f32(x));
        values.resize(entry.active_set.len(), 0.0);
        entry.apply(x, values);
        &entry.active_set
    }

    pub fn encode(&self, x: &[f64]) -> Result<SparseCode> {
        if x.len() != self.dict.dim() {
            return Err(Error::DimensionMismatch(format!(
                "input of length {} for model of dimension {}",
                x.len(),
                self.dict.dim()
            )));
        }
        let x32 = to_f32(x);
        let mut values = Vec::new();
        let support = self.encode_f32(&x32, &mut values).to_vec();
        Ok(SparseCode {
            support,
            values: values.into_iter().map(f64::from).collect(),
            reconstruction_error: None,
        })
    }
}

/// Learns a dictionary whose groups respect the tree's buckets: every leaf's
/// members share one group, chosen by SOMP over the leaf.
pub fn train_hashed(
    x: ArrayView2<f64>,
    cfg: &GroupLearnConfig,
    tree: HashTree,
    leaf_groups: LeafGroups,
) -> Result<HashedTraining> {
    if tree.dim() != x.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "tree dimension {} vs data dimension {}",
            tree.dim(),
            x.nrows()
        )));
    }
    let cols = columns_of(x);
    let x32: Vec<Vec<f32>> = (0..x.ncols())
        .map(|j| to_f32(cols.row(j).as_slice().unwrap()))
        .collect();
    let bucket_of: Vec<usize> = x32.iter().map(|p| tree.route_f32(p)).collect();
    let n_leaves = tree.n_leaves();
    let mut cfg = cfg.clone();
    if leaf_groups == LeafGroups::Identity {
        cfg.n_groups = n_leaves;
    }
    let buckets = Buckets {
        bucket_of,
        n_buckets: n_leaves,
        fixed_groups: leaf_groups == LeafGroups::Identity,
    };
    let res = group_learn::train(x, &cfg, Some(&buckets))?;
    let leaf_group = match leaf_groups {
        LeafGroups::Identity => (0..n_leaves).collect(),
        LeafGroups::Learned => res.bucket_group.clone().expect("buckets were given"),
    };
    let model = HashedModel::new(tree, res.dict, res.groups, leaf_group)?;
    Ok(HashedTraining {
        model,
        energy_trace: res.energy_trace,
    })
}
