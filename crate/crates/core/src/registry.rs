//! Name-keyed registries for the interchangeable algorithm families: sparse
//! coders (selected at encode/classify/bench time) and dictionary update
//! rules (selected in the training config).

use std::collections::BTreeMap;
use std::sync::Arc;

use ndarray::ArrayView2;

use crate::error::{Error, Result};
use crate::grouped;
use crate::pursuit::{self, Dictionary, DictionaryUpdateResult, SparseCode, SupportProjector};
use crate::treehash::HashedModel;

/// One way of turning a `d`-vector into a sparse code.
pub trait SparseCoder: Send + Sync {
    fn name(&self) -> &'static str;
    fn dim(&self) -> usize;
    fn n_atoms(&self) -> usize;
    fn encode(&self, x: &[f64]) -> Result<SparseCode>;
}

/// One way of updating the dictionary with the codes held fixed.
pub trait DictionaryUpdate: Send + Sync {
    fn name(&self) -> &'static str;
    fn update(
        &self,
        x: ArrayView2<f64>,
        codes: &[SparseCode],
        dict: &Dictionary,
    ) -> Result<DictionaryUpdateResult>;
}

pub struct LeastSquares;

impl DictionaryUpdate for LeastSquares {
    fn name(&self) -> &'static str {
        "least_squares"
    }

    fn update(
        &self,
        x: ArrayView2<f64>,
        codes: &[SparseCode],
        dict: &Dictionary,
    ) -> Result<DictionaryUpdateResult> {
        pursuit::dictionary_update(x, codes, dict)
    }
}

pub struct Ksvd;

impl DictionaryUpdate for Ksvd {
    fn name(&self) -> &'static str {
        "ksvd"
    }

    fn update(
        &self,
        x: ArrayView2<f64>,
        codes: &[SparseCode],
        dict: &Dictionary,
    ) -> Result<DictionaryUpdateResult> {
        pursuit::ksvd_update(x, codes, dict)
    }
}

static UPDATE_RULES: &[&dyn DictionaryUpdate] = &[&LeastSquares, &Ksvd];

pub fn update_rule(name: &str) -> Result<&'static dyn DictionaryUpdate> {
    UPDATE_RULES
        .iter()
        .copied()
        .find(|r| r.name() == name)
        .ok_or_else(|| {
            Error::Config(format!(
                "unknown update rule `{name}` (known: {})",
                update_rule_names().join(", ")
            ))
        })
}

pub fn update_rule_names() -> Vec<&'static str> {
    UPDATE_RULES.iter().map(|r| r.name()).collect()
}

/// Trained artifacts a coder may draw on.
#[derive(Clone, Copy)]
pub struct CoderSource<'a> {
    pub model: &'a Arc<HashedModel>,
    pub sparsity: usize,
}

pub type CoderFactory = fn(CoderSource<'_>) -> Result<Box<dyn SparseCoder>>;

/// Registry of sparse coders keyed by name.
pub struct CoderRegistry {
    factories: BTreeMap<&'static str, CoderFactory>,
}

impl Default for CoderRegistry {
    fn default() -> Self {
        Self::with_builtin()
    }
}

impl CoderRegistry {
    pub fn empty() -> Self {
        Self {
            factories: BTreeMap::new(),
        }
    }

    pub fn with_builtin() -> Self {
        let mut r = Self::empty();
        r.register("tree", |s| Ok(Box::new(TreeCoder(Arc::clone(s.model)))));
        r.register("omp", |s| {
            Ok(Box::new(OmpCoder {
                model: Arc::clone(s.model),
                sparsity: s.sparsity,
            }))
        });
        r.register("group-exact", |s| {
            Ok(Box::new(GroupExactCoder::new(s.model)?))
        });
        r.register("group-greedy", |s| {
            Ok(Box::new(GroupGreedyCoder {
                model: Arc::clone(s.model),
                sparsity: s.sparsity,
            }))
        });
        r
    }

    pub fn register(&mut self, name: &'static str, factory: CoderFactory) {
        self.factories.insert(name, factory);
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.factories.keys().copied().collect()
    }

    pub fn build(&self, name: &str, source: CoderSource<'_>) -> Result<Box<dyn SparseCoder>> {
        let factory = self.factories.get(name).ok_or_else(|| {
            Error::Config(format!(
                "unknown coder `{name}` (known: {})",
                self.names().join(", ")
            ))
        })?;
        factory(source)
    }
}

/// Tree hash lookup plus cached pseudoinverse.
pub struct TreeCoder(pub Arc<HashedModel>);

impl SparseCoder for TreeCoder {
    fn name(&self) -> &'static str {
        "tree"
    }
    fn dim(&self) -> usize {
        self.0.dict.dim()
    }
    fn n_atoms(&self) -> usize {
        self.0.dict.n_atoms()
    }
    fn encode(&self, x: &[f64]) -> Result<SparseCode> {
        self.0.encode(x)
    }
}

/// Plain OMP over the model's dictionary.
pub struct OmpCoder {
    pub model: Arc<HashedModel>,
    pub sparsity: usize,
}

impl SparseCoder for OmpCoder {
    fn name(&self) -> &'static str {
        "omp"
    }
    fn dim(&self) -> usize {
        self.model.dict.dim()
    }
    fn n_atoms(&self) -> usize {
        self.model.dict.n_atoms()
    }
    fn encode(&self, x: &[f64]) -> Result<SparseCode> {
        pursuit::omp(x, &self.model.dict, self.sparsity)
    }
}

/// Exhaustive projection onto every learned group.
pub struct GroupExactCoder {
    model: Arc<HashedModel>,
    projectors: Vec<SupportProjector>,
}

impl GroupExactCoder {
    pub fn new(model: &Arc<HashedModel>) -> Result<Self> {
        Ok(Self {
            model: Arc::clone(model),
            projectors: grouped::projectors(&model.dict, &model.groups)?,
        })
    }
}

impl SparseCoder for GroupExactCoder {
    fn name(&self) -> &'static str {
        "group-exact"
    }
    fn dim(&self) -> usize {
        self.model.dict.dim()
    }
    fn n_atoms(&self) -> usize {
        self.model.dict.n_atoms()
    }
    fn encode(&self, x: &[f64]) -> Result<SparseCode> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "input of length {} for model of dimension {}",
                x.len(),
                self.dim()
            )));
        }
        let mut best: Option<(usize, Vec<f64>, f64)> = None;
        for (g, p) in self.projectors.iter().enumerate() {
            let (z, err) = p.project(&self.model.dict, x);
            if best.as_ref().is_none_or(|b| err < b.2) {
                best = Some((g, z, err));
            }
        }
        let (g, values, err) = best.expect("group table is nonempty");
        Ok(SparseCode {
            support: self.projectors[g].support.clone(),
            values,
            reconstruction_error: Some(err),
        })
    }
}

/// Group-constrained greedy OMP over the learned groups.
pub struct GroupGreedyCoder {
    pub model: Arc<HashedModel>,
    pub sparsity: usize,
}

impl SparseCoder for GroupGreedyCoder {
    fn name(&self) -> &'static str {
        "group-greedy"
    }
    fn dim(&self) -> usize {
        self.model.dict.dim()
    }
    fn n_atoms(&self) -> usize {
        self.model.dict.n_atoms()
    }
    fn encode(&self, x: &[f64]) -> Result<SparseCode> {
        grouped::greedy_group_omp(x, &self.model.dict, &self.model.groups, self.sparsity)
    }
}
