//! `key = value` run configuration. `#` starts a comment; unknown keys are
//! errors.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::group_learn::{AssignmentMode, GroupLearnConfig};
use crate::treehash::{LeafGroups, TreeConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Directory of training / benchmark images (searched recursively).
    pub images: Option<PathBuf>,
    /// Precomputed training vectors (matrix file, one vector per row).
    pub vectors: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub output: Option<PathBuf>,
    /// Class-per-subdirectory corpus split at random.
    pub data_dir: Option<PathBuf>,
    pub train_dir: Option<PathBuf>,
    pub test_dir: Option<PathBuf>,
    pub atoms: usize,
    pub sparsity: usize,
    /// Shared groups for the leaves; 0 gives every leaf its own group.
    pub groups: usize,
    pub depth: usize,
    pub iters: usize,
    pub seed: u64,
    /// Worker threads; `None` uses every core.
    pub threads: Option<usize>,
    pub lambda: Option<f64>,
    pub stop_radius: f64,
    pub two_means_iters: usize,
    pub update_rule: String,
    pub assignment: AssignmentMode,
    /// Cap on training vectors drawn from images.
    pub max_vectors: usize,
    pub splits: usize,
    /// Training images per class for random splits (0 = half of each class).
    pub train_per_class: usize,
    pub coder: String,
    pub max_iter: usize,
    pub tol: f64,
    pub reps: usize,
    /// Vectors encoded in the throughput comparison.
    pub bench_vectors: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            images: None,
            vectors: None,
            model: None,
            output: None,
            data_dir: None,
            train_dir: None,
            test_dir: None,
            atoms: 256,
            sparsity: 5,
            groups: 0,
            depth: 8,
            iters: 10,
            seed: 0,
            threads: None,
            lambda: None,
            stop_radius: 0.0,
            two_means_iters: 10,
            update_rule: "least_squares".into(),
            assignment: AssignmentMode::Exact,
            max_vectors: 200_000,
            splits: 10,
            train_per_class: 0,
            coder: "tree".into(),
            max_iter: 500,
            tol: 1e-6,
            reps: 5,
            bench_vectors: 15_000,
        }
    }
}

pub const KEYS: &[&str] = &[
    "images",
    "vectors",
    "model",
    "output",
    "data_dir",
    "train_dir",
    "test_dir",
    "atoms",
    "sparsity",
    "groups",
    "depth",
    "iters",
    "seed",
    "threads",
    "lambda",
    "stop_radius",
    "two_means_iters",
    "update_rule",
    "assignment",
    "max_vectors",
    "splits",
    "train_per_class",
    "coder",
    "max_iter",
    "tol",
    "reps",
    "bench_vectors",
];

/// Keys left out of the echo stored in model files.
const NOT_ECHOED: &[&str] = &["threads", "model", "output"];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("bad value `{value}` for `{key}`")))
}

fn parse_opt_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

fn show_path(p: &Option<PathBuf>) -> String {
    p.as_ref()
        .map(|p| p.display().to_string())
        .unwrap_or_default()
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            cfg.set(k.trim(), v.trim())?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "images" => self.images = parse_opt_path(value),
            "vectors" => self.vectors = parse_opt_path(value),
            "model" => self.model = parse_opt_path(value),
            "output" => self.output = parse_opt_path(value),
            "data_dir" => self.data_dir = parse_opt_path(value),
            "train_dir" => self.train_dir = parse_opt_path(value),
            "test_dir" => self.test_dir = parse_opt_path(value),
            "atoms" => self.atoms = parse(key, value)?,
            "sparsity" => self.sparsity = parse(key, value)?,
            "groups" => self.groups = parse(key, value)?,
            "depth" => self.depth = parse(key, value)?,
            "iters" => self.iters = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "threads" => {
                let t: usize = parse(key, value)?;
                self.threads = (t > 0).then_some(t);
            }
            "lambda" => {
                self.lambda = match value {
                    "" | "auto" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "stop_radius" => self.stop_radius = parse(key, value)?,
            "two_means_iters" => self.two_means_iters = parse(key, value)?,
            "update_rule" => self.update_rule = value.to_string(),
            "assignment" => {
                self.assignment = match value {
                    "exact" => AssignmentMode::Exact,
                    "greedy" => AssignmentMode::Greedy,
                    _ => return Err(Error::Config(format!("bad value `{value}` for `{key}`"))),
                }
            }
            "max_vectors" => self.max_vectors = parse(key, value)?,
            "splits" => self.splits = parse(key, value)?,
            "train_per_class" => self.train_per_class = parse(key, value)?,
            "coder" => self.coder = value.to_string(),
            "max_iter" => self.max_iter = parse(key, value)?,
            "tol" => self.tol = parse(key, value)?,
            "reps" => self.reps = parse(key, value)?,
            "bench_vectors" => self.bench_vectors = parse(key, value)?,
            _ => return Err(Error::Config(format!("unknown configuration key `{key}`"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "images" => show_path(&self.images),
            "vectors" => show_path(&self.vectors),
            "model" => show_path(&self.model),
            "output" => show_path(&self.output),
            "data_dir" => show_path(&self.data_dir),
            "train_dir" => show_path(&self.train_dir),
            "test_dir" => show_path(&self.test_dir),
            "atoms" => self.atoms.to_string(),
            "sparsity" => self.sparsity.to_string(),
            "groups" => self.groups.to_string(),
            "depth" => self.depth.to_string(),
            "iters" => self.iters.to_string(),
            "seed" => self.seed.to_string(),
            "threads" => self.threads.unwrap_or(0).to_string(),
            "lambda" => self.lambda.map_or("auto".into(), |l| l.to_string()),
            "stop_radius" => self.stop_radius.to_string(),
            "two_means_iters" => self.two_means_iters.to_string(),
            "update_rule" => self.update_rule.clone(),
            "assignment" => match self.assignment {
                AssignmentMode::Exact => "exact".into(),
                AssignmentMode::Greedy => "greedy".into(),
            },
            "max_vectors" => self.max_vectors.to_string(),
            "splits" => self.splits.to_string(),
            "train_per_class" => self.train_per_class.to_string(),
            "coder" => self.coder.clone(),
            "max_iter" => self.max_iter.to_string(),
            "tol" => self.tol.to_string(),
            "reps" => self.reps.to_string(),
            "bench_vectors" => self.bench_vectors.to_string(),
            _ => return None,
        })
    }

    /// Every key except thread count and output locations, one per line.
    pub fn echo(&self) -> String {
        let mut s = String::new();
        for k in KEYS.iter().filter(|k| !NOT_ECHOED.contains(k)) {
            let _ = writeln!(s, "{k} = {}", self.get(k).unwrap_or_default());
        }
        s
    }

    pub fn tree_config(&self) -> TreeConfig {
        TreeConfig {
            max_depth: self.depth,
            stop_radius: self.stop_radius,
            two_means_iters: self.two_means_iters,
        }
    }

    pub fn leaf_groups(&self) -> LeafGroups {
        if self.groups == 0 {
            LeafGroups::Identity
        } else {
            LeafGroups::Learned
        }
    }

    pub fn learn_config(&self) -> GroupLearnConfig {
        GroupLearnConfig {
            n_atoms: self.atoms,
            sparsity: self.sparsity,
            n_groups: self.groups,
            iters: self.iters,
            update_rule: self.update_rule.clone(),
            seed: self.seed,
            assignment: self.assignment,
        }
    }
}
