//! End-to-end flows: dictionary training, image encoding and the
//! classification protocol.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use ndarray::Array2;
use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::RunConfig;
use super::image::{class_dirs, list_images, read_pgm};
use super::model_file::{load_matrix, Classifier, ModelFile};
use crate::classify::{self, FitConfig};
use crate::error::{Error, Result};
use crate::pursuit::SparseCode;
use crate::pyramid::{self, PyramidVector, SparseFeatureGrid};
use crate::registry::{CoderRegistry, CoderSource, SparseCoder};
use crate::sift::{dense_sift, descriptor_norm, FeatureMap, GrayImage};
use crate::treehash::{train_hashed, HashTree, HashedModel};

pub fn thread_pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("cannot start thread pool: {e}")))
}

fn no_inputs(what: impl Into<String>) -> Error {
    Error::NoInputs(what.into())
}

/// Nonzero SIFT descriptors of every image under `dir`, as rows.
pub fn descriptors_from_dir(dir: &Path) -> Result<Vec<Vec<f64>>> {
    let paths = list_images(dir)?;
    if paths.is_empty() {
        return Err(no_inputs(format!("no .pgm images under {}", dir.display())));
    }
    let maps = paths
        .par_iter()
        .map(|p| {
            let img = read_pgm(p)?;
            dense_sift(&img).map_err(|e| Error::InvalidInput(format!("{}: {e}", p.display())))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(maps
        .iter()
        .flat_map(|m| m.vectors())
        .filter(|v| descriptor_norm(v) > 0.0)
        .map(<[f64]>::to_vec)
        .collect())
}

/// Training data as a `d × N` matrix, from a matrix file or an image
/// directory (capped at `max_vectors` by seeded sampling).
pub fn training_vectors(cfg: &RunConfig) -> Result<Array2<f64>> {
    let rows = if let Some(p) = &cfg.vectors {
        let m = load_matrix(p)?;
        return if m.nrows() == 0 {
            Err(no_inputs(format!("{} holds no vectors", p.display())))
        } else {
            Ok(m.reversed_axes().as_standard_layout().into_owned())
        };
    } else if let Some(dir) = &cfg.images {
        descriptors_from_dir(dir)?
    } else {
        return Err(Error::Config("training needs `images` or `vectors`".into()));
    };
    if rows.is_empty() {
        return Err(no_inputs("images produced no nonzero descriptors"));
    }
    let keep: Vec<usize> = if rows.len() > cfg.max_vectors {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut idx = sample(&mut rng, rows.len(), cfg.max_vectors).into_vec();
        idx.sort_unstable();
        idx
    } else {
        (0..rows.len()).collect()
    };
    let d = rows[0].len();
    Ok(Array2::from_shape_fn((d, keep.len()), |(i, j)| {
        rows[keep[j]][i]
    }))
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub file: ModelFile,
    pub energy_trace: Vec<f64>,
    pub n_vectors: usize,
}

/// Builds the tree and trains the hashed model on `x` (`d × N`).
pub fn train_on(x: ndarray::ArrayView2<f64>, cfg: &RunConfig) -> Result<TrainOutcome> {
    if x.ncols() == 0 {
        return Err(no_inputs("no training vectors"));
    }
    let (tree, _) = HashTree::build(x, &cfg.tree_config())?;
    log::info!(
        "tree: {} leaves, depth {}, {} training vectors",
        tree.n_leaves(),
        tree.depth(),
        x.ncols()
    );
    let trained = train_hashed(x, &cfg.learn_config(), tree, cfg.leaf_groups())?;
    Ok(TrainOutcome {
        file: ModelFile {
            model: trained.model,
            classifier: None,
            config: cfg.echo(),
        },
        energy_trace: trained.energy_trace,
        n_vectors: x.ncols(),
    })
}

/// Trains from the configured source and writes `output` when set.
pub fn train_dict(cfg: &RunConfig) -> Result<TrainOutcome> {
    let x = training_vectors(cfg)?;
    let out = train_on(x.view(), cfg)?;
    if let Some(p) = &cfg.output {
        out.file.save(p)?;
    }
    Ok(out)
}

pub fn build_coder(
    model: &Arc<HashedModel>,
    name: &str,
    sparsity: usize,
) -> Result<Box<dyn SparseCoder>> {
    CoderRegistry::with_builtin().build(name, CoderSource { model, sparsity })
}

/// Codes every location of a descriptor map.
pub fn encode_map(coder: &dyn SparseCoder, fm: &FeatureMap) -> Result<SparseFeatureGrid> {
    if fm.channels() != coder.dim() {
        return Err(Error::DimensionMismatch(format!(
            "descriptors have {} channels but the model expects {}",
            fm.channels(),
            coder.dim()
        )));
    }
    let codes = fm
        .data()
        .par_chunks_exact(fm.channels())
        .map(|v| {
            coder.encode(v).map(|c| SparseCode {
                reconstruction_error: None,
                ..c
            })
        })
        .collect::<Result<Vec<_>>>()?;
    SparseFeatureGrid::new(coder.n_atoms(), fm.width(), fm.height(), codes)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Encoded {
    pub grid: SparseFeatureGrid,
    pub pyramid: PyramidVector,
}

/// SIFT → per-location coding → pyramid pooling.
pub fn encode_image(coder: &dyn SparseCoder, img: &GrayImage) -> Result<Encoded> {
    let fm = dense_sift(img)?;
    let grid = encode_map(coder, &fm)?;
    let pyramid = pyramid::pool(&grid)?;
    Ok(Encoded { grid, pyramid })
}

/// Labelled images grouped by class subdirectory.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub classes: Vec<String>,
    pub images: Vec<(PathBuf, usize)>,
}

pub fn load_corpus(dir: &Path) -> Result<Corpus> {
    let dirs = class_dirs(dir)?;
    if dirs.is_empty() {
        return Err(no_inputs(format!(
            "no class directories under {}",
            dir.display()
        )));
    }
    let mut images = Vec::new();
    let mut classes = Vec::new();
    for (c, (name, path)) in dirs.into_iter().enumerate() {
        let files = list_images(&path)?;
        if files.is_empty() {
            return Err(no_inputs(format!("class `{name}` has no images")));
        }
        images.extend(files.into_iter().map(|f| (f, c)));
        classes.push(name);
    }
    Ok(Corpus { classes, images })
}

fn features(coder: &dyn SparseCoder, corpus: &Corpus) -> Result<Vec<Vec<f64>>> {
    corpus
        .images
        .par_iter()
        .map(|(p, _)| {
            let img = read_pgm(p)?;
            encode_image(coder, &img)
                .map(|e| e.pyramid.values)
                .map_err(|e| match e {
                    Error::InvalidInput(m) => Error::InvalidInput(format!("{}: {m}", p.display())),
                    other => other,
                })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitResult {
    pub split: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub balanced_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct ClassifyReport {
    pub classes: Vec<String>,
    pub rows: Vec<SplitResult>,
    pub mean: f64,
    /// Sample standard deviation (0 for a single split).
    pub std: f64,
    /// Classifier fitted on the first split.
    pub classifier: Option<Classifier>,
}

impl ClassifyReport {
    fn new(classes: Vec<String>, rows: Vec<SplitResult>, classifier: Option<Classifier>) -> Self {
        let n = rows.len() as f64;
        let mean = rows.iter().map(|r| r.balanced_accuracy).sum::<f64>() / n;
        let var = if rows.len() > 1 {
            rows.iter()
                .map(|r| (r.balanced_accuracy - mean).powi(2))
                .sum::<f64>()
                / (n - 1.0)
        } else {
            0.0
        };
        Self {
            classes,
            rows,
            mean,
            std: var.sqrt(),
            classifier,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("split,n_train,n_test,balanced_accuracy\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{:.6}",
                r.split, r.n_train, r.n_test, r.balanced_accuracy
            );
        }
        let _ = writeln!(s, "mean,,,{:.6}", self.mean);
        let _ = writeln!(s, "std,,,{:.6}", self.std);
        s
    }
}

fn fit_and_score(
    cfg: &RunConfig,
    split: usize,
    train: (&[Vec<f64>], &[usize]),
    test: (&[Vec<f64>], &[usize]),
    classes: &[String],
) -> Result<(SplitResult, Classifier)> {
    let xt = classify::stack_rows(train.0)?;
    let fit_cfg = FitConfig {
        lambda: cfg.lambda,
        max_iter: cfg.max_iter,
        tol: cfg.tol,
    };
    let fitted = classify::fit(xt.view(), train.1, &fit_cfg)?;
    let model = fitted.model;
    if model.n_classes() != classes.len() {
        return Err(Error::NoInputs("every class needs training images".into()));
    }
    let xs = classify::stack_rows(test.0)?;
    let preds = classify::predict(&model, xs.view())?;
    let ba = classify::balanced_accuracy(&preds, test.1, classes.len())?;
    Ok((
        SplitResult {
            split,
            n_train: train.0.len(),
            n_test: test.0.len(),
            balanced_accuracy: ba,
        },
        Classifier {
            model,
            classes: classes.to_vec(),
        },
    ))
}

/// Encodes the corpus, then fits and scores the classifier over random
/// splits (`data_dir`) or the fixed `train_dir`/`test_dir` pair.
pub fn classify_pipeline(cfg: &RunConfig, model: &ModelFile) -> Result<ClassifyReport> {
    let shared = Arc::new(model.model.clone());
    let coder = build_coder(&shared, &cfg.coder, cfg.sparsity)?;
    if let Some(dir) = &cfg.data_dir {
        let corpus = load_corpus(dir)?;
        let feats = features(coder.as_ref(), &corpus)?;
        let n_classes = corpus.classes.len();
        let by_class: Vec<Vec<usize>> = (0..n_classes)
            .map(|c| {
                (0..corpus.images.len())
                    .filter(|&i| corpus.images[i].1 == c)
                    .collect()
            })
            .collect();
        let mut rows = Vec::new();
        let mut first = None;
        for split in 0..cfg.splits.max(1) {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(split as u64));
            let (mut tr, mut te) = (Vec::new(), Vec::new());
            for (c, members) in by_class.iter().enumerate() {
                let n_train = if cfg.train_per_class == 0 {
                    members.len().div_ceil(2)
                } else {
                    cfg.train_per_class
                };
                if n_train >= members.len() {
                    return Err(Error::Config(format!(
                        "class `{}` has {} images; need more than {n_train} to hold some out",
                        corpus.classes[c],
                        members.len()
                    )));
                }
                let mut m = members.clone();
                m.shuffle(&mut rng);
                tr.extend_from_slice(&m[..n_train]);
                te.extend_from_slice(&m[n_train..]);
            }
            tr.sort_unstable();
            te.sort_unstable();
            let pick = |idx: &[usize]| -> (Vec<Vec<f64>>, Vec<usize>) {
                (
                    idx.iter().map(|&i| feats[i].clone()).collect(),
                    idx.iter().map(|&i| corpus.images[i].1).collect(),
                )
            };
            let (xa, ya) = pick(&tr);
            let (xb, yb) = pick(&te);
            let (row, clf) =
                fit_and_score(cfg, split + 1, (&xa, &ya), (&xb, &yb), &corpus.classes)?;
            log::info!(
                "split {}: balanced accuracy {:.4}",
                row.split,
                row.balanced_accuracy
            );
            rows.push(row);
            first.get_or_insert(clf);
        }
        return Ok(ClassifyReport::new(corpus.classes, rows, first));
    }
    let (Some(train_dir), Some(test_dir)) = (&cfg.train_dir, &cfg.test_dir) else {
        return Err(Error::Config(
            "classification needs `data_dir` or both `train_dir` and `test_dir`".into(),
        ));
    };
    let train = load_corpus(train_dir)?;
    let test = load_corpus(test_dir)?;
    let mut test_labelled = test.clone();
    for (_, label) in &mut test_labelled.images {
        let name = &test.classes[*label];
        *label = train
            .classes
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| {
                Error::InvalidInput(format!("test class `{name}` has no training images"))
            })?;
    }
    let xa = features(coder.as_ref(), &train)?;
    let xb = features(coder.as_ref(), &test_labelled)?;
    let ya: Vec<usize> = train.images.iter().map(|i| i.1).collect();
    let yb: Vec<usize> = test_labelled.images.iter().map(|i| i.1).collect();
    if cfg.splits > 1 {
        log::warn!("fixed train/test directories give a single split");
    }
    let (row, clf) = fit_and_score(cfg, 1, (&xa, &ya), (&xb, &yb), &train.classes)?;
    Ok(ClassifyReport::new(train.classes, vec![row], Some(clf)))
}
