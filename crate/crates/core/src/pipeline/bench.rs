//! Analytic multiply counts, measured tree-vs-OMP throughput and per-stage
//! timings.

use std::fmt;
use std::hint::black_box;
use std::time::Instant;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::config::RunConfig;
use super::flows::{build_coder, descriptors_from_dir, encode_map};
use super::image::{list_images, read_pgm};
use super::model_file::ModelFile;
use crate::error::{Error, Result};
use crate::pursuit;
use crate::pyramid;
use crate::sift::dense_sift;
use crate::treehash::HashedModel;

/// Multiplies per descriptor for tree coding and for exact OMP.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MultiplyCounts {
    pub dim: u64,
    pub depth: u64,
    pub sparsity: u64,
    pub atoms: u64,
    /// `depth·d + q·d`: one projection per tree level plus the decoder.
    pub tree: u64,
    /// `d·(K + q − 1)`: one correlation sweep against all atoms plus the
    /// remaining updates.
    pub omp: u64,
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

impl MultiplyCounts {
    pub fn new(dim: u64, depth: u64, sparsity: u64, atoms: u64) -> Self {
        Self {
            dim,
            depth,
            sparsity,
            atoms,
            tree: dim * (depth + sparsity),
            omp: dim * (atoms + sparsity.saturating_sub(1)),
        }
    }

    /// `omp / tree` as a reduced fraction.
    pub fn ratio_fraction(&self) -> (u64, u64) {
        let g = gcd(self.omp, self.tree).max(1);
        (self.omp / g, self.tree / g)
    }

    pub fn ratio(&self) -> f64 {
        self.omp as f64 / self.tree as f64
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Throughput {
    pub vectors: usize,
    pub reps: usize,
    /// Median wall time of one pass over all vectors.
    pub tree_seconds: f64,
    pub omp_seconds: f64,
}

impl Throughput {
    pub fn speedup(&self) -> f64 {
        self.omp_seconds / self.tree_seconds
    }

    pub fn tree_per_second(&self) -> f64 {
        self.vectors as f64 / self.tree_seconds
    }

    pub fn omp_per_second(&self) -> f64 {
        self.vectors as f64 / self.omp_seconds
    }
}

/// Times tree encoding against OMP (`q` atoms, same dictionary) on the rows
/// of `vectors`, on the calling thread. One untimed warm-up pass precedes the
/// `reps` timed passes of each.
pub fn compare_throughput(
    model: &HashedModel,
    vectors: &Array2<f64>,
    sparsity: usize,
    reps: usize,
) -> Result<Throughput> {
    if vectors.ncols() != model.dict.dim() {
        return Err(Error::DimensionMismatch(format!(
            "bench vectors have dimension {}, model {}",
            vectors.ncols(),
            model.dict.dim()
        )));
    }
    let rows: Vec<&[f64]> = vectors
        .rows()
        .into_iter()
        .map(|r| r.to_slice().expect("standard layout"))
        .collect();
    let time = |f: &dyn Fn(&[f64]) -> Result<usize>| -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(reps);
        for rep in 0..=reps {
            let t = Instant::now();
            let mut acc = 0usize;
            for r in &rows {
                acc += f(black_box(r))?;
            }
            black_box(acc);
            if rep > 0 {
                out.push(t.elapsed().as_secs_f64());
            }
        }
        Ok(out)
    };
    let tree = time(&|x| model.encode(x).map(|c| c.support.len()))?;
    let omp = time(&|x| pursuit::omp(x, &model.dict, sparsity).map(|c| c.support.len()))?;
    Ok(Throughput {
        vectors: rows.len(),
        reps,
        tree_seconds: median(tree),
        omp_seconds: median(omp),
    })
}

/// Seeded Gaussian vectors, one per row.
pub fn random_vectors(n: usize, d: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_simple_fn((n, d), || StandardNormal.sample(&mut rng))
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StageTimes {
    pub sift: f64,
    pub coding: f64,
    pub pooling: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub counts: MultiplyCounts,
    pub throughput: Throughput,
    /// Per-frame stage times of the repetition with the median total.
    pub stages: Option<StageTimes>,
    pub frames: usize,
}

impl BenchReport {
    pub fn frames_per_second(&self) -> Option<f64> {
        self.stages.map(|s| self.frames as f64 / s.total)
    }
}

impl fmt::Display for BenchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = &self.counts;
        let (num, den) = c.ratio_fraction();
        writeln!(
            f,
            "multiplies per descriptor (d={}, depth={}, q={}, K={})",
            c.dim, c.depth, c.sparsity, c.atoms
        )?;
        writeln!(f, "  tree coding: {}", c.tree)?;
        writeln!(f, "  exact OMP:   {}", c.omp)?;
        writeln!(f, "  ratio:       {num}/{den} = {:.4}", c.ratio())?;
        let t = &self.throughput;
        writeln!(
            f,
            "throughput ({} vectors, median of {} runs, 1 thread)",
            t.vectors, t.reps
        )?;
        writeln!(
            f,
            "  tree: {:.6} s ({:.0} vectors/s)",
            t.tree_seconds,
            t.tree_per_second()
        )?;
        writeln!(
            f,
            "  omp:  {:.6} s ({:.0} vectors/s)",
            t.omp_seconds,
            t.omp_per_second()
        )?;
        writeln!(f, "  speedup: {:.2}x", t.speedup())?;
        if let Some(s) = self.stages {
            writeln!(f, "stages over {} frames (median run)", self.frames)?;
            writeln!(f, "  sift:    {:.6} s", s.sift)?;
            writeln!(f, "  coding:  {:.6} s", s.coding)?;
            writeln!(f, "  pooling: {:.6} s", s.pooling)?;
            writeln!(f, "  total:   {:.6} s", s.total)?;
            writeln!(
                f,
                "  frames/s: {:.3}",
                self.frames_per_second().unwrap_or(0.0)
            )?;
        }
        Ok(())
    }
}

/// Full benchmark for a trained model.
pub fn bench(cfg: &RunConfig, file: &ModelFile) -> Result<BenchReport> {
    let model = &file.model;
    let d = model.dict.dim();
    let q = model.groups.max_group_size().max(1);
    let counts = MultiplyCounts::new(
        d as u64,
        model.tree.depth() as u64,
        q as u64,
        model.dict.n_atoms() as u64,
    );
    let reps = cfg.reps.max(1);

    let mut stages = None;
    let mut frames = 0;
    let mut vectors = None;
    if let Some(dir) = &cfg.images {
        let imgs = list_images(dir)?
            .iter()
            .map(|p| read_pgm(p))
            .collect::<Result<Vec<_>>>()?;
        frames = imgs.len();
        let shared = std::sync::Arc::new(model.clone());
        let coder = build_coder(&shared, "tree", q)?;
        let mut runs = Vec::with_capacity(reps);
        for _ in 0..reps {
            let mut st = StageTimes::default();
            let start = Instant::now();
            for img in &imgs {
                let t0 = Instant::now();
                let fm = dense_sift(img)?;
                let t1 = Instant::now();
                let grid = encode_map(coder.as_ref(), &fm)?;
                let t2 = Instant::now();
                black_box(pyramid::pool(&grid)?);
                let t3 = Instant::now();
                st.sift += (t1 - t0).as_secs_f64();
                st.coding += (t2 - t1).as_secs_f64();
                st.pooling += (t3 - t2).as_secs_f64();
            }
            st.total = start.elapsed().as_secs_f64();
            runs.push(st);
        }
        runs.sort_by(|a, b| a.total.total_cmp(&b.total));
        stages = Some(runs[runs.len() / 2]);
        let desc = descriptors_from_dir(dir)?;
        let n = desc.len().min(cfg.bench_vectors);
        if n > 0 {
            vectors = Some(Array2::from_shape_fn((n, d), |(i, j)| desc[i][j]));
        }
    }
    let vectors = vectors.unwrap_or_else(|| random_vectors(cfg.bench_vectors, d, cfg.seed));
    let throughput = compare_throughput(model, &vectors, q, reps)?;
    Ok(BenchReport {
        counts,
        throughput,
        stages,
        frames,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_for_descriptor_setting() {
        let c = MultiplyCounts::new(128, 16, 5, 2048);
        assert_eq!(c.tree, 128 * 21);
        assert_eq!(c.omp, 128 * 2052);
        assert_eq!(c.ratio_fraction(), (684, 7));
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
