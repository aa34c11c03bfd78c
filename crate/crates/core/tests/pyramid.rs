mod common;

use common::rng;
use proptest::prelude::*;
use rand::Rng;
use treecode::pyramid::{pool, pool_counted, PyramidVector, SparseFeatureGrid, CELLS};

type Entry = (usize, usize, usize, f64);

/// Max over every region, computed independently per level and cell.
fn dense_pool(nf: usize, w: usize, h: usize, entries: &[Entry]) -> Vec<f64> {
    let mut dense = vec![vec![vec![0.0; nf]; w]; h];
    let mut present = vec![vec![vec![false; nf]; w]; h];
    for &(y, x, f, v) in entries {
        dense[y][x][f] = v;
        present[y][x][f] = true;
    }
    let mut out = Vec::new();
    for side in [1, 2, 4] {
        for f in 0..nf {
            for r in 0..side {
                for c in 0..side {
                    let ys = (0..h).filter(|&y| side * y / h == r);
                    let mut best = f64::NEG_INFINITY;
                    for y in ys {
                        for x in (0..w).filter(|&x| side * x / w == c) {
                            if present[y][x][f] {
                                best = best.max(dense[y][x][f]);
                            }
                        }
                    }
                    out.push(if best == f64::NEG_INFINITY { 0.0 } else { best });
                }
            }
        }
    }
    out
}

fn random_entries(r: &mut rand_chacha::ChaCha8Rng, nf: usize, w: usize, h: usize) -> Vec<Entry> {
    let mut e = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let k = r.random_range(0..=nf.min(3));
            for f in rand::seq::index::sample(r, nf, k) {
                e.push((y, x, f, r.random_range(-3.0..3.0)));
            }
        }
    }
    e
}

#[test]
fn matches_dense_oracle() {
    let mut r = rng(435);
    for _ in 0..40 {
        let (nf, w, h) = (
            r.random_range(1..10),
            r.random_range(1..25),
            r.random_range(1..25),
        );
        let e = random_entries(&mut r, nf, w, h);
        let g = SparseFeatureGrid::from_entries(nf, w, h, &e).unwrap();
        let (p, ops) = pool_counted(&g).unwrap();
        assert_eq!(p.values, dense_pool(nf, w, h, &e));
        assert_eq!(p.len(), nf * CELLS);
        assert_eq!(ops, g.nnz() + 20 * nf);
    }
}

#[test]
fn impulse_fills_three_nested_cells() {
    let g = SparseFeatureGrid::from_entries(4, 9, 7, &[(5, 2, 3, 3.0)]).unwrap();
    let p = pool(&g).unwrap();
    let hits: Vec<usize> = (0..p.len()).filter(|&i| p.values[i] != 0.0).collect();
    // row 5 of 7 and column 2 of 9: 4x4 cell (2, 0), 2x2 cell (1, 0)
    let (cell4, cell2) = (8, 2);
    assert_eq!(
        hits,
        vec![
            PyramidVector::offset(4, 1, 3, 0),
            PyramidVector::offset(4, 2, 3, cell2),
            PyramidVector::offset(4, 4, 3, cell4),
        ]
    );
    assert!(hits.iter().all(|&i| p.values[i] == 3.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn entry_order_does_not_matter(seed in 0u64..10_000) {
        let mut r = rng(seed);
        let (nf, w, h) = (r.random_range(1..6), r.random_range(1..12), r.random_range(1..12));
        let e = random_entries(&mut r, nf, w, h);
        let mut shuffled = e.clone();
        let perm = rand::seq::index::sample(&mut r, e.len(), e.len()).into_vec();
        for (i, p) in perm.into_iter().enumerate() {
            shuffled[i] = e[p];
        }
        let a = pool(&SparseFeatureGrid::from_entries(nf, w, h, &e).unwrap()).unwrap();
        let b = pool(&SparseFeatureGrid::from_entries(nf, w, h, &shuffled).unwrap()).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn coarse_cells_dominate_fine_ones(seed in 0u64..10_000) {
        let mut r = rng(seed);
        let (nf, w, h) = (r.random_range(1..6), r.random_range(4..12), r.random_range(4..12));
        let e: Vec<Entry> = random_entries(&mut r, nf, w, h)
            .into_iter()
            .map(|(y, x, f, v)| (y, x, f, v.abs()))
            .collect();
        let p = pool(&SparseFeatureGrid::from_entries(nf, w, h, &e).unwrap()).unwrap();
        for f in 0..nf {
            for cell in 0..16 {
                let parent = 2 * (cell / 8) + (cell % 4) / 2;
                let fine = p.values[PyramidVector::offset(nf, 4, f, cell)];
                prop_assert!(p.values[PyramidVector::offset(nf, 2, f, parent)] >= fine);
                prop_assert!(p.values[PyramidVector::offset(nf, 1, f, 0)] >= fine);
            }
        }
    }
}
