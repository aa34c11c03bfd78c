mod common;

use common::*;
use ndarray::Array2;
use proptest::prelude::*;
use rand::Rng;
use treecode::grouped::{assign_groups, greedy_group_omp, lloyd_train, GroupTable};
use treecode::pursuit::{omp, Dictionary};

/// `l` distinct random groups of `q` atoms.
fn random_groups(r: &mut rand_chacha::ChaCha8Rng, l: usize, k: usize, q: usize) -> GroupTable {
    let mut groups: Vec<Vec<usize>> = Vec::new();
    while groups.len() < l {
        let mut g = rand::seq::index::sample(r, k, q).into_vec();
        g.sort_unstable();
        if !groups.contains(&g) {
            groups.push(g);
        }
    }
    GroupTable::new(groups, k).unwrap()
}

/// `l` disjoint groups of `q` atoms drawn from a random permutation.
fn disjoint_groups(r: &mut rand_chacha::ChaCha8Rng, l: usize, k: usize, q: usize) -> GroupTable {
    let perm = rand::seq::index::sample(r, k, l * q).into_vec();
    GroupTable::new(perm.chunks(q).map(<[usize]>::to_vec).collect(), k).unwrap()
}

#[test]
fn assignment_matches_exhaustive_projection() {
    let mut r = rng(143);
    let dict = Dictionary::random(6, 8, &mut r).unwrap();
    let groups = GroupTable::new(vec![vec![0, 3, 5], vec![1, 2, 7]], 8).unwrap();
    let x = gaussian(&mut r, 6, 40);
    let a = assign_groups(x.view(), &dict, &groups).unwrap();
    for (j, col) in x.columns().into_iter().enumerate() {
        let e: Vec<f64> = (0..2)
            .map(|g| ls_residual(&dict, groups.group(g), &col.to_vec()))
            .collect();
        let expect = if e[1] < e[0] { 1 } else { 0 };
        assert_eq!(a.group_of[j], expect);
        assert!((a.projection_error[j] - e[expect].powi(2)).abs() < 1e-9);
    }
}

#[test]
fn single_group_reduces_to_omp() {
    let mut r = rng(151);
    let dict = Dictionary::random(7, 10, &mut r).unwrap();
    let groups = GroupTable::new(vec![(0..10).collect()], 10).unwrap();
    for _ in 0..20 {
        let x = gaussian_vec(&mut r, 7);
        let a = greedy_group_omp(&x, &dict, &groups, 3).unwrap();
        let b = omp(&x, &dict, 3).unwrap();
        assert_eq!(a.support, b.support);
        for (u, v) in a.values.iter().zip(&b.values) {
            assert!((u - v).abs() < 1e-12);
        }
    }
}

#[test]
fn greedy_group_omp_stays_in_a_group_and_loses_to_exact() {
    let mut r = rng(152);
    let dict = Dictionary::random(6, 9, &mut r).unwrap();
    let groups = GroupTable::new(
        vec![
            vec![0, 1, 2],
            vec![2, 3, 4],
            vec![4, 5, 6, 0],
            vec![7, 8, 1],
        ],
        9,
    )
    .unwrap();
    let x = gaussian(&mut r, 6, 50);
    let exact = assign_groups(x.view(), &dict, &groups).unwrap();
    for (j, col) in x.columns().into_iter().enumerate() {
        let xs = col.to_vec();
        let code = greedy_group_omp(&xs, &dict, &groups, 2).unwrap();
        assert!(code.support.len() <= 2);
        assert!(groups
            .groups()
            .iter()
            .any(|g| code.support.iter().all(|k| g.contains(k))));
        let e = dist(&xs, &dict.reconstruct(&code.support, &code.values));
        // a q=2 code from one group cannot beat projecting onto the whole best group
        assert!(e * e >= exact.projection_error[j] - 1e-9);
    }
}

fn generative(seed: u64) -> (Array2<f64>, Dictionary, GroupTable) {
    let mut r = rng(seed);
    let dict = Dictionary::random(10, 12, &mut r).unwrap();
    let groups = disjoint_groups(&mut r, 4, 12, 2);
    let mut x = Array2::zeros((10, 80));
    for j in 0..80 {
        let g = r.random_range(0..4);
        let col = dict.reconstruct(groups.group(g), &gaussian_vec(&mut r, 2));
        x.column_mut(j)
            .iter_mut()
            .zip(&col)
            .for_each(|(a, b)| *a = *b);
    }
    (x, dict, groups)
}

#[test]
fn lloyd_drives_generative_energy_to_zero() {
    let (x, dict, groups) = generative(159);
    let mut r = rng(1590);
    let noise = gaussian(&mut r, 10, 12) * 0.02;
    let start = Dictionary::from_matrix((dict.to_matrix() + noise).view()).unwrap();
    let res = lloyd_train(x.view(), &start, &groups, 10).unwrap();
    assert!(
        *res.energy_trace.last().unwrap() < 1e-8,
        "{:?}",
        res.energy_trace
    );
}

#[test]
fn lloyd_fixed_point_and_monotone_trace() {
    let (x, dict, groups) = generative(161);
    let mut r = rng(1610);
    let start = Dictionary::random(10, 12, &mut r).unwrap();
    let res = lloyd_train(x.view(), &start, &groups, 5).unwrap();
    for w in res.energy_trace.windows(2) {
        assert!(w[1] <= w[0] + 1e-9);
    }
    let again = lloyd_train(x.view(), &res.dict, &groups, 1).unwrap();
    let converged = lloyd_train(x.view(), &dict, &groups, 1).unwrap();
    assert!(again.energy_trace[0] <= res.energy_trace[4] + 1e-9);
    assert!(converged.energy_trace[0] <= 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn assignment_ignores_positive_rescaling(seed in 0u64..10_000, c in 0.01f64..100.0) {
        let mut r = rng(seed);
        let dict = Dictionary::random(5, 7, &mut r).unwrap();
        let groups = random_groups(&mut r, 5, 7, 2);
        let x = gaussian(&mut r, 5, 12);
        let a = assign_groups(x.view(), &dict, &groups).unwrap();
        let b = assign_groups((&x * c).view(), &dict, &groups).unwrap();
        prop_assert_eq!(a.group_of, b.group_of);
    }

    #[test]
    fn learned_tables_stay_valid(seed in 0u64..10_000) {
        let (x, _, groups) = generative(seed);
        let mut r = rng(seed ^ 7);
        let start = Dictionary::random(10, 12, &mut r).unwrap();
        let res = lloyd_train(x.view(), &start, &groups, 3).unwrap();
        prop_assert!(res.assignment.group_of.iter().all(|&g| g < groups.len()));
        for k in 0..12 {
            prop_assert!((norm(res.dict.atom(k)) - 1.0).abs() < 1e-12);
        }
    }
}
