mod common;

use common::*;
use nalgebra::SymmetricEigen;
use ndarray::Array2;
use rand::Rng;
use treecode::group_learn::{
    farthest_point_init, regenerate_dead_groups, replace_dead_atoms, residual_covariance, train,
    GroupLearnConfig, LearnState,
};
use treecode::grouped::{Assignment, GroupTable};
use treecode::pursuit::{dictionary_update, energy, somp, Dictionary, SparseCode};
use treecode::synth::{self, Grating};

#[test]
fn union_of_subspaces_gives_partitioning_groups() {
    for seed in 0..8 {
        let mut r = rng(201 + seed);
        let data = synth::union_of_subspaces(12, 3, 3, 40, &mut r).unwrap();
        let cfg = GroupLearnConfig {
            n_atoms: 9,
            sparsity: 3,
            n_groups: 3,
            iters: 20,
            seed,
            ..Default::default()
        };
        let res = train(data.x.view(), &cfg, None).unwrap();
        let mut all: Vec<usize> = res.groups.groups().concat();
        all.sort_unstable();
        assert_eq!(all, (0..9).collect::<Vec<_>>(), "seed {seed}");
        for (j, col) in data.x.columns().into_iter().enumerate() {
            let c = &res.codes[j];
            assert!(dist(&col.to_vec(), &res.dict.reconstruct(&c.support, &c.values)) < 1e-6);
        }
    }
}

#[test]
fn single_group_is_somp_plus_update() {
    let mut r = rng(202);
    let x = gaussian(&mut r, 5, 40);
    let cfg = GroupLearnConfig {
        n_atoms: 3,
        sparsity: 3,
        n_groups: 1,
        iters: 4,
        seed: 17,
        ..Default::default()
    };
    let res = train(x.view(), &cfg, None).unwrap();

    let mut seeded = rng(17);
    let mut dict = farthest_point_init(x.view(), 3, &mut seeded).unwrap();
    let mut trace = Vec::new();
    for _ in 0..4 {
        let s = somp(x.view(), &dict, 3).unwrap();
        let codes: Vec<SparseCode> = (0..40)
            .map(|j| SparseCode {
                support: s.support.clone(),
                values: s.coefficients.column(j).to_vec(),
                reconstruction_error: None,
            })
            .collect();
        let upd = dictionary_update(x.view(), &codes, &dict).unwrap();
        trace.push(energy(x.view(), &upd.dict, &upd.codes));
        dict = upd.dict;
    }
    assert_eq!(res.energy_trace, trace);
}

#[test]
fn emptied_group_is_rebuilt() {
    let mut r = rng(211);
    let x = gaussian(&mut r, 4, 6);
    let dict = Dictionary::random(4, 5, &mut r).unwrap();
    let groups = GroupTable::new(vec![vec![0, 1], vec![], vec![3, 4]], 5).unwrap();
    let mut state = LearnState {
        dict,
        groups,
        assignment: Assignment {
            group_of: vec![0, 0, 0, 2, 2, 2],
            projection_error: vec![0.0; 6],
        },
        codes: Vec::new(),
        units: (0..6).map(|j| vec![j]).collect(),
        unit_group: vec![0, 0, 0, 2, 2, 2],
        fixed_units: false,
    };
    regenerate_dead_groups(x.view(), &mut state, 2, &mut rng(5)).unwrap();
    let g = state.groups.group(1);
    assert!(!g.is_empty() && g.len() <= 2);
    assert!(g.iter().all(|&k| k < 5));
    assert_eq!(
        state
            .assignment
            .group_of
            .iter()
            .filter(|&&g| g == 1)
            .count(),
        1
    );
}

#[test]
fn dead_atom_becomes_top_residual_direction() {
    let mut r = rng(212);
    let x = gaussian(&mut r, 6, 50);
    let mut dict = Dictionary::random(6, 4, &mut r).unwrap();
    let groups = GroupTable::new(vec![vec![0, 1], vec![1, 2]], 4).unwrap();
    let codes: Vec<SparseCode> = (0..50)
        .map(|j| SparseCode {
            support: vec![j % 3],
            values: vec![r.random_range(-1.0..1.0)],
            reconstruction_error: None,
        })
        .collect();
    let cov = residual_covariance(x.view(), &dict, &codes);
    replace_dead_atoms(x.view(), &mut dict, &groups, &codes, &mut rng(3)).unwrap();
    let eig = SymmetricEigen::new(to_na(cov.view()));
    let top = eig.eigenvalues.imax();
    let u = eig.eigenvectors.column(top);
    let cos: f64 = (0..6).map(|i| u[i] * dict.atom(3)[i]).sum::<f64>().abs();
    assert!(cos.min(1.0).acos() < 1e-4, "angle {}", cos.acos());
}

/// Piecewise-constant image: random half-plane edges and a disc, plus noise.
fn edges(r: &mut rand_chacha::ChaCha8Rng) -> Vec<f64> {
    let lines: Vec<(f64, f64, f64)> = (0..3)
        .map(|_| {
            let t: f64 = r.random_range(0.0..6.3);
            (t.cos(), t.sin(), r.random_range(-10.0..10.0))
        })
        .collect();
    let (cx, cy, rad) = (
        r.random_range(0.0..40.0),
        r.random_range(0.0..40.0),
        r.random_range(3.0..12.0),
    );
    let mut px = Vec::with_capacity(1600);
    for y in 0..40 {
        for x in 0..40 {
            let (fx, fy) = (x as f64 - 20.0, y as f64 - 20.0);
            let mut v = 0.2;
            for (i, &(a, b, c)) in lines.iter().enumerate() {
                if a * fx + b * fy > c {
                    v += 0.15 * (i + 1) as f64;
                }
            }
            if (x as f64 - cx).hypot(y as f64 - cy) < rad {
                v = 1.0 - v;
            }
            px.push(v + r.random_range(-0.01..0.01));
        }
    }
    px
}

fn patches(r: &mut rand_chacha::ChaCha8Rng) -> Array2<f64> {
    let mut cols = Vec::new();
    for i in 0..8 {
        let img: Vec<f64> = if i % 4 == 0 {
            Grating {
                theta: r.random_range(0.0..3.2),
                period: r.random_range(3.0..10.0),
                phase: r.random_range(0.0..6.3),
                amplitude: 0.4,
                noise: 0.02,
            }
            .render(40, 40, r)
            .unwrap()
            .pixels()
            .to_vec()
        } else {
            edges(r)
        };
        for y in (0..32).step_by(2) {
            for x in (0..32).step_by(2) {
                let mut p: Vec<f64> = (0..64).map(|k| img[(y + k / 8) * 40 + x + k % 8]).collect();
                let m = p.iter().sum::<f64>() / 64.0;
                p.iter_mut().for_each(|v| *v -= m);
                cols.push(p);
            }
        }
    }
    Array2::from_shape_fn((64, cols.len()), |(i, j)| cols[j][i])
}

#[test]
fn atom_popularity_is_uneven() {
    let mut r = rng(203);
    let x = patches(&mut r);
    let cfg = GroupLearnConfig {
        n_atoms: 64,
        sparsity: 5,
        n_groups: 128,
        iters: 5,
        seed: 203,
        ..Default::default()
    };
    let res = train(x.view(), &cfg, None).unwrap();
    let pop = res.groups.popularity();
    assert!(pop.iter().any(|&p| p >= 2));
    assert!(pop.contains(&1));
    for g in res.groups.groups() {
        assert!(g.len() <= 5 && g.iter().all(|&k| k < 64));
    }
}
