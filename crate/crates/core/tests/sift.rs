#![allow(clippy::needless_range_loop)]

mod common;

use common::*;
use proptest::prelude::*;
use rand::Rng;
use treecode::sift::{
    self, assemble_sift, box_smooth, dense_sift, gradients, orientation_histogram, subsample2,
    FeatureMap, GrayImage, OrientationLUT,
};
use treecode::synth;

fn naive_kernel() -> [[f64; 5]; 5] {
    let mut k = [[0.0; 5]; 5];
    let mut s = 0.0;
    for (r, row) in k.iter_mut().enumerate() {
        for (c, w) in row.iter_mut().enumerate() {
            let (u, v) = (c as f64 - 2.0, r as f64 - 2.0);
            *w = u * (-(u * u + v * v) / 2.0).exp();
            s += *w * u;
        }
    }
    k.iter_mut().flatten().for_each(|w| *w /= s);
    k
}

fn naive_response(ix: f64, iy: f64) -> [f64; 8] {
    let m = ix.hypot(iy);
    let phi = iy.atan2(ix);
    std::array::from_fn(|n| {
        m * (phi - n as f64 * std::f64::consts::FRAC_PI_4)
            .cos()
            .max(0.0)
            .powi(9)
    })
}

#[test]
fn gradients_match_direct_convolution() {
    let mut r = rng(344);
    let img = synth::random_image(37, 29, &mut r).unwrap();
    let (gx, gy) = gradients(&img).unwrap();
    assert_eq!((gx.width(), gx.height()), (33, 25));
    let k = naive_kernel();
    for y in 0..25 {
        for x in 0..33 {
            let (mut sx, mut sy) = (0.0, 0.0);
            for a in 0..5 {
                for b in 0..5 {
                    sx += k[a][b] * img.at(y + a, x + b);
                    sy += k[b][a] * img.at(y + a, x + b);
                }
            }
            assert!((gx.at(y, x)[0] - sx).abs() < 1e-10);
            assert!((gy.at(y, x)[0] - sy).abs() < 1e-10);
        }
    }
}

#[test]
fn ramp_and_constant_gradients() {
    let ramp = GrayImage::new(20, 12, (0..240).map(|i| (i % 20) as f64 / 20.0).collect()).unwrap();
    let (gx, gy) = gradients(&ramp).unwrap();
    assert!(gy.data().iter().all(|v| v.abs() < 1e-14));
    assert!(gx.data().iter().all(|v| (v - 0.05).abs() < 1e-14));
    let flat = GrayImage::new(15, 15, vec![0.4; 225]).unwrap();
    let (gx, gy) = gradients(&flat).unwrap();
    assert!(gx.data().iter().chain(gy.data()).all(|v| v.abs() < 1e-14));
}

#[test]
fn unit_x_gradient_bins() {
    let v = sift::orientation_response(1.0, 0.0);
    let c = std::f64::consts::FRAC_1_SQRT_2.powi(9);
    assert!((v[0] - 1.0).abs() < 1e-15);
    assert!((v[1] - c).abs() < 1e-15 && (v[7] - c).abs() < 1e-15);
    assert!((c - 0.04419).abs() < 1e-5);
    assert!(v[2..7].iter().all(|&b| b.abs() < 1e-100));
    assert_eq!(sift::orientation_response(0.0, 0.0), [0.0; 8]);
}

#[test]
fn lut_stays_within_quantization_bound() {
    let mut r = rng(353);
    let img = synth::random_image(40, 40, &mut r).unwrap();
    let (gx, gy) = gradients(&img).unwrap();
    let lut = OrientationLUT::standard();
    let h = orientation_histogram(&gx, &gy, lut).unwrap();
    let g: f64 = naive_kernel().iter().flatten().filter(|w| **w > 0.0).sum();
    let bound = 3.0 * 0.9f64.powi(4) * (2.0 * g / 500.0) / 2f64.sqrt();
    assert!((lut.quantization_bound() - bound).abs() < 1e-15);
    for i in 0..gx.data().len() {
        let exact = naive_response(gx.data()[i], gy.data()[i]);
        for n in 0..8 {
            let got = h.data()[i * 8 + n];
            assert!(got >= 0.0);
            assert!((got - exact[n]).abs() <= bound);
        }
    }
}

fn random_map(r: &mut rand_chacha::ChaCha8Rng, w: usize, h: usize, c: usize) -> FeatureMap {
    FeatureMap::from_vec(w, h, c, (0..w * h * c).map(|_| r.random()).collect()).unwrap()
}

#[test]
fn pooling_stages_match_loops() {
    let mut r = rng(362);
    let fm = random_map(&mut r, 13, 10, 3);
    let sub = subsample2(&fm).unwrap();
    let sm = box_smooth(&fm).unwrap();
    assert_eq!((sub.width(), sub.height()), (6, 5));
    assert_eq!((sm.width(), sm.height()), (12, 9));
    let quad = |y: usize, x: usize, c: usize| {
        fm.at(y, x)[c] + fm.at(y, x + 1)[c] + fm.at(y + 1, x)[c] + fm.at(y + 1, x + 1)[c]
    };
    for c in 0..3 {
        for y in 0..5 {
            for x in 0..6 {
                assert_eq!(sub.at(y, x)[c], quad(2 * y, 2 * x, c));
            }
        }
        for y in 0..9 {
            for x in 0..12 {
                assert_eq!(sm.at(y, x)[c], quad(y, x, c));
            }
        }
    }
}

#[test]
fn constant_and_impulse_maps() {
    let c = FeatureMap::from_vec(6, 4, 1, vec![0.5; 24]).unwrap();
    assert!(subsample2(&c).unwrap().data().iter().all(|&v| v == 2.0));
    assert!(box_smooth(&c).unwrap().data().iter().all(|&v| v == 2.0));
    let mut d = vec![0.0; 24];
    d[6 + 1] = 1.0;
    let sm = box_smooth(&FeatureMap::from_vec(6, 4, 1, d).unwrap()).unwrap();
    for y in 0..3 {
        for x in 0..5 {
            let hit = y <= 1 && x <= 1;
            assert_eq!(sm.at(y, x)[0], if hit { 1.0 } else { 0.0 });
        }
    }
}

#[test]
fn assemble_gathers_and_clamps() {
    let mut r = rng(379);
    let zero = assemble_sift(&FeatureMap::zeros(12, 12, 8)).unwrap();
    assert!(zero.data().iter().all(|&v| v == 0.0));
    let fm = random_map(&mut r, 14, 12, 8);
    let a = assemble_sift(&fm).unwrap();
    assert_eq!((a.width(), a.height(), a.channels()), (6, 4, 128));
    for y in 0..4 {
        for x in 0..6 {
            let mut v = Vec::new();
            for j in 1..=4 {
                for i in 1..=4 {
                    v.extend_from_slice(fm.at(y + 2 * j, x + 2 * i));
                }
            }
            sift::clamp_norm(&mut v);
            assert_eq!(a.at(y, x), v.as_slice());
            assert!(norm(a.at(y, x)) <= 1.0);
        }
    }
}

#[test]
fn dims_follow_stage_arithmetic() {
    let img = GrayImage::new(481, 321, vec![0.5; 321 * 481]).unwrap();
    let fm = dense_sift(&img).unwrap();
    // gradients -4, subsample halves (floor), smoothing -1, stencil -8
    let side = |n: usize| (n - 4) / 2 - 1 - 8;
    assert_eq!((fm.height(), fm.width()), (side(321), side(481)));
    assert_eq!((fm.height(), fm.width()), (149, 229));
    assert!(fm.data().iter().all(|&v| v == 0.0));
}

#[test]
fn two_pixel_shift_moves_one_cell() {
    let mut r = rng(387);
    let big = synth::random_image(70, 50, &mut r).unwrap();
    let crop = |dx: usize| {
        let px = (0..50)
            .flat_map(|y| (0..60).map(move |x| (y, x + dx)))
            .map(|(y, x)| big.at(y, x))
            .collect();
        GrayImage::new(60, 50, px).unwrap()
    };
    let a = dense_sift(&crop(0)).unwrap();
    let b = dense_sift(&crop(2)).unwrap();
    for y in 0..a.height() {
        for x in 0..a.width() - 1 {
            for (u, v) in b.at(y, x).iter().zip(a.at(y, x + 1)) {
                assert!((u - v).abs() < 1e-6);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn descriptors_never_exceed_unit_norm(seed in 0u64..10_000, w in 24usize..60, h in 24usize..60, scale in 0.1f64..1.0) {
        let mut r = rng(seed);
        let px = (0..w * h).map(|_| scale * r.random::<f64>()).collect();
        let fm = dense_sift(&GrayImage::new(w, h, px).unwrap()).unwrap();
        for v in fm.vectors() {
            prop_assert!(norm(v) <= 1.0);
        }
    }
}
