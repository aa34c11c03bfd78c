//! Seeded synthetic data: subspace unions, separated clusters, random
//! images and oriented gratings.

use ndarray::{Array2, ArrayViewMut1, Axis};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Result};
use crate::sift::GrayImage;

/// `d × k` matrix with orthonormal columns (Gaussian + Gram–Schmidt).
pub fn random_orthonormal<R: Rng + ?Sized>(d: usize, k: usize, rng: &mut R) -> Result<Array2<f64>> {
    if k > d {
        return Err(invalid(format!(
            "cannot fit {k} orthonormal vectors in dimension {d}"
        )));
    }
    let mut q = Array2::<f64>::zeros((d, k));
    let mut j = 0;
    while j < k {
        let mut v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        for _ in 0..2 {
            for p in 0..j {
                let col = q.column(p);
                let c: f64 = col.iter().zip(&v).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(col).for_each(|(a, b)| *a -= c * b);
            }
        }
        let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if n > 1e-8 {
            q.column_mut(j)
                .iter_mut()
                .zip(&v)
                .for_each(|(a, b)| *a = b / n);
            j += 1;
        }
    }
    Ok(q)
}

#[derive(Debug, Clone)]
pub struct SubspaceData {
    /// `d × N`, columns grouped by subspace.
    pub x: Array2<f64>,
    pub labels: Vec<usize>,
    /// Orthonormal basis of each subspace, `d × dim`.
    pub bases: Vec<Array2<f64>>,
}

/// Points from `count` mutually orthogonal `dim`-dimensional subspaces with
/// Gaussian coefficients.
pub fn union_of_subspaces<R: Rng + ?Sized>(
    d: usize,
    count: usize,
    dim: usize,
    per_subspace: usize,
    rng: &mut R,
) -> Result<SubspaceData> {
    let q = random_orthonormal(d, count * dim, rng)?;
    let bases: Vec<Array2<f64>> = (0..count)
        .map(|s| q.slice(ndarray::s![.., s * dim..(s + 1) * dim]).to_owned())
        .collect();
    let mut x = Array2::zeros((d, count * per_subspace));
    let mut labels = Vec::with_capacity(count * per_subspace);
    for (s, b) in bases.iter().enumerate() {
        for i in 0..per_subspace {
            let coef: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
            let col = x.column_mut(s * per_subspace + i);
            combine(col, b, &coef);
            labels.push(s);
        }
    }
    Ok(SubspaceData { x, labels, bases })
}

fn combine(mut out: ArrayViewMut1<f64>, basis: &Array2<f64>, coef: &[f64]) {
    for (c, b) in coef.iter().zip(basis.axis_iter(Axis(1))) {
        out.scaled_add(*c, &b);
    }
}

/// Clusters that each lie in their own `dim`-dimensional subspace: the first
/// basis vector carries an offset in `[offset, offset + 1]`, the rest carry
/// Gaussian coefficients of scale `spread`. Clusters come in pairs whose offset
/// directions are 30° apart, so the pairs sit close together and far from the
/// other pairs.
pub fn separated_clusters<R: Rng + ?Sized>(
    d: usize,
    count: usize,
    dim: usize,
    per_cluster: usize,
    offset: f64,
    spread: f64,
    rng: &mut R,
) -> Result<SubspaceData> {
    let mut data = union_of_subspaces(d, count, dim, per_cluster, rng)?;
    let (sin, cos) = std::f64::consts::FRAC_PI_6.sin_cos();
    for s in (1..count).step_by(2) {
        let tilted = &data.bases[s - 1].column(0) * cos + &data.bases[s].column(0) * sin;
        data.bases[s].column_mut(0).assign(&tilted);
    }
    for (s, b) in data.bases.iter().enumerate() {
        for i in 0..per_cluster {
            let mut coef = vec![offset + rng.random::<f64>()];
            coef.extend((1..dim).map(|_| {
                let g: f64 = StandardNormal.sample(rng);
                spread * g
            }));
            let mut col = data.x.column_mut(s * per_cluster + i);
            col.fill(0.0);
            combine(col, b, &coef);
        }
    }
    Ok(data)
}

/// Uniform random intensities.
pub fn random_image<R: Rng + ?Sized>(
    width: usize,
    height: usize,
    rng: &mut R,
) -> Result<GrayImage> {
    let px = (0..width * height).map(|_| rng.random::<f64>()).collect();
    GrayImage::new(width, height, px)
}

/// Sinusoidal grating `0.5 + amplitude·sin(2π·(x cos θ + y sin θ)/period + phase)`
/// plus uniform noise of half-width `noise`, clipped to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grating {
    pub theta: f64,
    pub period: f64,
    pub phase: f64,
    pub amplitude: f64,
    pub noise: f64,
}

impl Grating {
    pub fn render<R: Rng + ?Sized>(
        &self,
        width: usize,
        height: usize,
        rng: &mut R,
    ) -> Result<GrayImage> {
        let (c, s) = (self.theta.cos(), self.theta.sin());
        let k = std::f64::consts::TAU / self.period;
        let mut px = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let t = k * (x as f64 * c + y as f64 * s) + self.phase;
                let n = if self.noise > 0.0 {
                    self.noise * (2.0 * rng.random::<f64>() - 1.0)
                } else {
                    0.0
                };
                px.push((0.5 + self.amplitude * t.sin() + n).clamp(0.0, 1.0));
            }
        }
        GrayImage::new(width, height, px)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn orthonormal_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let q = random_orthonormal(10, 6, &mut rng).unwrap();
        let g = q.t().dot(&q);
        for i in 0..6 {
            for j in 0..6 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((g[[i, j]] - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn grating_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = Grating {
            theta: 0.3,
            period: 6.0,
            phase: 0.0,
            amplitude: 0.45,
            noise: 0.1,
        };
        let img = g.render(30, 20, &mut rng).unwrap();
        assert!(img.pixels().iter().all(|p| (0.0..=1.0).contains(p)));
    }
}
