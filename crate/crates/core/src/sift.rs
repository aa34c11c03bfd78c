//! Fast approximate dense SIFT.
//!
//! Stage dimensions for an `h × w` image:
//!
//! | stage                   | rows                  | cols                  |
//! |-------------------------|-----------------------|-----------------------|
//! | gradients               | `h − 4`               | `w − 4`               |
//! | orientation histogram   | `h − 4`               | `w − 4`               |
//! | subsample2              | `⌊(h − 4)/2⌋`         | `⌊(w − 4)/2⌋`         |
//! | box_smooth              | `⌊(h − 4)/2⌋ − 1`     | `⌊(w − 4)/2⌋ − 1`     |
//! | assemble (128 channels) | `⌊(h − 4)/2⌋ − 9`     | `⌊(w − 4)/2⌋ − 9`     |
//!
//! so the smallest image producing a descriptor is 24 × 24.

use std::f64::consts::FRAC_PI_4;
use std::sync::OnceLock;

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};

pub const KERNEL_SIZE: usize = 5;
pub const SIGMA: f64 = 1.0;
pub const LUT_BINS: usize = 500;
pub const N_ORIENTATIONS: usize = 8;
pub const COS_POWER: i32 = 9;
pub const STENCIL: usize = 4;
pub const DESCRIPTOR_LEN: usize = STENCIL * STENCIL * N_ORIENTATIONS;
pub const NORM_THRESHOLD: f64 = 1.0;
/// Smallest side length that yields at least one descriptor.
pub const MIN_SIDE: usize = 24;

const HALF: usize = KERNEL_SIZE / 2;

/// Grayscale image with intensities in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(invalid("image has a zero dimension"));
        }
        if pixels.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        if pixels.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(invalid("pixel intensities must lie in [0, 1]"));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// 8-bit samples scaled by `1/maxval`.
    pub fn from_u8(width: usize, height: usize, samples: &[u8], maxval: u8) -> Result<Self> {
        if maxval == 0 {
            return Err(invalid("maxval must be positive"));
        }
        let scale = 1.0 / f64::from(maxval);
        let pixels = samples
            .iter()
            .map(|&s| (f64::from(s) * scale).min(1.0))
            .collect();
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize) -> f64 {
        self.pixels[y * self.width + x]
    }
}

/// Grid of per-location vectors, stored `(row, col, channel)` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl FeatureMap {
    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![0.0; width * height * channels],
        }
    }

    pub fn from_vec(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height * channels {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {width}x{height}x{channels} map",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize) -> &[f64] {
        let o = (y * self.width + x) * self.channels;
        &self.data[o..o + self.channels]
    }

    /// Iterates over locations in row-major order.
    pub fn vectors(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.channels.max(1))
    }

    fn row_len(&self) -> usize {
        self.width * self.channels
    }
}

/// Horizontal and vertical derivative-of-Gaussian kernels, row-major 5×5,
/// scaled so a unit-slope ramp produces exactly 1.
pub fn derivative_kernels() -> &'static ([f64; 25], [f64; 25]) {
    static K: OnceLock<([f64; 25], [f64; 25])> = OnceLock::new();
    K.get_or_init(|| {
        let r = (KERNEL_SIZE / 2) as f64;
        let g = |t: f64| (-t * t / (2.0 * SIGMA * SIGMA)).exp();
        let mut kx = [0.0; 25];
        let mut scale = 0.0;
        for row in 0..KERNEL_SIZE {
            for col in 0..KERNEL_SIZE {
                let (u, v) = (col as f64 - r, row as f64 - r);
                let w = u * g(u) * g(v);
                kx[row * KERNEL_SIZE + col] = w;
                scale += w * u;
            }
        }
        kx.iter_mut().for_each(|w| *w /= scale);
        let mut ky = [0.0; 25];
        for row in 0..KERNEL_SIZE {
            for col in 0..KERNEL_SIZE {
                ky[row * KERNEL_SIZE + col] = kx[col * KERNEL_SIZE + row];
            }
        }
        (kx, ky)
    })
}

/// Largest `|I_x|` reachable with intensities in `[0, 1]`.
pub fn max_gradient() -> f64 {
    derivative_kernels().0.iter().filter(|w| **w > 0.0).sum()
}

/// Valid-region correlation of the image with both derivative kernels,
/// summed over mirrored pixel differences so flat regions give exact zeros.
/// Returns `(I_x, I_y)` as single-channel maps of size `(h − 4) × (w − 4)`.
pub fn gradients(img: &GrayImage) -> Result<(FeatureMap, FeatureMap)> {
    if img.width < KERNEL_SIZE || img.height < KERNEL_SIZE {
        return Err(invalid(format!(
            "image {}x{} is smaller than the {KERNEL_SIZE}x{KERNEL_SIZE} derivative kernel",
            img.width, img.height
        )));
    }
    let (kx, ky) = derivative_kernels();
    let ow = img.width - KERNEL_SIZE + 1;
    let oh = img.height - KERNEL_SIZE + 1;
    let mut gx = FeatureMap::zeros(ow, oh, 1);
    let mut gy = FeatureMap::zeros(ow, oh, 1);
    gx.data
        .par_chunks_mut(ow)
        .zip(gy.data.par_chunks_mut(ow))
        .enumerate()
        .for_each(|(y, (rx, ry))| {
            for x in 0..ow {
                let at = |r: usize, c: usize| img.pixels[(y + r) * img.width + x + c];
                let (mut sx, mut sy) = (0.0, 0.0);
                for a in 0..KERNEL_SIZE {
                    for b in HALF + 1..KERNEL_SIZE {
                        let m = KERNEL_SIZE - 1 - b;
                        sx += kx[a * KERNEL_SIZE + b] * (at(a, b) - at(a, m));
                        sy += ky[b * KERNEL_SIZE + a] * (at(b, a) - at(m, a));
                    }
                }
                rx[x] = sx;
                ry[x] = sy;
            }
        });
    Ok((gx, gy))
}

/// `v(n) = m · max(cos(φ − nπ/4), 0)⁹` evaluated directly.
pub fn orientation_response(ix: f64, iy: f64) -> [f64; N_ORIENTATIONS] {
    let m = ix.hypot(iy);
    let phi = iy.atan2(ix);
    let mut v = [0.0; N_ORIENTATIONS];
    if m == 0.0 {
        return v;
    }
    for (n, out) in v.iter_mut().enumerate() {
        let c = (phi - n as f64 * FRAC_PI_4).cos();
        *out = if c > 0.0 { m * c.powi(COS_POWER) } else { 0.0 };
    }
    v
}

/// Largest gradient of `(ix, iy) ↦ v(n)` over the plane, `3 · 0.9⁴`.
pub fn response_lipschitz() -> f64 {
    3.0 * 0.9f64.powi(4)
}

/// Table of orientation responses at the centres of a `bins × bins` grid over
/// `[−range, range]²`.
#[derive(Debug, Clone)]
pub struct OrientationLUT {
    range: f64,
    bins: usize,
    table: Vec<[f64; N_ORIENTATIONS]>,
}

impl OrientationLUT {
    pub fn new(range: f64, bins: usize) -> Result<Self> {
        if !(range.is_finite() && range > 0.0) || bins == 0 {
            return Err(invalid(
                "LUT needs a positive finite range and at least one bin",
            ));
        }
        let h = 2.0 * range / bins as f64;
        let center = |i: usize| -range + (i as f64 + 0.5) * h;
        let table = (0..bins * bins)
            .into_par_iter()
            .map(|k| orientation_response(center(k % bins), center(k / bins)))
            .collect();
        Ok(Self { range, bins, table })
    }

    /// Shared table covering every gradient the fixed kernels can produce.
    pub fn standard() -> &'static Self {
        static LUT: OnceLock<OrientationLUT> = OnceLock::new();
        LUT.get_or_init(|| Self::new(max_gradient(), LUT_BINS).expect("valid LUT parameters"))
    }

    pub fn range(&self) -> f64 {
        self.range
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn bin_width(&self) -> f64 {
        2.0 * self.range / self.bins as f64
    }

    /// Worst-case deviation of a lookup from the exact response for inputs
    /// inside the range.
    pub fn quantization_bound(&self) -> f64 {
        response_lipschitz() * self.bin_width() / std::f64::consts::SQRT_2
    }

    /// Bin of a value; out-of-range values land in the boundary bin.
    #[inline]
    pub fn bin(&self, g: f64) -> usize {
        let t = ((g + self.range) / self.bin_width()).floor();
        if t.is_nan() || t < 0.0 {
            0
        } else {
            (t as usize).min(self.bins - 1)
        }
    }

    #[inline]
    pub fn lookup(&self, ix: f64, iy: f64) -> &[f64; N_ORIENTATIONS] {
        &self.table[self.bin(iy) * self.bins + self.bin(ix)]
    }
}

/// 8-channel orientation map from gradient maps via the LUT; a zero
/// gradient gives a zero response.
pub fn orientation_histogram(
    gx: &FeatureMap,
    gy: &FeatureMap,
    lut: &OrientationLUT,
) -> Result<FeatureMap> {
    if (gx.width, gx.height) != (gy.width, gy.height) || gx.channels != 1 || gy.channels != 1 {
        return Err(Error::DimensionMismatch(
            "gradient maps must be single-channel and the same size".into(),
        ));
    }
    let mut out = FeatureMap::zeros(gx.width, gx.height, N_ORIENTATIONS);
    let w = gx.width;
    out.data
        .par_chunks_mut(w * N_ORIENTATIONS)
        .enumerate()
        .for_each(|(y, row)| {
            for x in 0..w {
                let i = y * w + x;
                let (ix, iy) = (gx.data[i], gy.data[i]);
                if ix != 0.0 || iy != 0.0 {
                    row[x * N_ORIENTATIONS..(x + 1) * N_ORIENTATIONS]
                        .copy_from_slice(lut.lookup(ix, iy));
                }
            }
        });
    Ok(out)
}

/// Sum of each 2×2 block; odd trailing rows and columns are dropped.
pub fn subsample2(fm: &FeatureMap) -> Result<FeatureMap> {
    if fm.width < 2 || fm.height < 2 {
        return Err(invalid("subsampling needs a map of at least 2x2"));
    }
    let (ow, oh, c) = (fm.width / 2, fm.height / 2, fm.channels);
    let mut out = FeatureMap::zeros(ow, oh, c);
    let src = fm.row_len();
    out.data
        .par_chunks_mut(ow * c)
        .enumerate()
        .for_each(|(y, row)| {
            let r0 = &fm.data[2 * y * src..(2 * y + 1) * src];
            let r1 = &fm.data[(2 * y + 1) * src..(2 * y + 2) * src];
            for x in 0..ow {
                for k in 0..c {
                    let a = 2 * x * c + k;
                    row[x * c + k] = r0[a] + r0[a + c] + r1[a] + r1[a + c];
                }
            }
        });
    Ok(out)
}

/// Correlation with the 2×2 all-ones filter (valid region).
pub fn box_smooth(fm: &FeatureMap) -> Result<FeatureMap> {
    if fm.width < 2 || fm.height < 2 {
        return Err(invalid("smoothing needs a map of at least 2x2"));
    }
    let (ow, oh, c) = (fm.width - 1, fm.height - 1, fm.channels);
    let mut out = FeatureMap::zeros(ow, oh, c);
    let src = fm.row_len();
    out.data
        .par_chunks_mut(ow * c)
        .enumerate()
        .for_each(|(y, row)| {
            let r0 = &fm.data[y * src..(y + 1) * src];
            let r1 = &fm.data[(y + 1) * src..(y + 2) * src];
            for (i, o) in row.iter_mut().enumerate() {
                *o = r0[i] + r0[i + c] + r1[i] + r1[i + c];
            }
        });
    Ok(out)
}

/// Euclidean norm, accumulated sequentially in index order.
pub fn descriptor_norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Rescales `v` so its computed norm does not exceed the threshold.
pub fn clamp_norm(v: &mut [f64]) {
    let norm = descriptor_norm(v);
    if norm <= NORM_THRESHOLD {
        return;
    }
    let orig = v.to_vec();
    let mut s = NORM_THRESHOLD / norm;
    loop {
        for (o, a) in v.iter_mut().zip(&orig) {
            *o = a * s;
        }
        if descriptor_norm(v) <= NORM_THRESHOLD {
            return;
        }
        s = s.next_down();
    }
}

/// 128-dim descriptors from the smoothed 8-channel map: the descriptor at
/// `(x, y)` concatenates the vectors at `(x + 2i, y + 2j)`, `i, j ∈ 1..=4`,
/// with `j` outer and `i` inner, then clamps the norm to 1.
pub fn assemble_sift(fm: &FeatureMap) -> Result<FeatureMap> {
    let reach = 2 * STENCIL;
    if fm.channels != N_ORIENTATIONS {
        return Err(Error::DimensionMismatch(format!(
            "assembly expects {N_ORIENTATIONS} channels, got {}",
            fm.channels
        )));
    }
    if fm.width <= reach || fm.height <= reach {
        return Err(invalid(format!(
            "map {}x{} is too small for the sampling stencil",
            fm.width, fm.height
        )));
    }
    let (ow, oh) = (fm.width - reach, fm.height - reach);
    let mut out = FeatureMap::zeros(ow, oh, DESCRIPTOR_LEN);
    out.data
        .par_chunks_mut(ow * DESCRIPTOR_LEN)
        .enumerate()
        .for_each(|(y, row)| {
            for (x, desc) in row.chunks_exact_mut(DESCRIPTOR_LEN).enumerate() {
                let mut k = 0;
                for j in 1..=STENCIL {
                    for i in 1..=STENCIL {
                        desc[k..k + N_ORIENTATIONS].copy_from_slice(fm.at(y + 2 * j, x + 2 * i));
                        k += N_ORIENTATIONS;
                    }
                }
                clamp_norm(desc);
            }
        });
    Ok(out)
}

/// Output grid size `(rows, cols)` for an image of `height × width`, or
/// `None` when the image is too small.
pub fn output_dims(height: usize, width: usize) -> Option<(usize, usize)> {
    let side = |n: usize| {
        (n.checked_sub(KERNEL_SIZE - 1)? / 2)
            .checked_sub(2 * STENCIL + 2)
            .map(|v| v + 1)
    };
    Some((side(height)?, side(width)?))
}

/// Full pipeline: gradients → orientation → subsample → smooth → assemble.
pub fn dense_sift(img: &GrayImage) -> Result<FeatureMap> {
    dense_sift_with(img, OrientationLUT::standard())
}

pub fn dense_sift_with(img: &GrayImage, lut: &OrientationLUT) -> Result<FeatureMap> {
    if output_dims(img.height, img.width).is_none() {
        return Err(invalid(format!(
            "image {}x{} is too small for dense SIFT (minimum {MIN_SIDE}x{MIN_SIDE})",
            img.width, img.height
        )));
    }
    let (gx, gy) = gradients(img)?;
    let orient = orientation_histogram(&gx, &gy, lut)?;
    let sub = subsample2(&orient)?;
    let smooth = box_smooth(&sub)?;
    assemble_sift(&smooth)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image(w: usize, h: usize, f: impl Fn(usize, usize) -> f64) -> GrayImage {
        let px = (0..h)
            .flat_map(|y| (0..w).map(move |x| (y, x)))
            .map(|(y, x)| f(y, x))
            .collect();
        GrayImage::new(w, h, px).unwrap()
    }

    #[test]
    fn kernels_sum_to_zero() {
        let (kx, ky) = derivative_kernels();
        assert!(kx.iter().sum::<f64>().abs() < 1e-15);
        assert!(ky.iter().sum::<f64>().abs() < 1e-15);
    }

    #[test]
    fn ramp_gives_its_slope() {
        let w = 30;
        let img = image(w, 9, |_, x| x as f64 / w as f64);
        let (gx, gy) = gradients(&img).unwrap();
        for (a, b) in gx.data().iter().zip(gy.data()) {
            assert!((a - 1.0 / w as f64).abs() < 1e-14);
            assert!(b.abs() < 1e-15);
        }
    }

    #[test]
    fn constant_image_has_zero_descriptors() {
        let img = image(40, 30, |_, _| 0.6);
        let d = dense_sift(&img).unwrap();
        assert!(d.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn pure_x_gradient_response() {
        let v = orientation_response(1.0, 0.0);
        let side = std::f64::consts::FRAC_1_SQRT_2.powi(9);
        assert_eq!(v[0], 1.0);
        assert!((v[1] - side).abs() < 1e-15 && (v[7] - side).abs() < 1e-15);
        assert!((2..7).all(|n| v[n].abs() < 1e-15));
        assert_eq!(orientation_response(0.0, 0.0), [0.0; 8]);
    }

    #[test]
    fn subsample_and_smooth_impulses() {
        let mut fm = FeatureMap::zeros(4, 4, 1);
        fm.data[0] = 1.0;
        let s = subsample2(&fm).unwrap();
        assert_eq!(s.data(), &[1.0, 0.0, 0.0, 0.0]);
        let mut fm = FeatureMap::zeros(3, 3, 1);
        fm.data[4] = 1.0;
        assert_eq!(box_smooth(&fm).unwrap().data(), &[1.0; 4]);
    }

    #[test]
    fn dims_follow_closed_form() {
        assert_eq!(output_dims(321, 481), Some((149, 229)));
        assert_eq!(output_dims(24, 24), Some((1, 1)));
        assert_eq!(output_dims(23, 100), None);
        let img = image(25, 24, |y, x| ((x * 7 + y * 3) % 11) as f64 / 10.0);
        let d = dense_sift(&img).unwrap();
        assert_eq!((d.height(), d.width(), d.channels()), (1, 1, 128));
        assert!(dense_sift(&image(23, 40, |_, _| 0.0)).is_err());
    }

    #[test]
    fn clamp_hits_threshold() {
        let mut v = vec![3.0; 128];
        clamp_norm(&mut v);
        let n = descriptor_norm(&v);
        assert!(n <= 1.0 && n > 1.0 - 1e-12);
    }

    #[test]
    fn lut_clamps_out_of_range() {
        let lut = OrientationLUT::new(1.0, 10).unwrap();
        assert_eq!(lut.bin(-5.0), 0);
        assert_eq!(lut.bin(5.0), 9);
        assert_eq!(lut.bin(1.0), 9);
    }
}
