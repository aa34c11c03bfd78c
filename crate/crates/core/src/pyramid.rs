//! Spatial pyramid max pooling over sparse code grids.
//!
//! Output layout is `[1×1 | 2×2 | 4×4]`: the 1×1 block holds one value per
//! feature, the 2×2 block `4·f + cell` and the 4×4 block `16·f + cell`, with
//! cells numbered row-major. Column `x` of a `W`-wide grid falls in cell
//! column `⌊4x/W⌋` (rows likewise), so spans differ in size by at most one.
//! Cells with no entry for a feature pool to 0.

use crate::error::{invalid, Error, Result};
use crate::pursuit::SparseCode;

pub const LEVELS: [usize; 3] = [1, 2, 4];
pub const CELLS: usize = 21;

/// Per-location sparse codes over `n_f` features, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseFeatureGrid {
    n_features: usize,
    width: usize,
    height: usize,
    codes: Vec<SparseCode>,
}

impl SparseFeatureGrid {
    pub fn new(
        n_features: usize,
        width: usize,
        height: usize,
        codes: Vec<SparseCode>,
    ) -> Result<Self> {
        if codes.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{} codes for a {width}x{height} grid",
                codes.len()
            )));
        }
        for c in &codes {
            if c.support.len() != c.values.len() {
                return Err(invalid("code support and values differ in length"));
            }
            if c.support.iter().any(|&f| f >= n_features) {
                return Err(invalid(format!(
                    "feature index out of range 0..{n_features}"
                )));
            }
        }
        Ok(Self {
            n_features,
            width,
            height,
            codes,
        })
    }

    /// Builds a grid from `(row, col, feature, value)` entries in any order.
    pub fn from_entries(
        n_features: usize,
        width: usize,
        height: usize,
        entries: &[(usize, usize, usize, f64)],
    ) -> Result<Self> {
        let mut codes = vec![SparseCode::empty(); width * height];
        for &(y, x, f, v) in entries {
            if y >= height || x >= width {
                return Err(invalid(format!("entry ({y}, {x}) outside the grid")));
            }
            let c = &mut codes[y * width + x];
            c.support.push(f);
            c.values.push(v);
        }
        Self::new(n_features, width, height, codes)
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn codes(&self) -> &[SparseCode] {
        &self.codes
    }

    pub fn nnz(&self) -> usize {
        self.codes.iter().map(|c| c.support.len()).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PyramidVector {
    pub n_features: usize,
    pub values: Vec<f64>,
}

impl PyramidVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Offset of `(level, feature, cell)` where level is the side (1, 2 or 4).
    pub fn offset(n_features: usize, side: usize, feature: usize, cell: usize) -> usize {
        match side {
            1 => feature,
            2 => n_features + 4 * feature + cell,
            4 => 5 * n_features + 16 * feature + cell,
            _ => panic!("pyramid levels are 1, 2 and 4"),
        }
    }
}

/// Cell (0..4) of coordinate `i` along an axis of length `n`.
#[inline]
pub fn cell_of(i: usize, n: usize) -> usize {
    4 * i / n
}

/// Pools a grid; also returns the number of elementary max/compare steps.
pub fn pool_counted(grid: &SparseFeatureGrid) -> Result<(PyramidVector, usize)> {
    if grid.width == 0 || grid.height == 0 {
        return Err(invalid("cannot pool an empty grid"));
    }
    let nf = grid.n_features;
    let mut fine = vec![f64::NEG_INFINITY; 16 * nf];
    let mut ops = 0usize;
    for y in 0..grid.height {
        let row_cell = 4 * cell_of(y, grid.height);
        for x in 0..grid.width {
            let cell = row_cell + cell_of(x, grid.width);
            let code = &grid.codes[y * grid.width + x];
            for (&f, &v) in code.support.iter().zip(&code.values) {
                let slot = &mut fine[16 * f + cell];
                *slot = slot.max(v);
            }
            ops += code.support.len();
        }
    }
    let mut coarse = vec![f64::NEG_INFINITY; 4 * nf];
    let mut top = vec![f64::NEG_INFINITY; nf];
    for f in 0..nf {
        for r in 0..4 {
            for c in 0..4 {
                let parent = &mut coarse[4 * f + 2 * (r / 2) + c / 2];
                *parent = parent.max(fine[16 * f + 4 * r + c]);
            }
        }
        for cell in 0..4 {
            top[f] = top[f].max(coarse[4 * f + cell]);
        }
    }
    ops += 20 * nf;
    let mut values = Vec::with_capacity(CELLS * nf);
    values.extend(top);
    values.extend(coarse);
    values.extend(fine);
    for v in &mut values {
        if *v == f64::NEG_INFINITY {
            *v = 0.0;
        }
    }
    Ok((
        PyramidVector {
            n_features: nf,
            values,
        },
        ops,
    ))
}

pub fn pool(grid: &SparseFeatureGrid) -> Result<PyramidVector> {
    pool_counted(grid).map(|(v, _)| v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_grid_pools_to_zero() {
        let g = SparseFeatureGrid::from_entries(3, 5, 6, &[]).unwrap();
        let p = pool(&g).unwrap();
        assert_eq!(p.values, vec![0.0; 63]);
    }

    #[test]
    fn impulse_lands_in_three_slots() {
        let g = SparseFeatureGrid::from_entries(2, 8, 8, &[(5, 2, 1, 3.0)]).unwrap();
        let p = pool(&g).unwrap();
        let hits: Vec<usize> = (0..p.len()).filter(|&i| p.values[i] == 3.0).collect();
        let expect = vec![
            PyramidVector::offset(2, 1, 1, 0),
            PyramidVector::offset(2, 2, 1, 2),
            PyramidVector::offset(2, 4, 1, 2 * 4 + 1),
        ];
        assert_eq!(hits, expect);
        assert_eq!(p.values.iter().filter(|v| **v != 0.0).count(), 3);
    }

    #[test]
    fn negative_values_survive() {
        let g = SparseFeatureGrid::from_entries(1, 4, 4, &[(0, 0, 0, -2.0)]).unwrap();
        let p = pool(&g).unwrap();
        assert_eq!(p.values[0], -2.0);
        assert_eq!(p.values[1], -2.0);
        assert_eq!(p.values[5], -2.0);
    }

    #[test]
    fn empty_grid_rejected() {
        let g = SparseFeatureGrid::new(2, 0, 3, vec![]).unwrap();
        assert!(pool(&g).is_err());
    }
}
