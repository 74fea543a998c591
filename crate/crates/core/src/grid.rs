//! Uniform cell-centered discretization of the interval (-1, 1).

use crate::error::{Error, Result};

/// Smallest admissible cell count.
pub const MIN_CELLS: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct SpatialGrid {
    n: usize,
    dx: f64,
    centers: Vec<f64>,
    faces: Vec<f64>,
}

/// Builds a uniform grid with `n` cells on (-1, 1).
pub fn build_grid(n: usize) -> Result<SpatialGrid> {
    if n < MIN_CELLS {
        return Err(Error::UnderResolvedGrid(n));
    }
    Ok(SpatialGrid::uniform(n))
}

impl SpatialGrid {
    /// Uniform partition without the resolution check. Only used where a
    /// coarse grid is wanted on purpose (illustrations, tests).
    pub fn uniform(n: usize) -> Self {
        assert!(n > 0, "grid needs at least one cell");
        let dx = 2.0 / n as f64;
        let faces: Vec<f64> = (0..=n)
            .map(|i| if i == n { 1.0 } else { -1.0 + i as f64 * dx })
            .collect();
        let centers = faces.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        Self {
            n,
            dx,
            centers,
            faces,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn faces(&self) -> &[f64] {
        &self.faces
    }

    /// Samples `f` at the cell centers.
    pub fn sample<F: Fn(f64) -> f64>(&self, f: F) -> Vec<f64> {
        self.centers.iter().map(|&x| f(x)).collect()
    }

    /// Index of the cell containing `x` (clamped to the grid).
    pub fn cell_of(&self, x: f64) -> usize {
        let i = ((x + 1.0) / self.dx).floor();
        if i < 0.0 {
            0
        } else {
            (i as usize).min(self.n - 1)
        }
    }
}
