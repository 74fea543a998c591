//! Discrete states u(·, t) and weighted norms.

use serde::Serialize;

use crate::coefficient::CoefficientField;
use crate::error::{Error, Result};
use crate::grid::SpatialGrid;

#[derive(Debug, Clone, PartialEq)]
pub struct StateProfile {
    pub grid: SpatialGrid,
    pub values: Vec<f64>,
    pub time: f64,
}

impl StateProfile {
    pub fn new(grid: &SpatialGrid, values: Vec<f64>, time: f64) -> Result<Self> {
        if values.len() != grid.n() {
            return Err(Error::ShapeMismatch {
                expected: grid.n(),
                got: values.len(),
            });
        }
        Ok(Self {
            grid: grid.clone(),
            values,
            time,
        })
    }

    pub fn zeros(grid: &SpatialGrid, time: f64) -> Self {
        Self {
            grid: grid.clone(),
            values: vec![0.0; grid.n()],
            time,
        }
    }

    pub fn from_fn<F: Fn(f64) -> f64>(grid: &SpatialGrid, time: f64, f: F) -> Self {
        Self {
            grid: grid.clone(),
            values: grid.sample(f),
            time,
        }
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    /// Midpoint-rule L² norm.
    pub fn l2(&self) -> f64 {
        l2_norm(&self.values, self.grid.dx())
    }

    /// L² distance to `other` (same grid).
    pub fn l2_distance(&self, other: &StateProfile) -> f64 {
        let dx = self.grid.dx();
        (self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            * dx)
            .sqrt()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Midpoint-rule integral of u.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.dx()
    }

    pub fn scaled(&self, factor: f64) -> StateProfile {
        StateProfile {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| v * factor).collect(),
            time: self.time,
        }
    }

    /// Linear interpolation between cell centers (constant beyond the outer centers).
    pub fn interpolate(&self, x: f64) -> f64 {
        interpolate_centers(&self.grid, &self.values, x)
    }
}

pub(crate) fn l2_norm(values: &[f64], dx: f64) -> f64 {
    (values.iter().map(|v| v * v).sum::<f64>() * dx).sqrt()
}

pub(crate) fn interpolate_centers(grid: &SpatialGrid, values: &[f64], x: f64) -> f64 {
    let c = grid.centers();
    let n = c.len();
    if x <= c[0] {
        return values[0];
    }
    if x >= c[n - 1] {
        return values[n - 1];
    }
    let dx = grid.dx();
    let i = (((x - c[0]) / dx).floor() as usize).min(n - 2);
    let t = (x - c[i]) / dx;
    values[i] + t * (values[i + 1] - values[i])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeightedNorms {
    pub l2: f64,
    pub seminorm_1a: f64,
    pub norm_1a: f64,
}

/// L² norm, weighted seminorm ‖√a u_x‖ from face differences, and the full
/// H¹_a norm.
pub fn weighted_norms(u: &StateProfile, a: &CoefficientField) -> Result<WeightedNorms> {
    let n = u.n();
    if a.values_at_centers.len() != n {
        return Err(Error::ShapeMismatch {
            expected: a.values_at_centers.len(),
            got: n,
        });
    }
    let dx = u.grid.dx();
    let l2 = u.l2();
    let semi_sq: f64 = (1..n)
        .map(|f| {
            let g = (u.values[f] - u.values[f - 1]) / dx;
            a.values_at_faces[f] * g * g
        })
        .sum::<f64>()
        * dx;
    let seminorm_1a = semi_sq.sqrt();
    Ok(WeightedNorms {
        l2,
        seminorm_1a,
        norm_1a: (l2 * l2 + semi_sq).sqrt(),
    })
}
