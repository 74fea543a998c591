//! Tridiagonal matrices and the Thomas algorithm.

use crate::error::{Error, Result};

/// Row `i` holds `lower[i]·x[i-1] + diag[i]·x[i] + upper[i]·x[i+1]`;
/// `lower[0]` and `upper[n-1]` are unused and kept at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Tridiagonal {
    pub fn zeros(n: usize) -> Self {
        Self {
            lower: vec![0.0; n],
            diag: vec![0.0; n],
            upper: vec![0.0; n],
        }
    }

    pub fn n(&self) -> usize {
        self.diag.len()
    }

    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        let n = self.n();
        for i in 0..n {
            let mut s = self.diag[i] * x[i];
            if i > 0 {
                s += self.lower[i] * x[i - 1];
            }
            if i + 1 < n {
                s += self.upper[i] * x[i + 1];
            }
            out[i] = s;
        }
    }

    /// `I - s·A`
    pub fn shifted_identity(&self, s: f64) -> Tridiagonal {
        Tridiagonal {
            lower: self.lower.iter().map(|v| -s * v).collect(),
            diag: self.diag.iter().map(|v| 1.0 - s * v).collect(),
            upper: self.upper.iter().map(|v| -s * v).collect(),
        }
    }

    /// Solves `A x = rhs` in place.
    pub fn solve_in_place(&self, rhs: &mut [f64]) -> Result<()> {
        let n = self.n();
        let mut c = vec![0.0; n];
        let mut beta = self.diag[0];
        if beta == 0.0 || !beta.is_finite() {
            return Err(Error::SingularSystem(0));
        }
        rhs[0] /= beta;
        for i in 1..n {
            c[i - 1] = self.upper[i - 1] / beta;
            beta = self.diag[i] - self.lower[i] * c[i - 1];
            if beta == 0.0 || !beta.is_finite() {
                return Err(Error::SingularSystem(i));
            }
            rhs[i] = (rhs[i] - self.lower[i] * rhs[i - 1]) / beta;
        }
        for i in (0..n - 1).rev() {
            rhs[i] -= c[i] * rhs[i + 1];
        }
        Ok(())
    }

    /// Dense row-major copy.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.n();
        let mut m = vec![vec![0.0; n]; n];
        for i in 0..n {
            m[i][i] = self.diag[i];
            if i > 0 {
                m[i][i - 1] = self.lower[i];
            }
            if i + 1 < n {
                m[i][i + 1] = self.upper[i];
            }
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn solve_inverts_matvec(x in prop::collection::vec(-10.0f64..10.0, 2..40),
                                off in prop::collection::vec(0.0f64..1.0, 40)) {
            let n = x.len();
            let mut t = Tridiagonal::zeros(n);
            for i in 0..n {
                if i > 0 { t.lower[i] = -off[i]; }
                if i + 1 < n { t.upper[i] = -off[(i + 7) % 40]; }
                t.diag[i] = 2.5;
            }
            let mut b = vec![0.0; n];
            t.matvec(&x, &mut b);
            t.solve_in_place(&mut b).unwrap();
            for (u, v) in b.iter().zip(&x) {
                prop_assert!((u - v).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn singular_detected() {
        let t = Tridiagonal::zeros(3);
        let mut b = vec![1.0; 3];
        assert_eq!(t.solve_in_place(&mut b), Err(Error::SingularSystem(0)));
    }
}
