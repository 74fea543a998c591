//! Finite-volume discretization of u ↦ (a u_x)_x.

use crate::boundary::BoundarySpec;
use crate::coefficient::{CoefficientField, Degeneracy};
use crate::error::Result;
use crate::grid::SpatialGrid;
use crate::tridiag::Tridiagonal;

/// Tridiagonal operator `(L u)_i = (F_{i+1/2} - F_{i-1/2}) / dx` with
/// `F_{i+1/2} = a(face)·(u_{i+1} - u_i)/dx` at interior faces.
///
/// Boundary faces carry the weighted flux `a u_x`:
/// - weighted Neumann: zero;
/// - Robin with β1 ≠ 0: `F = -(β0/β1)·u_0` (left) and `F = -(γ0/γ1)·u_{n-1}` (right);
/// - Robin with β1 = 0 (Dirichlet trace): the trace is imposed half a cell away
///   from the first center using `a` at that center, since `a` vanishes on the face.
#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    pub grid: SpatialGrid,
    pub matrix: Tridiagonal,
    pub bc: BoundarySpec,
    pub degeneracy: Degeneracy,
}

pub fn assemble_operator(a: &CoefficientField, bc: &BoundarySpec) -> Result<DiscreteOperator> {
    bc.check_compatible(a.degeneracy)?;
    let grid = &a.grid;
    let n = grid.n();
    let dx = grid.dx();
    let inv_dx2 = 1.0 / (dx * dx);
    let mut m = Tridiagonal::zeros(n);
    for f in 1..n {
        let c = a.values_at_faces[f] * inv_dx2;
        m.diag[f - 1] -= c;
        m.upper[f - 1] += c;
        m.diag[f] -= c;
        m.lower[f] += c;
    }
    if let BoundarySpec::Robin {
        beta0,
        beta1,
        gamma0,
        gamma1,
    } = *bc
    {
        if beta1 != 0.0 {
            m.diag[0] += (beta0 / beta1) / dx;
        } else {
            m.diag[0] -= 2.0 * a.values_at_centers[0] * inv_dx2;
        }
        if gamma1 != 0.0 {
            m.diag[n - 1] -= (gamma0 / gamma1) / dx;
        } else {
            m.diag[n - 1] -= 2.0 * a.values_at_centers[n - 1] * inv_dx2;
        }
    }
    Ok(DiscreteOperator {
        grid: grid.clone(),
        matrix: m,
        bc: *bc,
        degeneracy: a.degeneracy,
    })
}

impl DiscreteOperator {
    pub fn n(&self) -> usize {
        self.matrix.n()
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; u.len()];
        self.matrix.matvec(u, &mut out);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficient::{eval_coefficient, CoefficientSpec};
    use crate::error::Error;
    use crate::grid::build_grid;

    fn field(spec: CoefficientSpec, n: usize) -> CoefficientField {
        eval_coefficient(&spec, &build_grid(n).unwrap()).unwrap()
    }

    #[test]
    fn constant_in_kernel_sdp() {
        let a = field(CoefficientSpec::Legendre, 128);
        let op = assemble_operator(&a, &BoundarySpec::WeightedNeumann).unwrap();
        let lu = op.apply(&vec![1.0; 128]);
        assert!(lu.iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn legendre_eigenrelation() {
        // The p-th mode (degree p-1 polynomial) has eigenvalue -p(p-1).
        let a = field(CoefficientSpec::Legendre, 512);
        let op = assemble_operator(&a, &BoundarySpec::WeightedNeumann).unwrap();
        let dx = a.grid.dx();
        for (mode, lambda) in [
            (a.grid.sample(|x| x), 2.0),
            (a.grid.sample(|x| 1.5 * x * x - 0.5), 6.0),
        ] {
            let lu = op.apply(&mode);
            let err: f64 = lu
                .iter()
                .zip(&mode)
                .map(|(l, p)| (l + lambda * p).powi(2))
                .sum::<f64>()
                * dx;
            let norm: f64 = mode.iter().map(|p| p * p).sum::<f64>() * dx;
            assert!((err / norm).sqrt() < 1e-2, "{}", (err / norm).sqrt());
        }
    }

    #[test]
    fn symmetric() {
        for (spec, bc) in [
            (CoefficientSpec::Legendre, BoundarySpec::WeightedNeumann),
            (CoefficientSpec::Sqrt, BoundarySpec::DIRICHLET),
            (
                CoefficientSpec::Sqrt,
                BoundarySpec::Robin {
                    beta0: 1.0,
                    beta1: -1.0,
                    gamma0: 2.0,
                    gamma1: 1.0,
                },
            ),
        ] {
            let a = field(spec, 64);
            let op = assemble_operator(&a, &bc).unwrap();
            for i in 1..64 {
                assert_eq!(op.matrix.lower[i], op.matrix.upper[i - 1]);
            }
        }
    }

    #[test]
    fn rejects_robin_on_strong() {
        let a = field(CoefficientSpec::Legendre, 64);
        assert!(matches!(
            assemble_operator(&a, &BoundarySpec::DIRICHLET),
            Err(Error::InvalidPairing { .. })
        ));
    }
}
