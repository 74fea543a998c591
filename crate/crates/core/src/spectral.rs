//! Eigenpairs of the diffusion operator and the mild-solution propagator.

use crate::error::{Error, Result};
use crate::grid::SpatialGrid;
use crate::nonlinearity::NonlinearitySpec;
use crate::operator::DiscreteOperator;
use crate::quadrature::gauss_legendre;
use crate::state::StateProfile;

/// Lowest `m` eigenpairs of `-L`: `L ω_p = -λ_p ω_p`, `Σ ω_p² dx = 1`.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    pub grid: SpatialGrid,
    pub lambdas: Vec<f64>,
    pub modes: Vec<Vec<f64>>,
}

impl EigenSystem {
    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    pub fn mode_profile(&self, p: usize) -> StateProfile {
        StateProfile {
            grid: self.grid.clone(),
            values: self.modes[p].clone(),
            time: 0.0,
        }
    }

    /// Coefficients ⟨u, ω_p⟩.
    pub fn project(&self, u: &[f64]) -> Vec<f64> {
        let dx = self.grid.dx();
        self.modes.iter().map(|w| dot(w, u) * dx).collect()
    }

    /// Σ c_p ω_p.
    pub fn synthesize(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.grid.n()];
        for (c, w) in coeffs.iter().zip(&self.modes) {
            for (o, v) in out.iter_mut().zip(w) {
                *o += c * v;
            }
        }
        out
    }

    /// Relative mass `1 - Σ⟨u,ω_p⟩² / ‖u‖²` not captured by the truncation.
    pub fn parseval_tail(&self, u: &StateProfile) -> f64 {
        let total = u.l2().powi(2);
        if total == 0.0 {
            return 0.0;
        }
        let captured: f64 = self.project(&u.values).iter().map(|c| c * c).sum();
        ((total - captured) / total).max(0.0)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Computes the `m` smallest eigenvalues of `-L` by Sturm bisection and the
/// corresponding modes by inverse iteration.
pub fn eigenpairs(op: &DiscreteOperator, m: usize) -> Result<EigenSystem> {
    let n = op.n();
    if m == 0 || m > n / 4 {
        return Err(Error::EigenFailure(format!(
            "m = {m} must lie in 1..={}",
            n / 4
        )));
    }
    let d: Vec<f64> = op.matrix.diag.iter().map(|v| -v).collect();
    let e: Vec<f64> = (1..n).map(|i| -op.matrix.lower[i]).collect();
    for i in 1..n {
        if (op.matrix.lower[i] - op.matrix.upper[i - 1]).abs()
            > 1e-12 * op.matrix.lower[i].abs().max(1.0)
        {
            return Err(Error::EigenFailure("operator is not symmetric".into()));
        }
    }
    // Gershgorin interval.
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let r = if i > 0 { e[i - 1].abs() } else { 0.0 } + if i + 1 < n { e[i].abs() } else { 0.0 };
        lo = lo.min(d[i] - r);
        hi = hi.max(d[i] + r);
    }
    let scale = hi.abs().max(lo.abs()).max(1.0);
    let mut lambdas = Vec::with_capacity(m);
    for k in 0..m {
        let (mut a, mut b) = (lo, hi);
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if sturm_count(&d, &e, mid) > k {
                b = mid;
            } else {
                a = mid;
            }
            if b - a <= 4.0 * f64::EPSILON * scale {
                break;
            }
        }
        lambdas.push(0.5 * (a + b));
    }
    let mut modes: Vec<Vec<f64>> = Vec::with_capacity(m);
    let dx = op.grid.dx();
    for (k, &lam) in lambdas.iter().enumerate() {
        let shift = lam - 1e-10 * scale;
        let mut v: Vec<f64> = (0..n)
            .map(|i| 1.0 + 0.5 * ((i as f64 + 1.0) * (k as f64 + 1.3)).sin())
            .collect();
        for _ in 0..4 {
            for (j, w) in modes.iter().enumerate() {
                if (lambdas[j] - lam).abs() < 1e-6 * scale {
                    let c = dot(w, &v) * dx;
                    v.iter_mut().zip(w).for_each(|(x, y)| *x -= c * y);
                }
            }
            v = solve_shifted(&d, &e, shift, v)?;
            let norm = (dot(&v, &v) * dx).sqrt();
            if !(norm.is_finite() && norm > 0.0) {
                return Err(Error::EigenFailure(format!(
                    "inverse iteration failed for mode {k}"
                )));
            }
            v.iter_mut().for_each(|x| *x /= norm);
        }
        let peak = v.iter().fold(0.0, |m: f64, x| m.max(x.abs()));
        if let Some(first) = v.iter().find(|x| x.abs() > 1e-8 * peak) {
            if *first < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
        }
        let residual = {
            let lv = op.apply(&v);
            (lv.iter()
                .zip(&v)
                .map(|(a, b)| (a + lam * b).powi(2))
                .sum::<f64>()
                * dx)
                .sqrt()
        };
        if residual > 1e-6 * scale {
            return Err(Error::EigenFailure(format!(
                "mode {k} residual {residual:e}"
            )));
        }
        modes.push(v);
    }
    Ok(EigenSystem {
        grid: op.grid.clone(),
        lambdas,
        modes,
    })
}

/// Number of eigenvalues of the symmetric tridiagonal (d, e) below `x`.
fn sturm_count(d: &[f64], e: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut q = d[0] - x;
    if q < 0.0 {
        count += 1;
    }
    for i in 1..d.len() {
        let denom = if q == 0.0 {
            f64::EPSILON * (e[i - 1].abs() + 1.0)
        } else {
            q
        };
        q = d[i] - x - e[i - 1] * e[i - 1] / denom;
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// Solves `(T - s I) v = b` by Gaussian elimination with partial pivoting.
fn solve_shifted(d: &[f64], e: &[f64], s: f64, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = d.len();
    // Row i holds entries at columns i, i+1, i+2 after elimination.
    let mut diag: Vec<f64> = d.iter().map(|v| v - s).collect();
    let mut up1: Vec<f64> = e.to_vec();
    up1.push(0.0);
    let mut up2 = vec![0.0; n];
    let mut low: Vec<f64> = e.to_vec();
    for i in 0..n - 1 {
        if low[i].abs() > diag[i].abs() {
            // swap rows i and i+1
            let (a0, a1, a2) = (diag[i], up1[i], up2[i]);
            diag[i] = low[i];
            up1[i] = diag[i + 1];
            up2[i] = up1[i + 1];
            let f = a0 / diag[i];
            diag[i + 1] = a1 - f * up1[i];
            up1[i + 1] = a2 - f * up2[i];
            b.swap(i, i + 1);
            b[i + 1] -= f * b[i];
        } else {
            let piv = if diag[i] == 0.0 {
                f64::EPSILON
            } else {
                diag[i]
            };
            diag[i] = piv;
            let f = low[i] / piv;
            diag[i + 1] -= f * up1[i];
            up1[i + 1] -= f * up2[i];
            b[i + 1] -= f * b[i];
        }
        low[i] = 0.0;
    }
    if diag[n - 1] == 0.0 {
        diag[n - 1] = f64::EPSILON;
    }
    for i in (0..n).rev() {
        let mut acc = b[i];
        if i + 1 < n {
            acc -= up1[i] * b[i + 1];
        }
        if i + 2 < n {
            acc -= up2[i] * b[i + 2];
        }
        b[i] = acc / diag[i];
    }
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::EigenFailure("non-finite inverse iterate".into()));
    }
    Ok(b)
}

/// Source of intermediate states `w(·, s)` for the Duhamel term, `s` measured
/// from the start of the propagation.
pub type StateOracle<'a> = &'a dyn Fn(f64) -> Result<StateProfile>;

/// Gauss nodes used for the Duhamel integral.
pub const DUHAMEL_NODES: usize = 8;

/// Mild solution at `u0.time + t1` for constant `alpha`:
/// `Σ e^{(α-λ_p) t1} ⟨u0, ω_p⟩ ω_p` plus the Duhamel integral of f along
/// states supplied by `oracle`.
pub fn propagate_mild(
    u0: &StateProfile,
    alpha: f64,
    f: &NonlinearitySpec,
    t1: f64,
    es: &EigenSystem,
    oracle: Option<StateOracle<'_>>,
) -> Result<StateProfile> {
    if u0.n() != es.grid.n() {
        return Err(Error::ShapeMismatch {
            expected: es.grid.n(),
            got: u0.n(),
        });
    }
    let mut coeffs: Vec<f64> = es
        .project(&u0.values)
        .iter()
        .zip(&es.lambdas)
        .map(|(c, l)| c * ((alpha - l) * t1).exp())
        .collect();
    if !f.is_zero() {
        let oracle = oracle.ok_or_else(|| {
            Error::Unsupported("nonzero f needs a solver callback for the Duhamel term".into())
        })?;
        let (nodes, weights) = gauss_legendre(DUHAMEL_NODES);
        let centers = es.grid.centers();
        for (xi, wq) in nodes.iter().zip(&weights) {
            let s = 0.5 * t1 * (xi + 1.0);
            let w = oracle(s)?;
            let fv: Vec<f64> = centers
                .iter()
                .zip(&w.values)
                .map(|(&x, &v)| f.eval(x, u0.time + s, v))
                .collect();
            for ((c, l), fp) in coeffs.iter_mut().zip(&es.lambdas).zip(es.project(&fv)) {
                *c += 0.5 * t1 * wq * ((alpha - l) * (t1 - s)).exp() * fp;
            }
        }
    }
    Ok(StateProfile {
        grid: es.grid.clone(),
        values: es.synthesize(&coeffs),
        time: u0.time + t1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary::BoundarySpec;
    use crate::coefficient::{eval_coefficient, CoefficientSpec};
    use crate::grid::build_grid;
    use crate::operator::assemble_operator;

    fn legendre(n: usize) -> DiscreteOperator {
        let g = build_grid(n).unwrap();
        let a = eval_coefficient(&CoefficientSpec::Legendre, &g).unwrap();
        assemble_operator(&a, &BoundarySpec::WeightedNeumann).unwrap()
    }

    #[test]
    fn legendre_spectrum() {
        let es = eigenpairs(&legendre(256), 6).unwrap();
        for (p, l) in es.lambdas.iter().enumerate() {
            let exact = (p * (p + 1)) as f64;
            assert!(
                (l - exact).abs() <= 0.01 * exact.max(1e-8) + 1e-9,
                "{p}: {l}"
            );
        }
    }

    #[test]
    fn first_mode_is_constant() {
        let es = eigenpairs(&legendre(128), 3).unwrap();
        let c = 1.0 / 2f64.sqrt();
        assert!(es.modes[0].iter().all(|v| (v - c).abs() < 1e-8));
    }

    #[test]
    fn orthonormal() {
        let es = eigenpairs(&legendre(128), 12).unwrap();
        let dx = es.grid.dx();
        for i in 0..12 {
            for j in 0..12 {
                let g = dot(&es.modes[i], &es.modes[j]) * dx;
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((g - want).abs() < 1e-8, "{i},{j}: {g}");
            }
        }
    }

    #[test]
    fn sturm_counts_diagonal() {
        let d = [1.0, 2.0, 3.0];
        let e = [0.0, 0.0];
        assert_eq!(sturm_count(&d, &e, 0.5), 0);
        assert_eq!(sturm_count(&d, &e, 2.5), 2);
        assert_eq!(sturm_count(&d, &e, 10.0), 3);
    }

    #[test]
    fn mode_decay_and_amplification() {
        let es = eigenpairs(&legendre(128), 8).unwrap();
        let u0 = es.mode_profile(3);
        let t = 0.05;
        let m: f64 = 3.0;
        let out = propagate_mild(&u0, m.ln() / t, &NonlinearitySpec::zero(), t, &es, None).unwrap();
        let factor = m * (-es.lambdas[3] * t).exp();
        for (o, v) in out.values.iter().zip(&u0.values) {
            assert!((o - factor * v).abs() < 1e-10);
        }
    }

    #[test]
    fn constant_unchanged() {
        let es = eigenpairs(&legendre(128), 8).unwrap();
        let u0 = StateProfile::from_fn(&es.grid, 0.0, |_| 0.7);
        let out = propagate_mild(&u0, 0.0, &NonlinearitySpec::zero(), 0.3, &es, None).unwrap();
        assert!(out.values.iter().all(|v| (v - 0.7).abs() < 1e-10));
    }

    #[test]
    fn nonlinear_needs_oracle() {
        let es = eigenpairs(&legendre(64), 4).unwrap();
        let u0 = StateProfile::from_fn(&es.grid, 0.0, |x| x);
        let f = NonlinearitySpec::linear(-1.0).unwrap();
        assert!(matches!(
            propagate_mild(&u0, 0.0, &f, 0.1, &es, None),
            Err(Error::Unsupported(_))
        ));
    }
}
