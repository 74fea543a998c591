//! Degenerate diffusion coefficients a(x) on [-1, 1] with a(±1) = 0.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::SpatialGrid;
use crate::quadrature::{gauss_legendre, integrate};

/// Closed-form or tabulated description of a(x).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "lowercase")]
pub enum CoefficientSpec {
    /// a(x) = 1 - x^2
    Legendre,
    /// a(x) = sqrt(1 - x^2)
    Sqrt,
    /// a(x) = (1 - x^2)^exponent
    Power { exponent: f64 },
    /// Piecewise-linear interpolation of tabulated samples.
    Table { x: Vec<f64>, a: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Degeneracy {
    /// 1/a is integrable on (-1, 1).
    Weak,
    /// 1/a is not integrable on (-1, 1).
    Strong,
}

impl Degeneracy {
    pub fn label(self) -> &'static str {
        match self {
            Degeneracy::Weak => "WDP",
            Degeneracy::Strong => "SDP",
        }
    }
}

impl CoefficientSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            CoefficientSpec::Power { exponent } if !(*exponent > 0.0 && exponent.is_finite()) => {
                Err(Error::InvalidCoefficient(format!(
                    "power exponent {exponent} must be positive"
                )))
            }
            CoefficientSpec::Table { x, a } => {
                if x.len() != a.len() || x.len() < 3 {
                    return Err(Error::InvalidCoefficient(
                        "table needs matching x/a columns with at least 3 rows".into(),
                    ));
                }
                if x[0] != -1.0 || x[x.len() - 1] != 1.0 {
                    return Err(Error::InvalidCoefficient("table must span [-1, 1]".into()));
                }
                if x.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::InvalidCoefficient(
                        "table abscissae must increase".into(),
                    ));
                }
                if a.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidCoefficient(
                        "table values must be finite".into(),
                    ));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        let q = (1.0 - x) * (1.0 + x);
        match self {
            CoefficientSpec::Legendre => q,
            CoefficientSpec::Sqrt => q.max(0.0).sqrt(),
            CoefficientSpec::Power { exponent } => q.max(0.0).powf(*exponent),
            CoefficientSpec::Table { x: xs, a } => {
                let i = table_segment(xs, x);
                let t = (x - xs[i]) / (xs[i + 1] - xs[i]);
                a[i] + t * (a[i + 1] - a[i])
            }
        }
    }

    /// a'(x) for interior x.
    pub fn derivative(&self, x: f64) -> f64 {
        let q = (1.0 - x) * (1.0 + x);
        match self {
            CoefficientSpec::Legendre => -2.0 * x,
            CoefficientSpec::Sqrt => -x / q.sqrt(),
            CoefficientSpec::Power { exponent } => -2.0 * exponent * x * q.powf(exponent - 1.0),
            CoefficientSpec::Table { x: xs, a } => {
                let i = table_segment(xs, x);
                (a[i + 1] - a[i]) / (xs[i + 1] - xs[i])
            }
        }
    }
}

fn table_segment(xs: &[f64], x: f64) -> usize {
    let k = xs.partition_point(|&v| v <= x);
    k.clamp(1, xs.len() - 1) - 1
}

/// a(x) sampled on a grid together with its degeneracy class.
#[derive(Debug, Clone)]
pub struct CoefficientField {
    pub spec: CoefficientSpec,
    pub grid: SpatialGrid,
    pub values_at_faces: Vec<f64>,
    pub values_at_centers: Vec<f64>,
    pub derivative_at_centers: Vec<f64>,
    pub degeneracy: Degeneracy,
    /// ∫|ξ_a| over (-1, 1) with ξ_a(x) = ∫_0^x 1/a, recorded for strongly
    /// degenerate coefficients.
    pub xi_a_moment: Option<f64>,
}

/// Samples `spec` on `grid` and classifies its degeneracy.
pub fn eval_coefficient(spec: &CoefficientSpec, grid: &SpatialGrid) -> Result<CoefficientField> {
    spec.validate()?;
    for x in [-1.0, 1.0] {
        let v = spec.value(x);
        if v.abs() > 1e-12 {
            return Err(Error::InvalidCoefficient(format!(
                "a({x}) = {v}, must vanish"
            )));
        }
    }
    let mut values_at_faces: Vec<f64> = grid.faces().iter().map(|&x| spec.value(x)).collect();
    let n = grid.n();
    values_at_faces[0] = 0.0;
    values_at_faces[n] = 0.0;
    let values_at_centers = grid.sample(|x| spec.value(x));
    let derivative_at_centers = grid.sample(|x| spec.derivative(x));
    for (i, &v) in values_at_faces.iter().enumerate().take(n).skip(1) {
        if !(v > 0.0) {
            return Err(Error::InvalidCoefficient(format!(
                "a = {v} at interior face x = {}",
                grid.faces()[i]
            )));
        }
    }
    if let Some((i, v)) = values_at_centers
        .iter()
        .enumerate()
        .find(|(_, v)| !(**v > 0.0))
    {
        return Err(Error::InvalidCoefficient(format!(
            "a = {v} at cell center x = {}",
            grid.centers()[i]
        )));
    }
    let degeneracy = classify_degeneracy(spec);
    let xi_a_moment = match degeneracy {
        Degeneracy::Weak => None,
        Degeneracy::Strong => Some(xi_moment(spec, 1.0).ok_or_else(|| {
            Error::InvalidCoefficient("ξ_a is not integrable for this strongly degenerate a".into())
        })?),
    };
    Ok(CoefficientField {
        spec: spec.clone(),
        grid: grid.clone(),
        values_at_faces,
        values_at_centers,
        derivative_at_centers,
        degeneracy,
        xi_a_moment,
    })
}

impl CoefficientField {
    pub fn value(&self, x: f64) -> f64 {
        self.spec.value(x)
    }

    pub fn derivative(&self, x: f64) -> f64 {
        self.spec.derivative(x)
    }

    /// ∫|ξ_a|^{2θ-1}; `None` when the integral diverges.
    pub fn xi_moment(&self, theta: f64) -> Option<f64> {
        xi_moment(&self.spec, theta)
    }
}

/// Truncated integrals ∫ 1/a over (-1 + 2^-j, 1 - 2^-j), j = 4..=20.
pub fn truncated_inverse_integrals(spec: &CoefficientSpec) -> Vec<f64> {
    let rule = gauss_legendre(16);
    let inv = |x: f64| 1.0 / spec.value(x);
    let inner = 1.0 - 2f64.powi(-4);
    let panels = 64;
    let h = 2.0 * inner / panels as f64;
    let mut total: f64 = (0..panels)
        .map(|p| {
            let a = -inner + p as f64 * h;
            integrate(inv, a, a + h, &rule)
        })
        .sum();
    let mut out = vec![total];
    for j in 5..=20 {
        let outer = 1.0 - 2f64.powi(-j);
        let prev = 1.0 - 2f64.powi(-(j - 1));
        total += integrate(inv, -outer, -prev, &rule) + integrate(inv, prev, outer, &rule);
        out.push(total);
    }
    out
}

/// Divergence test on the dyadic truncations of ∫ 1/a. The sequence is
/// accelerated with Aitken's Δ² and counted as convergent when the increments
/// contract geometrically and the accelerated limits agree to 1e-6 relative.
pub fn classify_degeneracy(spec: &CoefficientSpec) -> Degeneracy {
    let seq = truncated_inverse_integrals(spec);
    let d: Vec<f64> = seq.windows(2).map(|w| w[1] - w[0]).collect();
    let k = d.len();
    let ratio = d[k - 1] / d[k - 2];
    let aitken = |i: usize| {
        let denom = d[i + 1] - d[i];
        if denom == 0.0 {
            seq[i + 2]
        } else {
            seq[i + 2] - d[i + 1] * d[i + 1] / denom
        }
    };
    let last = aitken(k - 2);
    let prev = aitken(k - 3);
    let contracting = ratio.is_finite() && ratio < 0.999;
    if contracting && last.is_finite() && (last - prev).abs() <= 1e-6 * last.abs() {
        Degeneracy::Weak
    } else {
        Degeneracy::Strong
    }
}

fn xi_moment(spec: &CoefficientSpec, theta: f64) -> Option<f64> {
    let p = 2.0 * theta - 1.0;
    let rule = gauss_legendre(16);
    let mut total = 0.0;
    for side in [1.0, -1.0] {
        // x = side * s, s in [0, 1); ξ_a is odd-like in orientation, only |ξ| matters.
        let inv = |s: f64| 1.0 / spec.value(side * s);
        let mut start = 0.0;
        let mut xi_start = 0.0;
        let mut converged = false;
        let mut small_run = 0;
        for j in 1..=52 {
            let end = 1.0 - 2f64.powi(-j);
            let half = 0.5 * (end - start);
            let mid = 0.5 * (end + start);
            let mut contrib = 0.0;
            for (&t, &w) in rule.0.iter().zip(&rule.1) {
                let s = mid + half * t;
                let xi = xi_start + integrate(inv, start, s, &rule);
                contrib += w * xi.abs().powf(p);
            }
            contrib *= half;
            xi_start += integrate(inv, start, end, &rule);
            start = end;
            total += contrib;
            if !contrib.is_finite() {
                return None;
            }
            if j > 6 && contrib <= 1e-12 * total {
                small_run += 1;
                if small_run >= 3 {
                    converged = true;
                    break;
                }
            } else {
                small_run = 0;
            }
        }
        if !converged {
            return None;
        }
    }
    Some(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;

    #[test]
    fn legendre_is_strong() {
        for n in [64, 128, 512, 1024] {
            let g = build_grid(n).unwrap();
            let f = eval_coefficient(&CoefficientSpec::Legendre, &g).unwrap();
            assert_eq!(f.degeneracy, Degeneracy::Strong);
        }
    }

    #[test]
    fn sqrt_is_weak() {
        for n in [64, 128, 512, 1024] {
            let g = build_grid(n).unwrap();
            let f = eval_coefficient(&CoefficientSpec::Sqrt, &g).unwrap();
            assert_eq!(f.degeneracy, Degeneracy::Weak);
            assert!(f.xi_a_moment.is_none());
        }
    }

    #[test]
    fn power_family() {
        assert_eq!(
            classify_degeneracy(&CoefficientSpec::Power { exponent: 0.75 }),
            Degeneracy::Weak
        );
        assert_eq!(
            classify_degeneracy(&CoefficientSpec::Power { exponent: 1.5 }),
            Degeneracy::Strong
        );
    }

    #[test]
    fn derivative_of_legendre() {
        assert_eq!(CoefficientSpec::Legendre.derivative(0.5), -1.0);
    }

    #[test]
    fn xi_moment_legendre() {
        // ∫_{-1}^{1} |½ log((1+x)/(1-x))| dx = 2 log 2
        let m = xi_moment(&CoefficientSpec::Legendre, 1.0).unwrap();
        assert!((m - 2.0 * std::f64::consts::LN_2).abs() < 1e-8, "{m}");
    }

    #[test]
    fn xi_moment_diverges_for_quadratic_vanishing() {
        assert!(xi_moment(&CoefficientSpec::Power { exponent: 2.0 }, 1.0).is_none());
    }

    #[test]
    fn rejects_nonvanishing_endpoint() {
        let g = build_grid(16).unwrap();
        let spec = CoefficientSpec::Table {
            x: vec![-1.0, 0.0, 1.0],
            a: vec![0.1, 1.0, 0.0],
        };
        assert!(matches!(
            eval_coefficient(&spec, &g),
            Err(Error::InvalidCoefficient(_))
        ));
    }

    #[test]
    fn rejects_interior_zero() {
        let g = build_grid(16).unwrap();
        let spec = CoefficientSpec::Table {
            x: vec![-1.0, 0.0, 1.0],
            a: vec![0.0, 0.0, 0.0],
        };
        assert!(matches!(
            eval_coefficient(&spec, &g),
            Err(Error::InvalidCoefficient(_))
        ));
    }

    #[test]
    fn table_interpolates() {
        let spec = CoefficientSpec::Table {
            x: vec![-1.0, 0.0, 1.0],
            a: vec![0.0, 1.0, 0.0],
        };
        assert_eq!(spec.value(0.5), 0.5);
        assert_eq!(spec.derivative(0.5), -1.0);
        assert_eq!(spec.derivative(-0.5), 1.0);
        let g = build_grid(16).unwrap();
        let f = eval_coefficient(&spec, &g).unwrap();
        assert_eq!(f.degeneracy, Degeneracy::Strong);
    }
}
