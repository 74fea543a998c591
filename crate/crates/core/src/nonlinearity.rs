//! Reaction nonlinearities f(x, t, u) with their growth constants.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

type Eval = dyn Fn(f64, f64, f64) -> f64 + Send + Sync;

/// A nonlinearity with `|f(x,t,u)| ≤ γ*|u|^θ` and one-sided constant ν.
#[derive(Clone)]
pub struct NonlinearitySpec {
    pub name: String,
    eval: Arc<Eval>,
    pub theta: f64,
    pub gamma_star: f64,
    pub nu: f64,
    zero: bool,
}

impl fmt::Debug for NonlinearitySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NonlinearitySpec")
            .field("name", &self.name)
            .field("theta", &self.theta)
            .field("gamma_star", &self.gamma_star)
            .field("nu", &self.nu)
            .finish()
    }
}

const SAMPLE_X: [f64; 7] = [-0.99, -0.7, -0.3, 0.0, 0.25, 0.6, 0.99];
const SAMPLE_T: [f64; 3] = [0.0, 0.5, 1.0];
const SAMPLE_U: [f64; 11] = [-3.0, -1.5, -1.0, -0.4, -0.05, 0.0, 0.01, 0.3, 1.0, 2.0, 3.5];

impl NonlinearitySpec {
    /// The identically zero nonlinearity.
    pub fn zero() -> Self {
        Self {
            name: "zero".into(),
            eval: Arc::new(|_, _, _| 0.0),
            theta: 1.0,
            gamma_star: 0.0,
            nu: 0.0,
            zero: true,
        }
    }

    /// Registers `eval` after spot-checking `f(·,·,0) = 0`, the growth bound
    /// and the two-sided monotonicity bounds
    /// `-ν(1+|u|^{θ-1}+|v|^{θ-1})(u-v)² ≤ (f(u)-f(v))(u-v) ≤ ν(u-v)²`
    /// on a fixed sample set.
    pub fn register<F>(name: &str, eval: F, theta: f64, gamma_star: f64, nu: f64) -> Result<Self>
    where
        F: Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
    {
        if !(theta >= 1.0) || !(gamma_star >= 0.0) || !(nu >= 0.0) {
            return Err(Error::InvalidNonlinearity(format!(
                "{name}: need θ ≥ 1, γ* ≥ 0, ν ≥ 0 (got {theta}, {gamma_star}, {nu})"
            )));
        }
        for &x in &SAMPLE_X {
            for &t in &SAMPLE_T {
                let f0 = eval(x, t, 0.0);
                if f0 != 0.0 {
                    return Err(Error::InvalidNonlinearity(format!(
                        "{name}: f({x},{t},0) = {f0}, must vanish"
                    )));
                }
                for &u in &SAMPLE_U {
                    let fu = eval(x, t, u);
                    let bound = gamma_star * u.abs().powf(theta);
                    if !fu.is_finite() || fu.abs() > bound * (1.0 + 1e-9) + 1e-12 {
                        return Err(Error::InvalidNonlinearity(format!(
                            "{name}: |f({x},{t},{u})| = {} exceeds γ*|u|^θ = {bound}",
                            fu.abs()
                        )));
                    }
                    for &v in &SAMPLE_U {
                        let lhs = (fu - eval(x, t, v)) * (u - v);
                        let d2 = (u - v) * (u - v);
                        let lower = -nu
                            * (1.0 + u.abs().powf(theta - 1.0) + v.abs().powf(theta - 1.0))
                            * d2;
                        if lhs > nu * d2 * (1.0 + 1e-9) + 1e-12
                            || lhs < lower * (1.0 + 1e-9) - 1e-12
                        {
                            return Err(Error::InvalidNonlinearity(format!(
                                "{name}: monotonicity bounds with ν = {nu} violated at u = {u}, v = {v}"
                            )));
                        }
                    }
                }
            }
        }
        Ok(Self {
            name: name.into(),
            eval: Arc::new(eval),
            theta,
            gamma_star,
            nu,
            zero: false,
        })
    }

    /// f(u) = rate·u.
    pub fn linear(rate: f64) -> Result<Self> {
        if rate == 0.0 {
            return Ok(Self::zero());
        }
        Self::register(
            "linear",
            move |_, _, u| rate * u,
            1.0,
            rate.abs(),
            rate.abs(),
        )
    }

    /// f(u) = c·min(|u|^{θ-1}, 1)·u − |u|^{θ-1}·u, the standard admissible
    /// superlinear example.
    pub fn saturating(c: f64, theta: f64) -> Result<Self> {
        let gamma = c.abs() + 1.0;
        let nu = (c.abs() + 1.0) * theta;
        Self::register(
            "saturating",
            move |_, _, u| {
                let p = u.abs().powf(theta - 1.0);
                c * p.min(1.0) * u - p * u
            },
            theta,
            gamma,
            nu,
        )
    }

    pub fn is_zero(&self) -> bool {
        self.zero
    }

    #[inline]
    pub fn eval(&self, x: f64, t: f64, u: f64) -> f64 {
        (self.eval)(x, t, u)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registered_models_vanish_at_zero() {
        for f in [
            NonlinearitySpec::zero(),
            NonlinearitySpec::linear(-0.7).unwrap(),
            NonlinearitySpec::saturating(0.5, 2.0).unwrap(),
            NonlinearitySpec::saturating(-1.0, 3.0).unwrap(),
        ] {
            assert_eq!(f.eval(0.3, 0.2, 0.0), 0.0);
        }
    }

    #[test]
    fn rejects_growth_violation() {
        let r = NonlinearitySpec::register("bad", |_, _, u| 5.0 * u, 1.0, 1.0, 5.0);
        assert!(matches!(r, Err(Error::InvalidNonlinearity(_))));
    }

    #[test]
    fn rejects_nonzero_origin() {
        let r = NonlinearitySpec::register("shifted", |_, _, u| 1.0 + u, 1.0, 10.0, 1.0);
        assert!(r.is_err());
    }

    #[test]
    fn rejects_superlinear_growth_without_dissipation() {
        let r = NonlinearitySpec::register("cubic", |_, _, u| u * u * u, 3.0, 1.0, 3.0);
        assert!(r.is_err());
    }

    #[test]
    fn rejects_one_sided_violation() {
        let r = NonlinearitySpec::register("growth", |_, _, u| 2.0 * u, 1.0, 2.0, 1.0);
        assert!(r.is_err());
    }
}
