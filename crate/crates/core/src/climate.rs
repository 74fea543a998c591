//! Budyko–Sellers energy-balance nonlinearities in anomaly form.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nonlinearity::NonlinearitySpec;

/// Insolation distribution S(x).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InsolationProfile {
    /// "constant": S ≡ 1.
    Named(String),
    /// Values on a uniform grid of [-1, 1], interpolated linearly.
    Table(Vec<f64>),
}

impl Default for InsolationProfile {
    fn default() -> Self {
        InsolationProfile::Named("constant".into())
    }
}

impl InsolationProfile {
    pub fn validate(&self) -> Result<()> {
        match self {
            InsolationProfile::Named(s) if s == "constant" => Ok(()),
            InsolationProfile::Named(s) => {
                Err(Error::Config(format!("unknown insolation profile {s:?}")))
            }
            InsolationProfile::Table(v)
                if v.len() >= 2 && v.iter().all(|s| s.is_finite() && *s >= 0.0) =>
            {
                Ok(())
            }
            InsolationProfile::Table(_) => Err(Error::Config(
                "insolation table needs ≥ 2 finite nonnegative values".into(),
            )),
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        match self {
            InsolationProfile::Named(_) => 1.0,
            InsolationProfile::Table(v) => {
                let s = ((x.clamp(-1.0, 1.0) + 1.0) * 0.5) * (v.len() - 1) as f64;
                let i = (s.floor() as usize).min(v.len() - 2);
                let t = s - i as f64;
                v[i] + t * (v[i + 1] - v[i])
            }
        }
    }

    fn max(&self) -> f64 {
        match self {
            InsolationProfile::Named(_) => 1.0,
            InsolationProfile::Table(v) => v.iter().copied().fold(0.0, f64::max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SellersParams {
    #[serde(rename = "Q")]
    pub q: f64,
    #[serde(default, rename = "S")]
    pub s_profile: InsolationProfile,
    pub a_i: f64,
    pub a_f: f64,
    #[serde(default = "default_us")]
    pub u_s: f64,
    #[serde(rename = "eta")]
    pub eta_smooth: f64,
    #[serde(rename = "sigma")]
    pub sigma_sb: f64,
    #[serde(rename = "m")]
    pub m_opacity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudykoParams {
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "B")]
    pub b: f64,
    #[serde(rename = "Q")]
    pub q: f64,
    #[serde(default, rename = "S")]
    pub s_profile: InsolationProfile,
    pub a_i: f64,
    pub a_f: f64,
    #[serde(default = "default_us")]
    pub u_s: f64,
    /// Half-width of the coalbedo ramp that replaces the jump at u_s.
    #[serde(default = "default_eta", rename = "eta")]
    pub eta_smooth: f64,
}

fn default_us() -> f64 {
    263.15
}

fn default_eta() -> f64 {
    1.0
}

fn check_coalbedo(a_i: f64, a_f: f64, eta: f64) -> Result<()> {
    if !(0.0 < a_i && a_i < a_f && a_f < 1.0) {
        return Err(Error::Config(format!(
            "coalbedo needs 0 < a_i < a_f < 1 (got {a_i}, {a_f})"
        )));
    }
    if !(eta > 0.0) {
        return Err(Error::Config(format!(
            "transition half-width η = {eta} must be positive"
        )));
    }
    Ok(())
}

impl SellersParams {
    pub fn validate(&self) -> Result<()> {
        check_coalbedo(self.a_i, self.a_f, self.eta_smooth)?;
        if !(self.m_opacity > 0.0) || !(self.sigma_sb > 0.0) {
            return Err(Error::Config("Sellers law needs σ > 0 and m > 0".into()));
        }
        self.s_profile.validate()
    }
}

impl BudykoParams {
    pub fn validate(&self) -> Result<()> {
        check_coalbedo(self.a_i, self.a_f, self.eta_smooth)?;
        if !(self.b > 0.0) {
            return Err(Error::Config(format!(
                "Budyko slope B = {} must be positive",
                self.b
            )));
        }
        self.s_profile.validate()
    }
}

fn ramp(u: f64, a_i: f64, a_f: f64, u_s: f64, eta: f64) -> f64 {
    if u <= u_s - eta {
        a_i
    } else if u >= u_s + eta {
        a_f
    } else {
        a_i + (a_f - a_i) * (u - u_s + eta) / (2.0 * eta)
    }
}

/// Piecewise linear coalbedo between a_i and a_f around the snow line.
pub fn sellers_coalbedo(u: f64, p: &SellersParams) -> f64 {
    ramp(u, p.a_i, p.a_f, p.u_s, p.eta_smooth)
}

/// R_e(u) = A + B u.
pub fn budyko_emission(u: f64, p: &BudykoParams) -> f64 {
    p.a + p.b * u
}

/// R_e(u) = σ(1 - m tanh(19u⁶/10⁶))u⁴ for u ≥ 0 (Kelvin).
pub fn sellers_emission(u: f64, p: &SellersParams) -> Result<f64> {
    if u < 0.0 {
        return Err(Error::Domain(format!(
            "temperature {u} K is below absolute zero"
        )));
    }
    Ok(p.sigma_sb * (1.0 - p.m_opacity * (19.0 * u.powi(6) / 1e6).tanh()) * u.powi(4))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum EbmModel {
    Budyko(BudykoParams),
    Sellers(SellersParams),
}

/// Anomaly formulation: u is measured from `reference` (K) and the reaction
/// is evaluated with u clamped to `range`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EbmBlock {
    #[serde(flatten)]
    pub model: EbmModel,
    #[serde(default = "default_reference")]
    pub reference: f64,
    #[serde(default = "default_range")]
    pub range: [f64; 2],
}

fn default_reference() -> f64 {
    288.15
}

fn default_range() -> [f64; 2] {
    [-40.0, 40.0]
}

const FIT_SAMPLES: usize = 4001;

/// Builds f(x, u) = Q S(x) β(u_ref + u) - R_e(u_ref + u) minus its value at
/// u = 0, with θ = 1 and γ*, ν fitted on the clamped anomaly range.
pub fn make_ebm_nonlinearity(block: &EbmBlock) -> Result<NonlinearitySpec> {
    let [lo, hi] = block.range;
    if !(lo < 0.0 && hi > 0.0) {
        return Err(Error::Config(format!(
            "anomaly range [{lo}, {hi}] must contain 0 in its interior"
        )));
    }
    if block.reference + lo < 0.0 {
        return Err(Error::Domain(format!(
            "anomaly range reaches {} K, below absolute zero",
            block.reference + lo
        )));
    }
    let uref = block.reference;
    // absorbed(T) per unit insolation, emitted(T)
    let (q, profile, absorbed, emitted): (
        f64,
        InsolationProfile,
        Box<dyn Fn(f64) -> f64 + Send + Sync>,
        Box<dyn Fn(f64) -> f64 + Send + Sync>,
    ) = match &block.model {
        EbmModel::Budyko(p) => {
            p.validate()?;
            let (c, e) = (p.clone(), p.clone());
            (
                p.q,
                p.s_profile.clone(),
                Box::new(move |t| ramp(t, c.a_i, c.a_f, c.u_s, c.eta_smooth)),
                Box::new(move |t| budyko_emission(t, &e)),
            )
        }
        EbmModel::Sellers(p) => {
            p.validate()?;
            let (c, e) = (p.clone(), p.clone());
            (
                p.q,
                p.s_profile.clone(),
                Box::new(move |t| sellers_coalbedo(t, &c)),
                Box::new(move |t| sellers_emission(t.max(0.0), &e).unwrap_or(0.0)),
            )
        }
    };
    let b0 = absorbed(uref);
    let e0 = emitted(uref);
    // f = Q S(x) [β(T) - β(T_ref)] - [R_e(T) - R_e(T_ref)]; fit the two parts
    // separately since S(x) ≥ 0 only scales the first.
    let grid: Vec<f64> = (0..FIT_SAMPLES)
        .map(|i| lo + (hi - lo) * i as f64 / (FIT_SAMPLES - 1) as f64)
        .collect();
    let db: Vec<f64> = grid.iter().map(|&u| absorbed(uref + u) - b0).collect();
    let de: Vec<f64> = grid.iter().map(|&u| emitted(uref + u) - e0).collect();
    let smax = q.abs() * profile.max();
    let mut gamma: f64 = 0.0;
    let mut slope_hi: f64 = 0.0;
    let mut slope_lo: f64 = 0.0;
    for i in 0..FIT_SAMPLES {
        if grid[i] != 0.0 {
            gamma = gamma.max((smax * db[i].abs() + de[i].abs()) / grid[i].abs());
        }
        if i + 1 < FIT_SAMPLES {
            let h = grid[i + 1] - grid[i];
            let sb = (db[i + 1] - db[i]) / h;
            let se = (de[i + 1] - de[i]) / h;
            // S(x) ∈ [0, max S], so the slope of f lies between these two
            let term = q * profile.max() * sb;
            slope_hi = slope_hi.max(term.max(0.0) - se);
            slope_lo = slope_lo.min(term.min(0.0) - se);
        }
    }
    let margin = 1.0 + 1e-6;
    let nu = slope_hi.max(-slope_lo).max(0.0) * margin + 1e-12;
    let gamma = gamma * margin + 1e-12;
    let name = match block.model {
        EbmModel::Budyko(_) => "ebm-budyko",
        EbmModel::Sellers(_) => "ebm-sellers",
    };
    NonlinearitySpec::register(
        name,
        move |x, _, u| {
            if u == 0.0 {
                return 0.0;
            }
            let t = uref + u.clamp(lo, hi);
            q * profile.value(x) * (absorbed(t) - b0) - (emitted(t) - e0)
        },
        1.0,
        gamma,
        nu,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sellers() -> SellersParams {
        SellersParams {
            q: 340.0,
            s_profile: InsolationProfile::default(),
            a_i: 0.38,
            a_f: 0.71,
            u_s: 263.15,
            eta_smooth: 2.0,
            sigma_sb: 5.67e-8,
            m_opacity: 0.5,
        }
    }

    fn budyko(q: f64) -> BudykoParams {
        BudykoParams {
            a: 202.0,
            b: 1.9,
            q,
            s_profile: InsolationProfile::default(),
            a_i: 0.38,
            a_f: 0.71,
            u_s: 263.15,
            eta_smooth: 1.0,
        }
    }

    #[test]
    fn coalbedo_ramp() {
        let p = sellers();
        assert_eq!(sellers_coalbedo(p.u_s - 2.0 * p.eta_smooth, &p), p.a_i);
        assert!((sellers_coalbedo(p.u_s, &p) - 0.5 * (p.a_i + p.a_f)).abs() < 1e-15);
        assert_eq!(sellers_coalbedo(p.u_s + p.eta_smooth, &p), p.a_f);
        let mut prev = 0.0;
        for i in 0..400 {
            let b = sellers_coalbedo(250.0 + 0.05 * i as f64, &p);
            assert!(b >= prev);
            prev = b;
        }
    }

    #[test]
    fn emission_laws() {
        let mut p = budyko(0.0);
        assert_eq!(budyko_emission(0.0, &p), 202.0);
        p.a = 0.0;
        p.b = 1.0;
        assert_eq!(budyko_emission(288.15, &p), 288.15);
        let mut s = sellers();
        assert_eq!(sellers_emission(0.0, &s).unwrap(), 0.0);
        assert!(matches!(sellers_emission(-1.0, &s), Err(Error::Domain(_))));
        s.m_opacity = 0.0;
        let u: f64 = 250.0;
        assert!((sellers_emission(u, &s).unwrap() - 5.67e-8 * u.powi(4)).abs() < 1e-12);
    }

    #[test]
    fn sellers_monotone_small_m() {
        let mut s = sellers();
        s.m_opacity = 0.1;
        let mut prev = -1.0;
        for i in 0..=200 {
            let e = sellers_emission(200.0 + i as f64, &s).unwrap();
            assert!(e > prev);
            prev = e;
        }
    }

    #[test]
    fn budyko_without_sun_is_linear_decay() {
        let block = EbmBlock {
            model: EbmModel::Budyko(budyko(0.0)),
            reference: 288.15,
            range: [-40.0, 40.0],
        };
        let f = make_ebm_nonlinearity(&block).unwrap();
        for u in [-3.0, -0.5, 0.7, 2.5] {
            assert!((f.eval(0.3, 0.0, u) + 1.9 * u).abs() < 1e-12);
        }
        assert!((f.nu - 1.9).abs() < 1e-5);
        assert_eq!(f.theta, 1.0);
    }

    #[test]
    fn constant_coalbedo_gives_affine_recentering() {
        // far above the snow line β is constant
        let block = EbmBlock {
            model: EbmModel::Budyko(budyko(340.0)),
            reference: 320.0,
            range: [-20.0, 20.0],
        };
        let f = make_ebm_nonlinearity(&block).unwrap();
        assert!((f.eval(0.0, 0.0, 1.5) + 1.9 * 1.5).abs() < 1e-10);
        assert!((f.nu - 1.9).abs() < 1e-5);
    }

    #[test]
    fn sellers_recentered() {
        let block = EbmBlock {
            model: EbmModel::Sellers(sellers()),
            reference: 265.0,
            range: [-20.0, 20.0],
        };
        let f = make_ebm_nonlinearity(&block).unwrap();
        for x in [-0.9, 0.0, 0.5] {
            assert_eq!(f.eval(x, 0.0, 0.0), 0.0);
        }
        assert!(f.gamma_star > 0.0 && f.nu > 0.0);
    }

    #[test]
    fn table_profile() {
        let s = InsolationProfile::Table(vec![0.5, 1.0, 0.5]);
        assert_eq!(s.value(-1.0), 0.5);
        assert_eq!(s.value(0.0), 1.0);
        assert!((s.value(0.5) - 0.75).abs() < 1e-15);
        assert!(InsolationProfile::Named("seasonal".into())
            .validate()
            .is_err());
    }

    #[test]
    fn config_block_parses() {
        let j = r#"{"model":"budyko","A":202,"B":1.9,"Q":0,"a_i":0.38,"a_f":0.71}"#;
        let b: EbmBlock = serde_json::from_str(j).unwrap();
        assert!(matches!(b.model, EbmModel::Budyko(ref p) if p.b == 1.9 && p.u_s == 263.15));
        assert_eq!(b.reference, 288.15);
    }
}
