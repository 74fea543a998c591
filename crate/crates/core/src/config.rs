//! Scenario configuration: one JSON document per run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::boundary::BoundarySpec;
use crate::climate::{make_ebm_nonlinearity, EbmBlock};
use crate::coefficient::{eval_coefficient, CoefficientField, CoefficientSpec, Degeneracy};
use crate::error::{Error, Result};
use crate::grid::build_grid;
use crate::nonlinearity::NonlinearitySpec;
use crate::operator::assemble_operator;
use crate::solver::Solver;
use crate::state::StateProfile;
use crate::steering::SteeringConfig;
use crate::synthesis::{build_initial_datum, pattern_tol, DatumPrescription};
use crate::zeros::detect_sign_changes;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Eigen,
    Evolve,
    Steer,
}

/// A coefficient given by name ("legendre", "sqrt") or as a tagged object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CoefficientEntry {
    Name(String),
    Spec(CoefficientSpec),
}

impl CoefficientEntry {
    pub fn resolve(&self) -> Result<CoefficientSpec> {
        let spec = match self {
            CoefficientEntry::Name(s) => match s.as_str() {
                "legendre" => CoefficientSpec::Legendre,
                "sqrt" => CoefficientSpec::Sqrt,
                other => return Err(Error::Config(format!("unknown coefficient {other:?}"))),
            },
            CoefficientEntry::Spec(s) => s.clone(),
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Initial or target profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum ProfileSpec {
    Zero,
    Constant {
        value: f64,
    },
    /// scale · Π (x - r).
    Roots {
        roots: Vec<f64>,
        #[serde(default = "one")]
        scale: f64,
    },
    /// sin(k π x / 2 + phase)
    Sine {
        k: f64,
        #[serde(default)]
        phase: f64,
        #[serde(default = "one")]
        scale: f64,
    },
    /// Values on a uniform grid of [-1, 1], interpolated linearly.
    Table {
        values: Vec<f64>,
    },
    /// Datum built from zeros, slope signs and launch velocities.
    Datum {
        zeros: Vec<f64>,
        lambdas: Vec<f64>,
        mus: Vec<f64>,
        rho: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl ProfileSpec {
    pub fn build(&self, a: &CoefficientField) -> Result<StateProfile> {
        let g = &a.grid;
        let p = match self {
            ProfileSpec::Zero => StateProfile::zeros(g, 0.0),
            ProfileSpec::Constant { value } => StateProfile::from_fn(g, 0.0, |_| *value),
            ProfileSpec::Roots { roots, scale } => StateProfile::from_fn(g, 0.0, |x| {
                roots.iter().fold(*scale, |acc, r| acc * (x - r))
            }),
            ProfileSpec::Sine { k, phase, scale } => StateProfile::from_fn(g, 0.0, |x| {
                scale * (k * std::f64::consts::PI * x / 2.0 + phase).sin()
            }),
            ProfileSpec::Table { values } => {
                if values.len() < 2 {
                    return Err(Error::Config(
                        "profile table needs at least 2 values".into(),
                    ));
                }
                let m = (values.len() - 1) as f64;
                StateProfile::from_fn(g, 0.0, |x| {
                    let s = (x + 1.0) * 0.5 * m;
                    let i = (s.floor() as usize).min(values.len() - 2);
                    values[i] + (s - i as f64) * (values[i + 1] - values[i])
                })
            }
            ProfileSpec::Datum {
                zeros,
                lambdas,
                mus,
                rho,
            } => {
                let p =
                    DatumPrescription::ops(zeros.clone(), lambdas.clone(), mus.clone(), *rho, a);
                build_initial_datum(&p, a, g)?
            }
        };
        if p.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("profile has non-finite values".into()));
        }
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverParams {
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_stride")]
    pub snapshot_stride: usize,
    #[serde(default = "default_t_final")]
    pub t_final: f64,
    /// Constant control α for `evolve`.
    #[serde(default)]
    pub alpha: f64,
}

fn default_n() -> usize {
    512
}
fn default_dt() -> f64 {
    1e-5
}
fn default_stride() -> usize {
    100
}
fn default_t_final() -> f64 {
    0.1
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            n: 512,
            dt: 1e-5,
            snapshot_stride: 100,
            t_final: 0.1,
            alpha: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SteeringParams {
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Absolute final accuracy; defaults to `eta_rel`·‖target‖.
    #[serde(default)]
    pub eta: Option<f64>,
    #[serde(default = "default_eta_rel")]
    pub eta_rel: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    #[serde(default)]
    pub tau_floor: Option<f64>,
    #[serde(default = "default_true")]
    pub hold_inactive: bool,
    #[serde(default)]
    pub alpha_cap: Option<f64>,
}

fn default_epsilon() -> f64 {
    0.02
}
fn default_eta_rel() -> f64 {
    0.05
}
fn default_beta() -> f64 {
    0.5
}
fn default_n_max() -> usize {
    200
}
fn default_true() -> bool {
    true
}

impl Default for SteeringParams {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub command: Option<Command>,
    pub coefficient: CoefficientEntry,
    /// Defaults to weighted Neumann for strong and Dirichlet for weak degeneracy.
    #[serde(default)]
    pub boundary: Option<BoundarySpec>,
    /// "zero", {"model": "linear"|"saturating"|"budyko"|"sellers", ...}.
    #[serde(default)]
    pub nonlinearity: Option<Value>,
    #[serde(default)]
    pub initial: Option<ProfileSpec>,
    #[serde(default)]
    pub target: Option<ProfileSpec>,
    #[serde(default)]
    pub solver: SolverParams,
    #[serde(default)]
    pub steering: SteeringParams,
    /// Number of eigenpairs for `eigen`.
    #[serde(default = "default_modes")]
    pub modes: usize,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

fn default_modes() -> usize {
    6
}

pub fn parse_nonlinearity(v: Option<&Value>) -> Result<NonlinearitySpec> {
    let v = match v {
        None => return Ok(NonlinearitySpec::zero()),
        Some(v) => v,
    };
    if let Some(name) = v.as_str() {
        return match name {
            "zero" => Ok(NonlinearitySpec::zero()),
            other => Err(Error::Config(format!("unknown nonlinearity {other:?}"))),
        };
    }
    let model = v
        .get("model")
        .and_then(Value::as_str)
        .ok_or_else(|| Error::Config("nonlinearity object needs a \"model\" field".into()))?;
    let num = |k: &str| -> Result<f64> {
        v.get(k)
            .and_then(Value::as_f64)
            .ok_or_else(|| Error::Config(format!("nonlinearity {model:?} needs numeric {k:?}")))
    };
    match model {
        "zero" => Ok(NonlinearitySpec::zero()),
        "linear" => NonlinearitySpec::linear(num("rate")?),
        "saturating" => NonlinearitySpec::saturating(num("c")?, num("theta")?),
        "budyko" | "sellers" => {
            let block: EbmBlock = serde_json::from_value(v.clone())
                .map_err(|e| Error::Config(format!("EBM block: {e}")))?;
            make_ebm_nonlinearity(&block)
        }
        other => Err(Error::Config(format!(
            "unknown nonlinearity model {other:?}"
        ))),
    }
}

/// Everything a run needs, fully validated.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub coefficient: CoefficientField,
    pub boundary: BoundarySpec,
    pub solver: Solver,
    pub nonlinearity: NonlinearitySpec,
    pub initial: Option<StateProfile>,
    pub target: Option<StateProfile>,
}

impl Scenario {
    /// Steering configuration and final accuracy η for `steer`.
    pub fn steering_setup(&self) -> Result<(SteeringConfig, f64)> {
        let (u0, us) = match (&self.initial, &self.target) {
            (Some(a), Some(b)) => (a, b),
            _ => {
                return Err(Error::Config(
                    "steer needs initial and target profiles".into(),
                ))
            }
        };
        let st = &self.config.steering;
        let eta = st.eta.unwrap_or(st.eta_rel * us.l2());
        let z0 = detect_sign_changes(u0, pattern_tol(u0)).zeros;
        let zs = detect_sign_changes(us, pattern_tol(us)).zeros;
        let mut cfg = SteeringConfig::new(st.epsilon, &z0, &zs)?;
        cfg.beta = st.beta;
        cfg.n_max = st.n_max;
        cfg.hold_inactive = st.hold_inactive;
        cfg.dt = self.config.solver.dt;
        cfg.controller.dt = self.config.solver.dt;
        if let Some(t) = st.tau_floor {
            cfg.tau_floor = t;
        }
        if let Some(c) = st.alpha_cap {
            cfg.controller.alpha_cap = c;
        }
        cfg.validate()?;
        Ok((cfg, eta))
    }
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Builds and cross-checks every component for `command`.
    pub fn prepare(&self, command: Command) -> Result<Scenario> {
        let s = &self.solver;
        if !(s.dt > 0.0 && s.dt.is_finite()) || !(s.t_final > 0.0 && s.t_final.is_finite()) {
            return Err(Error::Config("dt and t_final must be positive".into()));
        }
        if s.snapshot_stride == 0 {
            return Err(Error::Config("snapshot_stride must be at least 1".into()));
        }
        if !s.alpha.is_finite() {
            return Err(Error::Config("alpha must be finite".into()));
        }
        let grid = build_grid(s.n)?;
        let spec = self.coefficient.resolve()?;
        let a = eval_coefficient(&spec, &grid)?;
        let bc = self.boundary.unwrap_or(match a.degeneracy {
            Degeneracy::Strong => BoundarySpec::WeightedNeumann,
            Degeneracy::Weak => BoundarySpec::DIRICHLET,
        });
        let op = assemble_operator(&a, &bc)?;
        let f = parse_nonlinearity(self.nonlinearity.as_ref())?;
        let initial = self.initial.as_ref().map(|p| p.build(&a)).transpose()?;
        let target = self.target.as_ref().map(|p| p.build(&a)).transpose()?;
        match command {
            Command::Eigen => {
                if self.modes == 0 || self.modes > s.n / 4 {
                    return Err(Error::Config(format!(
                        "modes = {} must lie in 1..={}",
                        self.modes,
                        s.n / 4
                    )));
                }
            }
            Command::Evolve => {
                if initial.is_none() {
                    return Err(Error::Config("evolve needs an initial profile".into()));
                }
            }
            Command::Steer => {
                if initial.is_none() || target.is_none() {
                    return Err(Error::Config(
                        "steer needs initial and target profiles".into(),
                    ));
                }
                let st = &self.steering;
                if !(st.epsilon > 0.0 && st.epsilon < 1.0) || !(st.beta > 0.0 && st.beta < 1.0) {
                    return Err(Error::Config("steering needs ε, β in (0, 1)".into()));
                }
                if st.eta.is_some_and(|e| !(e > 0.0)) || !(st.eta_rel > 0.0) {
                    return Err(Error::Config("η must be positive".into()));
                }
                if st.n_max == 0 {
                    return Err(Error::Config("n_max must be at least 1".into()));
                }
            }
        }
        Ok(Scenario {
            config: self.clone(),
            coefficient: a,
            boundary: bc,
            solver: Solver::new(op),
            nonlinearity: f,
            initial,
            target,
        })
    }
}
