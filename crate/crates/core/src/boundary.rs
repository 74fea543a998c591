//! Boundary-condition descriptors.

use serde::{Deserialize, Serialize};

use crate::coefficient::Degeneracy;
use crate::error::{Error, Result};

/// Robin conditions `β0 u(-1) + β1 (a u_x)(-1) = 0`, `γ0 u(1) + γ1 (a u_x)(1) = 0`
/// for weakly degenerate coefficients, or vanishing weighted flux `(a u_x)(±1) = 0`
/// for strongly degenerate ones.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundarySpec {
    Robin {
        beta0: f64,
        beta1: f64,
        gamma0: f64,
        gamma1: f64,
    },
    WeightedNeumann,
}

impl BoundarySpec {
    /// Homogeneous Dirichlet trace at both ends.
    pub const DIRICHLET: BoundarySpec = BoundarySpec::Robin {
        beta0: 1.0,
        beta1: 0.0,
        gamma0: 1.0,
        gamma1: 0.0,
    };

    pub fn label(&self) -> &'static str {
        match self {
            BoundarySpec::Robin { .. } => "Robin",
            BoundarySpec::WeightedNeumann => "weighted Neumann",
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let BoundarySpec::Robin {
            beta0,
            beta1,
            gamma0,
            gamma1,
        } = *self
        {
            if [beta0, beta1, gamma0, gamma1]
                .iter()
                .any(|v| !v.is_finite())
            {
                return Err(Error::InvalidBoundary(
                    "non-finite Robin coefficient".into(),
                ));
            }
            if beta0 * beta0 + beta1 * beta1 == 0.0 || gamma0 * gamma0 + gamma1 * gamma1 == 0.0 {
                return Err(Error::InvalidBoundary(
                    "Robin coefficients must not all vanish".into(),
                ));
            }
            if beta0 * beta1 > 0.0 || gamma0 * gamma1 < 0.0 {
                return Err(Error::InvalidBoundary(
                    "sign condition β0·β1 ≤ 0, γ0·γ1 ≥ 0 violated".into(),
                ));
            }
        }
        Ok(())
    }

    /// Checks the Robin ⇔ weak, weighted Neumann ⇔ strong pairing.
    pub fn check_compatible(&self, degeneracy: Degeneracy) -> Result<()> {
        self.validate()?;
        match (self, degeneracy) {
            (BoundarySpec::Robin { .. }, Degeneracy::Weak)
            | (BoundarySpec::WeightedNeumann, Degeneracy::Strong) => Ok(()),
            _ => Err(Error::InvalidPairing {
                bc: self.label(),
                degeneracy: degeneracy.label(),
            }),
        }
    }
}
