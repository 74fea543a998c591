//! Piecewise-static multiplicative controls α(x, t).

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ControlPiece {
    pub t_start: f64,
    pub t_end: f64,
    pub alpha_profile: Vec<f64>,
}

impl ControlPiece {
    pub fn duration(&self) -> f64 {
        self.t_end - self.t_start
    }

    pub fn sup_norm(&self) -> f64 {
        self.alpha_profile.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.alpha_profile.iter().all(|&v| v == 0.0)
    }
}

/// A finite list of static pieces tiling `[start, end]` without gaps.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ControlSchedule {
    pub pieces: Vec<ControlPiece>,
}

impl ControlSchedule {
    pub fn new(pieces: Vec<ControlPiece>) -> Result<Self> {
        let s = Self { pieces };
        s.validate()?;
        Ok(s)
    }

    /// Single piece with α ≡ `value`.
    pub fn constant(n: usize, t_start: f64, t_end: f64, value: f64) -> Result<Self> {
        Self::new(vec![ControlPiece {
            t_start,
            t_end,
            alpha_profile: vec![value; n],
        }])
    }

    pub fn validate(&self) -> Result<()> {
        for (i, p) in self.pieces.iter().enumerate() {
            if !(p.t_end > p.t_start) {
                return Err(Error::InvalidSchedule(format!(
                    "piece {i} has empty interval [{}, {}]",
                    p.t_start, p.t_end
                )));
            }
            if p.alpha_profile.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidSchedule(format!("piece {i} is unbounded")));
            }
            if i > 0 && self.pieces[i - 1].t_end != p.t_start {
                return Err(Error::InvalidSchedule(format!(
                    "gap or overlap between pieces {} and {i}",
                    i - 1
                )));
            }
            if i > 0 && self.pieces[i - 1].alpha_profile.len() != p.alpha_profile.len() {
                return Err(Error::InvalidSchedule(
                    "pieces sampled on different grids".into(),
                ));
            }
        }
        Ok(())
    }

    /// Appends `other`, shifting it to start where `self` ends.
    pub fn append_shifted(&mut self, other: &ControlSchedule) {
        let offset = self.end().unwrap_or(0.0) - other.start().unwrap_or(0.0);
        let mut cursor = self.end();
        for p in &other.pieces {
            let t_start = cursor.unwrap_or(p.t_start + offset);
            let t_end = p.t_end + offset;
            self.pieces.push(ControlPiece {
                t_start,
                t_end,
                alpha_profile: p.alpha_profile.clone(),
            });
            cursor = Some(t_end);
        }
    }

    pub fn push(&mut self, duration: f64, alpha_profile: Vec<f64>) {
        let t_start = self.end().unwrap_or(0.0);
        self.pieces.push(ControlPiece {
            t_start,
            t_end: t_start + duration,
            alpha_profile,
        });
    }

    pub fn start(&self) -> Option<f64> {
        self.pieces.first().map(|p| p.t_start)
    }

    pub fn end(&self) -> Option<f64> {
        self.pieces.last().map(|p| p.t_end)
    }

    pub fn sup_norm(&self) -> f64 {
        self.pieces
            .iter()
            .map(ControlPiece::sup_norm)
            .fold(0.0, f64::max)
    }
}
