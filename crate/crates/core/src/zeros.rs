//! Sign-change detection, curve tracking and the gap/target functionals.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::coefficient::CoefficientField;
use crate::error::{Error, Result};
use crate::solver::Trajectory;
use crate::state::{interpolate_centers, StateProfile};

/// Default lower bound on |w_x| for the curve ODE.
pub const SLOPE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    Positive,
    Negative,
    Indeterminate,
}

impl Sign {
    pub fn of(v: f64) -> Sign {
        if v > 0.0 {
            Sign::Positive
        } else if v < 0.0 {
            Sign::Negative
        } else {
            Sign::Indeterminate
        }
    }

    pub fn flip(self) -> Sign {
        match self {
            Sign::Positive => Sign::Negative,
            Sign::Negative => Sign::Positive,
            Sign::Indeterminate => Sign::Indeterminate,
        }
    }

    pub fn as_f64(self) -> f64 {
        match self {
            Sign::Positive => 1.0,
            Sign::Negative => -1.0,
            Sign::Indeterminate => 0.0,
        }
    }
}

/// Ordered interior zeros and the sign on (-1, x_1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignChangePattern {
    pub zeros: Vec<f64>,
    pub leading_sign: Sign,
}

impl SignChangePattern {
    pub fn len(&self) -> usize {
        self.zeros.len()
    }

    pub fn is_empty(&self) -> bool {
        self.zeros.is_empty()
    }

    /// Sign of the profile just left of zero `l`.
    pub fn sign_left_of(&self, l: usize) -> Sign {
        if l.is_multiple_of(2) {
            self.leading_sign
        } else {
            self.leading_sign.flip()
        }
    }

    /// Slope sign at zero `l`: +1 when the profile goes from negative to positive.
    pub fn slope_sign(&self, l: usize) -> f64 {
        -self.sign_left_of(l).as_f64()
    }
}

/// Zeros where consecutive significant (|u| > tol) values change sign,
/// located by linear interpolation between the flanking significant cells.
pub fn detect_sign_changes(u: &StateProfile, tol: f64) -> SignChangePattern {
    let c = u.grid.centers();
    let mut zeros = Vec::new();
    let mut last: Option<usize> = None;
    let mut leading = Sign::Indeterminate;
    for (i, &v) in u.values.iter().enumerate() {
        if v.abs() <= tol {
            continue;
        }
        match last {
            None => leading = Sign::of(v),
            Some(j) => {
                let w = u.values[j];
                if (w > 0.0) != (v > 0.0) {
                    zeros.push(c[j] + (c[i] - c[j]) * w / (w - v));
                }
            }
        }
        last = Some(i);
    }
    SignChangePattern {
        zeros,
        leading_sign: leading,
    }
}

/// Same number of sign changes and the same leading sign.
pub fn same_order(p: &SignChangePattern, q: &SignChangePattern) -> bool {
    p.zeros.len() == q.zeros.len() && p.leading_sign == q.leading_sign
}

/// ξ̇ = -(a' + a w_xx / w_x).
pub fn curve_ode_rhs(w_x: f64, w_xx: f64, a_val: f64, a_prime: f64) -> Result<f64> {
    if !(w_x.abs() >= SLOPE_FLOOR) {
        return Err(Error::DegenerateSlope {
            slope: w_x.abs(),
            floor: SLOPE_FLOOR,
        });
    }
    Ok(-(a_prime + a_val * w_xx / w_x))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveStatus {
    Active,
    ReachedTarget,
    Lost,
}

impl CurveStatus {
    pub fn label(self) -> &'static str {
        match self {
            CurveStatus::Active => "active",
            CurveStatus::ReachedTarget => "reached_target",
            CurveStatus::Lost => "lost",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveTrace {
    pub index: usize,
    pub samples: Vec<(f64, f64)>,
    pub status: CurveStatus,
    /// Largest |ξ_ode - ξ_root| seen, when the ODE cross-check ran.
    pub ode_gap: f64,
    /// Set when the ODE cross-check disagreed by more than 5·dx.
    pub flagged: bool,
}

impl CurveTrace {
    pub fn last(&self) -> f64 {
        self.samples.last().map(|s| s.1).unwrap_or(f64::NAN)
    }
}

/// w_x and w_xx at `x` from centered differences interpolated between centers.
pub fn derivatives_at(u: &StateProfile, x: f64) -> (f64, f64) {
    let n = u.n();
    let dx = u.grid.dx();
    let v = &u.values;
    let mut d1 = vec![0.0; n];
    let mut d2 = vec![0.0; n];
    let i = u.grid.cell_of(x).clamp(1, n - 2);
    for k in i.saturating_sub(1).max(1)..=(i + 1).min(n - 2) {
        d1[k] = (v[k + 1] - v[k - 1]) / (2.0 * dx);
        d2[k] = (v[k + 1] - 2.0 * v[k] + v[k - 1]) / (dx * dx);
    }
    let c = u.grid.centers();
    let (j, t) = if x >= c[i] {
        (i, (x - c[i]) / dx)
    } else {
        (i - 1, (x - c[i - 1]) / dx)
    };
    let j = j.clamp(1, n - 3);
    let t = t.clamp(0.0, 1.0);
    (
        d1[j] + t * (d1[j + 1] - d1[j]),
        d2[j] + t * (d2[j + 1] - d2[j]),
    )
}

/// Root of the piecewise-linear interpolant of `u` inside `[lo, hi]` where
/// the profile goes from `left` sign to the opposite one, nearest to `near`.
pub fn bracket_root(u: &StateProfile, left: Sign, near: f64, lo: f64, hi: f64) -> Option<f64> {
    let c = u.grid.centers();
    let n = c.len();
    let s = left.as_f64();
    let start = u.grid.cell_of(lo).saturating_sub(1);
    let end = (u.grid.cell_of(hi) + 1).min(n - 1);
    let mut best: Option<f64> = None;
    for i in start..end {
        let (a, b) = (u.values[i] * s, u.values[i + 1] * s);
        if a > 0.0 && b <= 0.0 {
            let x = c[i] + (c[i + 1] - c[i]) * a / (a - b);
            if x < lo || x > hi {
                continue;
            }
            if best.is_none_or(|y| (x - near).abs() < (y - near).abs()) {
                best = Some(x);
            }
        }
    }
    best
}

/// Incremental root tracker for the sign-change curves of a run.
#[derive(Debug, Clone)]
pub struct CurveTracker {
    pattern: SignChangePattern,
    window: f64,
    coefficient: Option<CoefficientField>,
    traces: Vec<CurveTrace>,
    ode_pos: Vec<f64>,
    ode_rate: Vec<Option<f64>>,
    last_time: f64,
}

impl CurveTracker {
    /// `window` is the full search width (±window/2 around the last position).
    /// Passing `coefficient` enables the curve-ODE cross-check, valid for
    /// pure diffusion only.
    pub fn new(
        first: &StateProfile,
        initial: &SignChangePattern,
        window: f64,
        coefficient: Option<&CoefficientField>,
    ) -> Self {
        let traces = initial
            .zeros
            .iter()
            .enumerate()
            .map(|(l, &x)| CurveTrace {
                index: l,
                samples: vec![(first.time, x)],
                status: CurveStatus::Active,
                ode_gap: 0.0,
                flagged: false,
            })
            .collect();
        let mut t = Self {
            pattern: initial.clone(),
            window,
            coefficient: coefficient.cloned(),
            traces,
            ode_pos: initial.zeros.clone(),
            ode_rate: vec![None; initial.zeros.len()],
            last_time: first.time,
        };
        t.refresh_rates(first);
        t
    }

    fn refresh_rates(&mut self, u: &StateProfile) {
        let Some(a) = &self.coefficient else { return };
        for l in 0..self.traces.len() {
            if self.traces[l].status == CurveStatus::Lost {
                continue;
            }
            let x = self.ode_pos[l];
            let (wx, wxx) = derivatives_at(u, x);
            match curve_ode_rhs(wx, wxx, a.value(x), a.derivative(x)) {
                Ok(r) => self.ode_rate[l] = Some(r),
                Err(_) => {
                    self.ode_rate[l] = None;
                    self.traces[l].status = CurveStatus::Lost;
                }
            }
        }
    }

    /// Locates every curve in `u`. Curves whose bracket disappears are lost.
    pub fn update(&mut self, u: &StateProfile) {
        let dt = u.time - self.last_time;
        self.last_time = u.time;
        let dx = u.grid.dx();
        for l in 0..self.traces.len() {
            if self.traces[l].status == CurveStatus::Lost {
                continue;
            }
            let prev = self.traces[l].last();
            let half = 0.5 * self.window;
            let mut lo = prev - half;
            let mut hi = prev + half;
            if l > 0 {
                lo = lo.max(0.5 * (prev + self.traces[l - 1].last()));
            }
            if l + 1 < self.traces.len() {
                hi = hi.min(0.5 * (prev + self.traces[l + 1].last()));
            }
            match bracket_root(u, self.pattern.sign_left_of(l), prev, lo, hi) {
                Some(x) => self.traces[l].samples.push((u.time, x)),
                None => {
                    self.traces[l].status = CurveStatus::Lost;
                    continue;
                }
            }
            if let Some(r) = self.ode_rate[l] {
                self.ode_pos[l] += dt * r;
                let gap = (self.ode_pos[l] - self.traces[l].last()).abs();
                self.traces[l].ode_gap = self.traces[l].ode_gap.max(gap);
                if gap > 5.0 * dx {
                    self.traces[l].flagged = true;
                }
            }
        }
        self.refresh_rates(u);
    }

    pub fn positions(&self) -> Vec<f64> {
        self.traces.iter().map(CurveTrace::last).collect()
    }

    pub fn any_lost(&self) -> bool {
        self.traces.iter().any(|t| t.status == CurveStatus::Lost)
    }

    pub fn mark_reached(&mut self, l: usize) {
        if self.traces[l].status == CurveStatus::Active {
            self.traces[l].status = CurveStatus::ReachedTarget;
        }
    }

    pub fn traces(&self) -> &[CurveTrace] {
        &self.traces
    }

    pub fn into_traces(self) -> Vec<CurveTrace> {
        self.traces
    }
}

/// Tracks the curves of `initial` through every snapshot of `traj`.
pub fn track_curves(
    traj: &Trajectory,
    initial: &SignChangePattern,
    window: f64,
    coefficient: Option<&CoefficientField>,
) -> Vec<CurveTrace> {
    let Some(first) = traj.profiles.first() else {
        return Vec::new();
    };
    let mut tracker = CurveTracker::new(first, initial, window, coefficient);
    for u in &traj.profiles[1..] {
        tracker.update(u);
    }
    tracker.into_traces()
}

/// Smallest spacing between neighbouring curves (with `a0_star` and `b0_star`
/// as outer neighbours) over all aligned samples.
pub fn gap_functional(traces: &[CurveTrace], a0_star: f64, b0_star: f64) -> f64 {
    if traces.is_empty() {
        return b0_star - a0_star;
    }
    let len = traces.iter().map(|t| t.samples.len()).min().unwrap_or(0);
    let mut gap = f64::INFINITY;
    for k in 0..len {
        let mut prev = a0_star;
        for t in traces {
            let x = t.samples[k].1;
            gap = gap.min(x - prev);
            prev = x;
        }
        gap = gap.min(b0_star - prev);
    }
    gap
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub targets: Vec<f64>,
    pub epsilon: f64,
}

impl TargetSpec {
    pub fn new(targets: Vec<f64>, epsilon: f64) -> Result<Self> {
        let s = Self { targets, epsilon };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::Config(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if self.targets.iter().any(|x| !(x.abs() < 1.0)) {
            return Err(Error::Config("targets must lie inside (-1, 1)".into()));
        }
        if self.targets.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config("targets must be strictly increasing".into()));
        }
        Ok(())
    }
}

/// Σ |ξ_l - x*_l|.
pub fn target_distance(positions: &[f64], spec: &TargetSpec) -> Result<f64> {
    if positions.len() != spec.targets.len() {
        return Err(Error::ShapeMismatch {
            expected: spec.targets.len(),
            got: positions.len(),
        });
    }
    Ok(positions
        .iter()
        .zip(&spec.targets)
        .map(|(x, y)| (x - y).abs())
        .sum())
}

/// Writes `l,t,xi,status` rows, curve-major then by time.
pub fn write_traces_csv<W: Write>(traces: &[CurveTrace], mut w: W) -> Result<()> {
    writeln!(w, "l,t,xi,status")?;
    for tr in traces {
        for (t, x) in &tr.samples {
            writeln!(w, "{},{},{},{}", tr.index, t, x, tr.status.label())?;
        }
    }
    Ok(())
}

/// Zero count only; convenience for monotonicity checks.
pub fn count_sign_changes(u: &StateProfile, tol: f64) -> usize {
    detect_sign_changes(u, tol).zeros.len()
}

/// Linear interpolation of `u` at `x`.
pub fn value_at(u: &StateProfile, x: f64) -> f64 {
    interpolate_centers(&u.grid, &u.values, x)
}
