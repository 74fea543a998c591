//! IMEX time stepping: implicit diffusion, explicit reaction.

use std::io::Write;

use crate::error::{Error, Result};
use crate::nonlinearity::NonlinearitySpec;
use crate::operator::DiscreteOperator;
use crate::schedule::ControlSchedule;
use crate::state::StateProfile;

/// States larger than this are treated as blow-up.
pub const OVERFLOW_LIMIT: f64 = 1e150;

/// Snapshots of a run. `profiles[k].time == times[k]`.
#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub profiles: Vec<StateProfile>,
    pub snapshot_stride: usize,
}

impl Trajectory {
    pub fn push(&mut self, u: &StateProfile) {
        if let Some(&last) = self.times.last() {
            if u.time <= last {
                return;
            }
        }
        self.times.push(u.time);
        self.profiles.push(u.clone());
    }

    pub fn last(&self) -> Option<&StateProfile> {
        self.profiles.last()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Appends the snapshots of `other` that lie strictly after our last time.
    pub fn extend(&mut self, other: &Trajectory) {
        for u in &other.profiles {
            self.push(u);
        }
    }

    /// Writes `t,x,u` rows, time-major then by cell.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,x,u")?;
        for u in &self.profiles {
            for (x, v) in u.grid.centers().iter().zip(&u.values) {
                writeln!(w, "{},{},{}", u.time, x, v)?;
            }
        }
        Ok(())
    }
}

/// What an evolution monitor asks for after each step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flow {
    Continue,
    Stop,
}

/// Solver bound to one assembled operator.
#[derive(Debug, Clone)]
pub struct Solver {
    pub op: DiscreteOperator,
}

impl Solver {
    pub fn new(op: DiscreteOperator) -> Self {
        Self { op }
    }

    /// Largest admissible step for the explicit reaction part:
    /// `1 / (2 (sup|α| + κ))` with κ = max(ν, γ*)·max(1, ‖u‖∞^{θ-1}).
    pub fn dt_max(&self, alpha_sup: f64, f: &NonlinearitySpec, sup_u: f64) -> f64 {
        let rate = if f.is_zero() {
            0.0
        } else {
            let base = f.nu.max(f.gamma_star);
            if f.theta > 1.0 {
                base * sup_u.powf(f.theta - 1.0).max(1.0)
            } else {
                base
            }
        };
        let s = alpha_sup + rate;
        if s > 0.0 {
            0.5 / s
        } else {
            f64::INFINITY
        }
    }

    /// One step `(I - dt L) u_new = u + dt (α u + f(·, t, u))`.
    pub fn step(
        &self,
        u: &StateProfile,
        dt: f64,
        alpha: &[f64],
        f: &NonlinearitySpec,
    ) -> Result<StateProfile> {
        let n = self.op.n();
        if u.n() != n {
            return Err(Error::ShapeMismatch {
                expected: n,
                got: u.n(),
            });
        }
        if alpha.len() != n {
            return Err(Error::ShapeMismatch {
                expected: n,
                got: alpha.len(),
            });
        }
        let alpha_sup = alpha.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
        let dt_max = self.dt_max(alpha_sup, f, u.max_abs());
        if !(dt > 0.0) || dt > dt_max * (1.0 + 1e-12) {
            return Err(Error::StepTooLarge { dt, dt_max });
        }
        let values = self.step_unchecked(u, dt, alpha, f)?;
        Ok(StateProfile {
            grid: u.grid.clone(),
            values,
            time: u.time + dt,
        })
    }

    fn step_unchecked(
        &self,
        u: &StateProfile,
        dt: f64,
        alpha: &[f64],
        f: &NonlinearitySpec,
    ) -> Result<Vec<f64>> {
        let centers = u.grid.centers();
        let mut rhs: Vec<f64> = if f.is_zero() {
            u.values
                .iter()
                .zip(alpha)
                .map(|(v, a)| v + dt * a * v)
                .collect()
        } else {
            u.values
                .iter()
                .zip(alpha)
                .zip(centers)
                .map(|((v, a), &x)| v + dt * (a * v + f.eval(x, u.time, *v)))
                .collect()
        };
        self.op
            .matrix
            .shifted_identity(dt)
            .solve_in_place(&mut rhs)?;
        Ok(rhs)
    }

    /// Runs `schedule` from `u0` and records snapshots every `stride` steps
    /// plus at every piece boundary.
    pub fn evolve(
        &self,
        u0: &StateProfile,
        schedule: &ControlSchedule,
        f: &NonlinearitySpec,
        dt_target: f64,
        stride: usize,
    ) -> Result<Trajectory> {
        self.evolve_monitored(u0, schedule, f, dt_target, stride, |_| Flow::Continue)
    }

    /// As [`Solver::evolve`], calling `monitor` after every step. Returning
    /// [`Flow::Stop`] ends the run at the current state.
    pub fn evolve_monitored<M>(
        &self,
        u0: &StateProfile,
        schedule: &ControlSchedule,
        f: &NonlinearitySpec,
        dt_target: f64,
        stride: usize,
        mut monitor: M,
    ) -> Result<Trajectory>
    where
        M: FnMut(&StateProfile) -> Flow,
    {
        schedule.validate()?;
        let start = schedule
            .start()
            .ok_or_else(|| Error::InvalidSchedule("empty schedule".into()))?;
        if (u0.time - start).abs() > 1e-12 * start.abs().max(1.0) {
            return Err(Error::InvalidSchedule(format!(
                "initial time {} differs from schedule start {start}",
                u0.time
            )));
        }
        if !(dt_target > 0.0) {
            return Err(Error::StepTooLarge {
                dt: dt_target,
                dt_max: f64::INFINITY,
            });
        }
        if u0.n() != self.op.n() {
            return Err(Error::ShapeMismatch {
                expected: self.op.n(),
                got: u0.n(),
            });
        }
        let stride = stride.max(1);
        let mut traj = Trajectory {
            snapshot_stride: stride,
            ..Default::default()
        };
        let mut u = u0.clone();
        u.time = start;
        traj.push(&u);
        let mut steps = 0usize;
        for piece in &schedule.pieces {
            if piece.alpha_profile.len() != self.op.n() {
                return Err(Error::ShapeMismatch {
                    expected: self.op.n(),
                    got: piece.alpha_profile.len(),
                });
            }
            let alpha_sup = piece.sup_norm();
            let mut t = piece.t_start;
            loop {
                let remaining = piece.t_end - t;
                if remaining <= 1e-14 * piece.t_end.abs().max(1.0) {
                    break;
                }
                let dt_cap = dt_target.min(self.dt_max(alpha_sup, f, u.max_abs()));
                let n_left = (remaining / dt_cap).ceil().max(1.0);
                let dt = remaining / n_left;
                let values = self.step_unchecked(&u, dt, &piece.alpha_profile, f)?;
                if values
                    .iter()
                    .any(|v| !v.is_finite() || v.abs() > OVERFLOW_LIMIT)
                {
                    return Err(Error::BlowUp {
                        last_finite_time: u.time,
                    });
                }
                t = if n_left <= 1.0 { piece.t_end } else { t + dt };
                u = StateProfile {
                    grid: u.grid.clone(),
                    values,
                    time: t,
                };
                steps += 1;
                if steps.is_multiple_of(stride) {
                    traj.push(&u);
                }
                if monitor(&u) == Flow::Stop {
                    traj.push(&u);
                    return Ok(traj);
                }
            }
            traj.push(&u);
        }
        Ok(traj)
    }
}
