//! Order-processing steering: alternating pure-diffusion and controlled
//! intervals that move sign-change points onto targets.

use std::time::Instant;

use serde::Serialize;

use crate::coefficient::CoefficientField;
use crate::error::{Error, Result};
use crate::nonlinearity::NonlinearitySpec;
use crate::schedule::ControlSchedule;
use crate::solver::{Flow, Solver, Trajectory};
use crate::state::StateProfile;
use crate::synthesis::{
    build_initial_datum, pattern_tol, replay_schedule, synthesize_controller, ControllerOptions,
    DatumPrescription, PreservingPlan,
};
use crate::zeros::{
    detect_sign_changes, same_order, target_distance, CurveTrace, CurveTracker, SignChangePattern,
    TargetSpec,
};

/// Σ_{k≥1} k^{-(1+β/2)} with Euler–Maclaurin tail correction.
pub fn s_beta(beta: f64) -> f64 {
    let p = 1.0 + 0.5 * beta;
    let k0 = 2000usize;
    let head: f64 = (1..k0).map(|k| (k as f64).powf(-p)).sum();
    let k = k0 as f64;
    head + k.powf(1.0 - p) / (p - 1.0) + 0.5 * k.powf(-p) + p * k.powf(-p - 1.0) / 12.0
}

/// Smallest spacing of `points` with -1 and 1 as outer neighbours.
pub fn min_spacing(points: &[f64]) -> f64 {
    let mut prev = -1.0;
    let mut gap: f64 = f64::INFINITY;
    for &x in points.iter().chain(std::iter::once(&1.0)) {
        gap = gap.min(x - prev);
        prev = x;
    }
    gap
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SteeringConfig {
    pub epsilon: f64,
    pub beta: f64,
    pub rho0_star: f64,
    #[serde(rename = "M0_star")]
    pub m0_star: f64,
    pub s_beta: f64,
    #[serde(rename = "N_max")]
    pub n_max: usize,
    pub eta_odd: f64,
    /// Lower bound on the even-interval horizon used by the driver.
    pub tau_floor: f64,
    /// Steer reached curves back onto their targets instead of μ = 0.
    pub hold_inactive: bool,
    pub dt: f64,
    pub max_retries: usize,
    /// Duration of the calibration run for M*₀.
    pub calibration_time: f64,
    #[serde(skip)]
    pub controller: ControllerOptions,
}

impl SteeringConfig {
    /// Defaults for the given tolerance and point sets; M*₀ and η_odd are
    /// filled in by calibration.
    pub fn new(epsilon: f64, initial: &[f64], targets: &[f64]) -> Result<Self> {
        let cfg = Self {
            epsilon,
            beta: 0.5,
            rho0_star: min_spacing(initial).min(min_spacing(targets)),
            m0_star: 1.0,
            s_beta: s_beta(0.5),
            n_max: 200,
            eta_odd: 0.0,
            tau_floor: 4e-3,
            hold_inactive: true,
            dt: 1e-5,
            max_retries: 3,
            calibration_time: 1e-2,
            controller: ControllerOptions::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::Config(format!(
                "ε = {} must lie in (0, 1)",
                self.epsilon
            )));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::Config(format!(
                "β = {} must lie in (0, 1)",
                self.beta
            )));
        }
        if !(self.rho0_star > 0.0) {
            return Err(Error::Config("ρ*₀ must be positive".into()));
        }
        if !(self.s_beta > 1.0) {
            return Err(Error::Config("s_β must exceed 1".into()));
        }
        if !(self.m0_star > 0.0) {
            return Err(Error::Config("M*₀ must be positive".into()));
        }
        if !(self.dt > 0.0) || !(self.tau_floor >= 0.0) {
            return Err(Error::Config("dt and tau_floor must be positive".into()));
        }
        Ok(())
    }
}

/// τ̃_k = (ε ρ*₀ / (4 M*₀ s_β))^{2/(2+β)} / k.
pub fn plan_times(cfg: &SteeringConfig, k: usize) -> f64 {
    let base = cfg.epsilon * cfg.rho0_star / (4.0 * cfg.m0_star * cfg.s_beta);
    base.powf(2.0 / (2.0 + cfg.beta)) / k.max(1) as f64
}

/// Horizon actually used for even interval `k`.
pub fn driver_horizon(cfg: &SteeringConfig, k: usize) -> f64 {
    plan_times(cfg, k).max(cfg.tau_floor)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StopEvent {
    pub k: usize,
    pub l: usize,
    pub t: f64,
}

/// The times, data and bookkeeping of a steering run.
#[derive(Debug, Clone, Default, Serialize)]
pub struct SteeringFamily {
    pub taus: Vec<f64>,
    pub tau_tilde: Vec<f64>,
    #[serde(skip)]
    pub data: Vec<StateProfile>,
    pub mus: Vec<Vec<f64>>,
    pub inactive: Vec<Vec<usize>>,
    pub stop_events: Vec<StopEvent>,
    #[serde(skip)]
    pub traces: Vec<CurveTrace>,
    #[serde(rename = "J_history")]
    pub j_history: Vec<f64>,
    pub positions: Vec<Vec<f64>>,
    /// Largest displacement of a reached curve over one later even interval.
    pub inactive_drift: Vec<f64>,
    pub odd_plans: Vec<PreservingPlan>,
}

/// Outcome of one even interval.
#[derive(Debug, Clone)]
pub struct EvenStep {
    pub w: StateProfile,
    pub end: StateProfile,
    pub trajectory: Trajectory,
    pub traces: Vec<CurveTrace>,
    pub tau: f64,
    pub tau_tilde: f64,
    pub mus: Vec<f64>,
    pub hits: Vec<(usize, f64)>,
    pub inactive: Vec<usize>,
}

/// Shared context of a steering run.
#[derive(Debug, Clone)]
pub struct Steerer<'a> {
    pub solver: &'a Solver,
    pub a: &'a CoefficientField,
    pub f: &'a NonlinearitySpec,
    pub cfg: SteeringConfig,
    /// Slope sign λ(x⁰_l) of each curve.
    pub lambdas: Vec<f64>,
    pub initial: Vec<f64>,
    pub targets: TargetSpec,
    /// Residual displacement (beyond μτ) of the last interval, and its τ.
    drift: Vec<f64>,
    drift_tau: f64,
    /// Horizon floor, halved whenever drift would eat the control authority.
    floor: f64,
}

impl<'a> Steerer<'a> {
    pub fn new(
        solver: &'a Solver,
        a: &'a CoefficientField,
        f: &'a NonlinearitySpec,
        cfg: SteeringConfig,
        pattern: &SignChangePattern,
        targets: TargetSpec,
    ) -> Result<Self> {
        cfg.validate()?;
        targets.validate()?;
        if pattern.len() != targets.targets.len() {
            return Err(Error::SignPatternMismatch(format!(
                "{} sign changes but {} targets",
                pattern.len(),
                targets.targets.len()
            )));
        }
        let lambdas = (0..pattern.len()).map(|l| pattern.slope_sign(l)).collect();
        Ok(Self {
            solver,
            a,
            f,
            lambdas,
            initial: pattern.zeros.clone(),
            targets,
            drift: vec![0.0; pattern.len()],
            drift_tau: 0.0,
            floor: cfg.tau_floor,
            cfg,
        })
    }

    fn direction(&self, l: usize) -> f64 {
        let d = self.targets.targets[l] - self.initial[l];
        if d > 0.0 {
            1.0
        } else if d < 0.0 {
            -1.0
        } else {
            0.0
        }
    }

    /// μ_l: sgn(x*_l - x⁰_l) for active curves; 0 (or a holding correction)
    /// for reached ones.
    pub fn mus(&self, positions: &[f64], inactive: &[usize], horizon: f64) -> Vec<f64> {
        (0..positions.len())
            .map(|l| {
                if !inactive.contains(&l) {
                    return self.direction(l);
                }
                if !self.cfg.hold_inactive {
                    return 0.0;
                }
                let want = self.targets.targets[l] - positions[l] - self.expected_drift(l, horizon);
                (want / horizon).clamp(-1.0, 1.0)
            })
            .collect()
    }

    /// Last residual rescaled to `horizon`; it grows like τ² since the
    /// velocity leaves μ linearly in time.
    fn expected_drift(&self, l: usize, horizon: f64) -> f64 {
        if self.drift_tau <= 0.0 {
            return 0.0;
        }
        let r = horizon / self.drift_tau;
        self.drift[l] * r * r
    }

    /// Current horizon for interval k. The floor is halved (never below the
    /// exact schedule) while some curve's drift would exceed it.
    pub fn horizon(&mut self, k: usize) -> f64 {
        let exact = plan_times(&self.cfg, k);
        loop {
            let h = exact.max(self.floor);
            let worst = (0..self.drift.len())
                .map(|l| self.expected_drift(l, h).abs())
                .fold(0.0, f64::max);
            if worst <= h || self.floor <= exact {
                return h;
            }
            self.floor *= 0.5;
        }
    }

    /// The datum w_k with zeros at `positions`.
    pub fn datum(&self, positions: &[f64], mus: &[f64], t0: f64) -> Result<StateProfile> {
        let p = DatumPrescription::ops(
            positions.to_vec(),
            self.lambdas.clone(),
            mus.to_vec(),
            min_spacing(positions),
            self.a,
        );
        let mut w = build_initial_datum(&p, self.a, &self.a.grid)?;
        w.time = t0;
        Ok(w)
    }

    /// One even interval: builds w_k at `positions` and runs pure diffusion
    /// from `start` (w_k itself when `None`) for at most the horizon, stopping
    /// at the first target hit of an active curve.
    pub fn even_step(
        &mut self,
        start: Option<&StateProfile>,
        positions: &[f64],
        inactive: &[usize],
        k: usize,
    ) -> Result<EvenStep> {
        let mut horizon = self.horizon(k);
        let t0 = start.map_or(0.0, |s| s.time);
        let mut retries = 0;
        loop {
            let mus = self.mus(positions, inactive, horizon);

            let w = self.datum(positions, &mus, t0)?;
            let u0 = start.cloned().unwrap_or_else(|| w.clone());
            let pattern = detect_sign_changes(&u0, pattern_tol(&u0));
            if pattern.len() != positions.len() {
                return Err(Error::SteeringFailed(format!(
                    "interval {k} starts with {} sign changes, expected {}",
                    pattern.len(),
                    positions.len()
                )));
            }
            let window = min_spacing(&pattern.zeros);
            let mut tracker = CurveTracker::new(&u0, &pattern, window, None);
            let n = u0.n();
            let sch = ControlSchedule::constant(n, t0, t0 + horizon, 0.0)?;
            let targets = &self.targets.targets;
            let start_side: Vec<f64> = pattern
                .zeros
                .iter()
                .zip(targets)
                .map(|(x, y)| (x - y).signum())
                .collect();
            let mut hits: Vec<(usize, f64)> = Vec::new();
            let mut prev_pos = pattern.zeros.clone();
            let mut prev_t = t0;
            let traj =
                self.solver
                    .evolve_monitored(&u0, &sch, self.f, self.cfg.dt, usize::MAX, |u| {
                        tracker.update(u);
                        if tracker.any_lost() {
                            return Flow::Stop;
                        }
                        let pos = tracker.positions();
                        for l in 0..pos.len() {
                            if inactive.contains(&l) || start_side[l] == 0.0 {
                                continue;
                            }
                            if (pos[l] - targets[l]).signum() != start_side[l] {
                                let frac = (targets[l] - prev_pos[l]) / (pos[l] - prev_pos[l]);
                                hits.push((l, prev_t + frac.clamp(0.0, 1.0) * (u.time - prev_t)));
                            }
                        }
                        prev_pos = pos;
                        prev_t = u.time;
                        if hits.is_empty() {
                            Flow::Continue
                        } else {
                            Flow::Stop
                        }
                    })?;
            if tracker.any_lost() {
                if retries >= self.cfg.max_retries {
                    return Err(Error::SteeringFailed(format!(
                        "curve lost in interval {k} after {retries} retries"
                    )));
                }
                retries += 1;
                horizon *= 0.5;
                continue;
            }
            let end = traj.last().cloned().unwrap_or_else(|| u0.clone());
            let tau = end.time - t0;
            let end_pos = tracker.positions();
            if tau >= 0.25 * horizon {
                for l in 0..end_pos.len() {
                    self.drift[l] = end_pos[l] - pattern.zeros[l] - mus[l] * tau;
                }
                self.drift_tau = tau;
            }
            let mut new_inactive = inactive.to_vec();
            for &(l, _) in &hits {
                if !new_inactive.contains(&l) {
                    new_inactive.push(l);
                    tracker.mark_reached(l);
                }
            }
            for &l in inactive {
                tracker.mark_reached(l);
            }
            new_inactive.sort_unstable();
            return Ok(EvenStep {
                w,
                end,
                trajectory: traj,
                traces: tracker.into_traces(),
                tau,
                tau_tilde: horizon,
                mus,
                hits,
                inactive: new_inactive,
            });
        }
    }

    /// M*₀ = 2·max(curve speed, Hölder quotient of the speed) over a pure
    /// diffusion run from the first datum.
    pub fn calibrate(&mut self, positions: &[f64]) -> Result<f64> {
        let mus = self.mus(positions, &[], self.cfg.calibration_time);
        let w = self.datum(positions, &mus, 0.0)?;
        let pattern = detect_sign_changes(&w, pattern_tol(&w));
        let mut tracker = CurveTracker::new(&w, &pattern, min_spacing(&pattern.zeros), None);
        let sch = ControlSchedule::constant(w.n(), 0.0, self.cfg.calibration_time, 0.0)?;
        let stride = 10;
        let mut samples: Vec<(f64, Vec<f64>)> = vec![(0.0, pattern.zeros.clone())];
        let mut count = 0usize;
        self.solver
            .evolve_monitored(&w, &sch, self.f, self.cfg.dt, usize::MAX, |u| {
                tracker.update(u);
                count += 1;
                if count.is_multiple_of(stride) {
                    samples.push((u.time, tracker.positions()));
                }
                if tracker.any_lost() {
                    Flow::Stop
                } else {
                    Flow::Continue
                }
            })?;
        let mut speeds: Vec<(f64, Vec<f64>)> = Vec::new();
        for pair in samples.windows(2) {
            let dt = pair[1].0 - pair[0].0;
            let v = pair[1]
                .1
                .iter()
                .zip(&pair[0].1)
                .map(|(b, a)| (b - a) / dt)
                .collect();
            speeds.push((0.5 * (pair[0].0 + pair[1].0), v));
        }
        let mut m: f64 = 0.0;
        for (i, (ti, vi)) in speeds.iter().enumerate() {
            m = m.max(vi.iter().fold(0.0, |acc, v| acc.max(v.abs())));
            for (tj, vj) in speeds.iter().skip(i + 1) {
                let q = vi
                    .iter()
                    .zip(vj)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
                    / (tj - ti).powf(0.5 * self.cfg.beta);
                m = m.max(q);
            }
        }
        self.cfg.m0_star = 2.0 * m.max(1e-12);
        Ok(self.cfg.m0_star)
    }

    /// Smallest N whose driver horizons add up to the largest distance any
    /// curve has to travel, capped at N_max.
    pub fn estimate_n(&self) -> usize {
        let need = self
            .initial
            .iter()
            .zip(&self.targets.targets)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let mut total = 0.0;
        for k in 1..=self.cfg.n_max {
            total += driver_horizon(&self.cfg, k);
            if total >= need {
                return k;
            }
        }
        self.cfg.n_max
    }

    fn record(
        &mut self,
        fam: &mut SteeringFamily,
        step: &EvenStep,
        k: usize,
        before: &[usize],
    ) -> Result<Vec<f64>> {
        let pos: Vec<f64> = step.traces.iter().map(CurveTrace::last).collect();
        fam.taus.push(step.tau);
        fam.tau_tilde.push(step.tau_tilde);
        fam.mus.push(step.mus.clone());
        fam.data.push(step.w.clone());
        for &(l, t) in &step.hits {
            fam.stop_events.push(StopEvent { k, l, t });
        }
        let drift = before
            .iter()
            .map(|&l| (pos[l] - step.traces[l].samples[0].1).abs())
            .fold(0.0, f64::max);
        fam.inactive_drift.push(drift);
        fam.inactive.push(step.inactive.clone());
        if fam.traces.is_empty() {
            fam.traces = step.traces.clone();
        } else {
            for (acc, tr) in fam.traces.iter_mut().zip(&step.traces) {
                acc.samples.extend(tr.samples.iter().skip(1).copied());
                acc.status = tr.status;
                acc.ode_gap = acc.ode_gap.max(tr.ode_gap);
                acc.flagged |= tr.flagged;
            }
        }
        fam.j_history.push(target_distance(&pos, &self.targets)?);
        fam.positions.push(pos.clone());
        Ok(pos)
    }
}

/// Pure-diffusion steering with the family {(τ_k), (w_k)}: each even interval
/// restarts from the datum built at the current positions.
pub fn steer_diffusion(
    u0: &StateProfile,
    targets: &TargetSpec,
    cfg: SteeringConfig,
    solver: &Solver,
    a: &CoefficientField,
    f: &NonlinearitySpec,
) -> Result<(SteeringFamily, StateProfile)> {
    let pattern = detect_sign_changes(u0, pattern_tol(u0));
    let mut st = Steerer::new(solver, a, f, cfg, &pattern, targets.clone())?;
    let mut fam = SteeringFamily::default();
    let mut positions = pattern.zeros.clone();
    let mut inactive: Vec<usize> = (0..positions.len())
        .filter(|&l| st.direction(l) == 0.0)
        .collect();
    let mut state = u0.clone();
    if target_distance(&positions, targets)? <= targets.epsilon {
        return Ok((fam, state));
    }
    st.calibrate(&positions)?;
    for k in 1..=st.cfg.n_max {
        let before = inactive.clone();
        let step = st.even_step(None, &positions, &inactive, k)?;
        positions = st.record(&mut fam, &step, k, &before)?;
        inactive = step.inactive.clone();
        state = step.end;
        if fam.j_history.last().copied().unwrap_or(f64::INFINITY) <= targets.epsilon {
            break;
        }
    }
    let j = fam.j_history.last().copied().unwrap_or(f64::INFINITY);
    if j > targets.epsilon {
        return Err(Error::SteeringFailed(format!(
            "N_max = {} exhausted with J* = {j}",
            st.cfg.n_max
        )));
    }
    if !same_order(&detect_sign_changes(&state, pattern_tol(&state)), &pattern) {
        return Err(Error::SteeringFailed("sign pattern changed".into()));
    }
    Ok((fam, state))
}

/// Everything produced by [`steer_full`].
#[derive(Debug, Clone)]
pub struct SteeringRun {
    pub family: SteeringFamily,
    pub schedule: ControlSchedule,
    pub trajectory: Trajectory,
    pub final_state: StateProfile,
    pub final_plan: PreservingPlan,
    pub final_error: f64,
    pub success: bool,
    pub wallclock: f64,
}

/// Machine-readable run summary.
#[derive(Debug, Clone, Serialize)]
pub struct SteeringSummary {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "J_history")]
    pub j_history: Vec<f64>,
    pub taus: Vec<f64>,
    pub stop_events: Vec<StopEvent>,
    pub inactive_growth: Vec<usize>,
    pub final_error: f64,
    pub final_positions: Vec<f64>,
    pub eta: f64,
    pub success: bool,
    pub plan: PreservingPlan,
    pub wallclock: f64,
}

impl SteeringRun {
    pub fn summary(&self, eta: f64) -> SteeringSummary {
        SteeringSummary {
            n: self.family.taus.len(),
            j_history: self.family.j_history.clone(),
            taus: self.family.taus.clone(),
            stop_events: self.family.stop_events.clone(),
            inactive_growth: self.family.inactive.iter().map(Vec::len).collect(),
            final_error: self.final_error,
            final_positions: self.family.positions.last().cloned().unwrap_or_default(),
            eta,
            success: self.success,
            plan: self.final_plan.clone(),
            wallclock: self.wallclock,
        }
    }
}

fn append(
    schedule: &mut ControlSchedule,
    traj: &mut Trajectory,
    sch: &ControlSchedule,
    tr: &Trajectory,
) {
    schedule.pieces.extend(sch.pieces.iter().cloned());
    traj.extend(tr);
}

/// Full pipeline: controlled odd intervals reproduce each datum w_k, even
/// intervals move the curves, and a last odd interval steers onto `u_star`.
pub fn steer_full(
    u0: &StateProfile,
    u_star: &StateProfile,
    eta: f64,
    cfg: SteeringConfig,
    solver: &Solver,
    a: &CoefficientField,
    f: &NonlinearitySpec,
) -> Result<SteeringRun> {
    let clock = Instant::now();
    let p0 = detect_sign_changes(u0, pattern_tol(u0));
    let ps = detect_sign_changes(u_star, pattern_tol(u_star));
    if !same_order(&p0, &ps) {
        return Err(Error::SignPatternMismatch(format!(
            "initial state has {} sign changes leading {:?}, target has {} leading {:?}",
            p0.len(),
            p0.leading_sign,
            ps.len(),
            ps.leading_sign
        )));
    }
    let targets = TargetSpec::new(ps.zeros.clone(), cfg.epsilon)?;
    let mut st = Steerer::new(solver, a, f, cfg, &p0, targets.clone())?;
    let mut fam = SteeringFamily::default();
    let mut schedule = ControlSchedule::default();
    let mut traj = Trajectory {
        snapshot_stride: 1,
        ..Default::default()
    };
    let mut state = u0.clone();
    traj.extend(&Trajectory {
        times: vec![u0.time],
        profiles: vec![u0.clone()],
        snapshot_stride: 1,
    });
    let mut positions = p0.zeros.clone();
    let mut inactive: Vec<usize> = (0..positions.len())
        .filter(|&l| st.direction(l) == 0.0)
        .collect();

    if target_distance(&positions, &targets)? > targets.epsilon {
        st.calibrate(&positions)?;
        let n_est = st.estimate_n();
        st.cfg.eta_odd = eta / (2.0 * n_est as f64);
        for k in 1..=st.cfg.n_max {
            let horizon = st.horizon(k);
            let mus = st.mus(&positions, &inactive, horizon);
            let w = st.datum(&positions, &mus, state.time)?;
            let odd =
                synthesize_controller(solver, &state, &w, st.cfg.eta_odd, f, &st.cfg.controller)?;
            let odd_traj = replay_schedule(solver, &state, &odd.schedule, f, &st.cfg.controller)?;
            append(&mut schedule, &mut traj, &odd.schedule, &odd_traj);
            fam.odd_plans.push(odd.plan.clone());
            state = odd.state;
            let start_pattern = detect_sign_changes(&state, pattern_tol(&state));
            if start_pattern.len() != positions.len() {
                return Err(Error::SteeringFailed(format!(
                    "odd interval {k} changed the number of sign changes to {}",
                    start_pattern.len()
                )));
            }
            let before = inactive.clone();
            let step = st.even_step(Some(&state), &start_pattern.zeros, &inactive, k)?;
            let even = ControlSchedule::constant(state.n(), state.time, step.end.time, 0.0)?;
            append(&mut schedule, &mut traj, &even, &step.trajectory);
            positions = st.record(&mut fam, &step, k, &before)?;
            inactive = step.inactive.clone();
            state = step.end;
            if fam.j_history.last().copied().unwrap_or(f64::INFINITY) <= targets.epsilon {
                break;
            }
        }
    }
    let j = target_distance(&positions, &targets)?;
    let last = synthesize_controller(solver, &state, u_star, eta, f, &st.cfg.controller)?;
    let last_traj = replay_schedule(solver, &state, &last.schedule, f, &st.cfg.controller)?;
    append(&mut schedule, &mut traj, &last.schedule, &last_traj);
    let final_state = last.state.clone();
    let final_error = final_state.l2_distance(u_star);
    let success = j <= targets.epsilon && final_error <= eta;
    Ok(SteeringRun {
        family: fam,
        schedule,
        trajectory: traj,
        final_state,
        final_plan: last.plan,
        final_error,
        success,
        wallclock: clock.elapsed().as_secs_f64(),
    })
}
