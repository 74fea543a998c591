//! Smooth data with prescribed zeros and the amplify-then-shape controller.

use serde::Serialize;

use crate::coefficient::CoefficientField;
use crate::error::{Error, Result};
use crate::grid::SpatialGrid;
use crate::nonlinearity::NonlinearitySpec;
use crate::schedule::{ControlPiece, ControlSchedule};
use crate::solver::{Solver, Trajectory};
use crate::state::{l2_norm, StateProfile};
use crate::zeros::{detect_sign_changes, same_order, SignChangePattern};

/// Zeros, slope signs and curvature directives for [`build_initial_datum`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatumPrescription {
    pub zeros: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub mus: Vec<f64>,
    pub rho: f64,
    pub slope_scale: Vec<f64>,
}

impl DatumPrescription {
    /// Prescription with slopes `λ_l a(x_l)`, so that the launch velocity of
    /// curve `l` equals `μ_l`.
    pub fn ops(
        zeros: Vec<f64>,
        lambdas: Vec<f64>,
        mus: Vec<f64>,
        rho: f64,
        a: &CoefficientField,
    ) -> Self {
        let slope_scale = zeros.iter().map(|&x| a.value(x)).collect();
        Self {
            zeros,
            lambdas,
            mus,
            rho,
            slope_scale,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.zeros.len();
        if self.lambdas.len() != n || self.mus.len() != n || self.slope_scale.len() != n {
            return Err(Error::InvalidPrescription("field lengths differ".into()));
        }
        if !(self.rho > 0.0) {
            return Err(Error::InvalidPrescription(format!(
                "ρ̃ = {} must be positive",
                self.rho
            )));
        }
        let mut prev = -1.0;
        for &x in self.zeros.iter().chain(std::iter::once(&1.0)) {
            if !(x - prev >= self.rho) {
                return Err(Error::InvalidPrescription(format!(
                    "spacing {} between {prev} and {x} is below ρ̃ = {}",
                    x - prev,
                    self.rho
                )));
            }
            prev = x;
        }
        if self.lambdas.iter().any(|&l| l != 1.0 && l != -1.0) {
            return Err(Error::InvalidPrescription("λ_l must be ±1".into()));
        }
        if self.lambdas.windows(2).any(|w| w[0] * w[1] >= 0.0) {
            return Err(Error::InvalidPrescription("λ_l must alternate".into()));
        }
        if self.mus.iter().any(|m| !(m.abs() <= 1.0)) {
            return Err(Error::InvalidPrescription("μ_l must lie in [-1, 1]".into()));
        }
        if self
            .slope_scale
            .iter()
            .any(|s| !(s.is_finite() && *s > 0.0))
        {
            return Err(Error::InvalidPrescription(
                "slope scales must be positive".into(),
            ));
        }
        Ok(())
    }

    /// w'(x_l) = λ_l s_l.
    pub fn slope(&self, l: usize) -> f64 {
        self.lambdas[l] * self.slope_scale[l]
    }

    /// w''(x_l) = -λ_l s_l (μ_l + a'(x_l)) / a(x_l); equals -λ_l(μ_l + a'(x_l))
    /// when s_l = a(x_l).
    pub fn curvature(&self, l: usize, a: &CoefficientField) -> f64 {
        let x = self.zeros[l];
        -self.lambdas[l] * self.slope_scale[l] * (self.mus[l] + a.derivative(x)) / a.value(x)
    }
}

/// C^∞ step: 0 for t ≤ 0, 1 for t ≥ 1.
fn smooth_step(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        let a = (-1.0 / t).exp();
        let b = (-1.0 / (1.0 - t)).exp();
        a / (a + b)
    }
}

/// 1 on |s| ≤ r/2, 0 on |s| ≥ r.
fn bump(s: f64, r: f64) -> f64 {
    smooth_step((r - s.abs()) / (0.5 * r))
}

/// Polynomial in `s = dir·(x - origin)` on `0 ≤ s ≤ len`.
#[derive(Debug, Clone, PartialEq)]
struct Piece {
    origin: f64,
    dir: f64,
    len: f64,
    coeffs: [f64; 6],
}

impl Piece {
    fn eval_s(&self, s: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * s + c)
    }

    fn eval(&self, x: f64) -> f64 {
        self.eval_s(self.dir * (x - self.origin))
    }

    fn keeps_sign(&self, sigma: f64) -> bool {
        (1..=400).all(|k| sigma * self.eval_s(self.len * k as f64 / 400.0) > 0.0)
    }
}

/// Quintic with value/slope/curvature (p0, d0, k0) at 0 and (p1, d1, k1) at l.
fn quintic_hermite(l: f64, p0: f64, d0: f64, k0: f64, p1: f64, d1: f64, k1: f64) -> [f64; 6] {
    let c2 = 0.5 * k0;
    let r0 = p1 - (p0 + d0 * l + c2 * l * l);
    let r1 = d1 - (d0 + 2.0 * c2 * l);
    let r2 = k1 - 2.0 * c2;
    let c3 = (10.0 * r0 - 4.0 * r1 * l + 0.5 * r2 * l * l) / l.powi(3);
    let c4 = (-15.0 * r0 + 7.0 * r1 * l - r2 * l * l) / l.powi(4);
    let c5 = (6.0 * r0 - 3.0 * r1 * l + 0.5 * r2 * l * l) / l.powi(5);
    [p0, d0, c2, c3, c4, c5]
}

/// Analytic form of a datum built from a prescription.
#[derive(Debug, Clone)]
pub struct SmoothDatum {
    pub zeros: Vec<f64>,
    pub slopes: Vec<f64>,
    pub curvatures: Vec<f64>,
    pub radii: Vec<f64>,
    pieces: Vec<Piece>,
}

impl SmoothDatum {
    /// Germs `s(d_l + k_l s/2)` near each zero, blended by C^∞ bumps into
    /// constant-sign polynomial plateaus; plateaus match the germs to second
    /// order where that keeps their sign.
    pub fn new(p: &DatumPrescription, a: &CoefficientField) -> Result<Self> {
        p.validate()?;
        let n = p.zeros.len();
        let slopes: Vec<f64> = (0..n).map(|l| p.slope(l)).collect();
        let curvatures: Vec<f64> = (0..n).map(|l| p.curvature(l, a)).collect();
        if curvatures.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidPrescription("curvature is not finite".into()));
        }
        let radii: Vec<f64> = (0..n)
            .map(|l| {
                let d = slopes[l].abs();
                let mut r = 0.25 * p.rho;
                if curvatures[l] != 0.0 {
                    r = r.min(0.5 * d / curvatures[l].abs());
                }
                r
            })
            .collect();
        let mut pieces = Vec::with_capacity(n + 1);
        if n == 0 {
            pieces.push(Piece {
                origin: -1.0,
                dir: 1.0,
                len: 2.0,
                coeffs: [1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            });
        } else {
            pieces.push(end_piece(
                p.zeros[0],
                -1.0,
                p.zeros[0] + 1.0,
                -slopes[0],
                curvatures[0],
            ));
            for l in 0..n - 1 {
                let len = p.zeros[l + 1] - p.zeros[l];
                let sigma = slopes[l].signum();
                let q = Piece {
                    origin: p.zeros[l],
                    dir: 1.0,
                    len,
                    coeffs: quintic_hermite(
                        len,
                        0.0,
                        slopes[l],
                        curvatures[l],
                        0.0,
                        slopes[l + 1],
                        curvatures[l + 1],
                    ),
                };
                let inner = Piece {
                    len: len * (1.0 - 1e-9),
                    ..q.clone()
                };
                if inner.keeps_sign(sigma) {
                    pieces.push(q);
                } else {
                    let b0 = slopes[l] / len;
                    let b1 = (-slopes[l + 1] / len - b0) / len;
                    pieces.push(Piece {
                        origin: p.zeros[l],
                        dir: 1.0,
                        len,
                        coeffs: [0.0, b0 * len, b1 * len - b0, -b1, 0.0, 0.0],
                    });
                }
            }
            pieces.push(end_piece(
                p.zeros[n - 1],
                1.0,
                1.0 - p.zeros[n - 1],
                slopes[n - 1],
                curvatures[n - 1],
            ));
        }
        Ok(Self {
            zeros: p.zeros.clone(),
            slopes,
            curvatures,
            radii,
            pieces,
        })
    }

    fn plateau(&self, x: f64) -> f64 {
        let k = self.zeros.partition_point(|&z| z <= x);
        self.pieces[k].eval(x)
    }

    pub fn value(&self, x: f64) -> f64 {
        let mut weight = 0.0;
        let mut acc = 0.0;
        for (l, &z) in self.zeros.iter().enumerate() {
            let s = x - z;
            let r = self.radii[l];
            if s.abs() < r {
                let chi = bump(s, r);
                weight += chi;
                acc += chi * s * (self.slopes[l] + 0.5 * self.curvatures[l] * s);
            }
        }
        if weight >= 1.0 {
            return acc;
        }
        acc + (1.0 - weight) * self.plateau(x)
    }

    /// Central-difference first derivative of the analytic form.
    pub fn derivative(&self, x: f64, h: f64) -> f64 {
        (self.value(x + h) - self.value(x - h)) / (2.0 * h)
    }

    /// Central-difference second derivative of the analytic form.
    pub fn second_derivative(&self, x: f64, h: f64) -> f64 {
        (self.value(x + h) - 2.0 * self.value(x) + self.value(x - h)) / (h * h)
    }

    /// A step size that stays inside every germ core.
    pub fn probe_step(&self) -> f64 {
        self.radii.iter().fold(1e-3, |m, r| m.min(r / 8.0))
    }

    pub fn sample(&self, grid: &SpatialGrid, time: f64) -> StateProfile {
        StateProfile::from_fn(grid, time, |x| self.value(x))
    }

    /// max |w| over a fine sampling of (-1, 1).
    pub fn envelope(&self) -> f64 {
        (0..=4000)
            .map(|k| self.value(-1.0 + k as f64 / 2000.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Plateau on the end interval next to `zero`, in the coordinate pointing
/// away from it (dir = -1 towards -1). `d` and `k` are slope and curvature in
/// that coordinate. Rises from the zero and flattens out at the boundary.
fn end_piece(zero: f64, dir: f64, len: f64, d: f64, k: f64) -> Piece {
    let h = 0.5 * d * len;
    let q = Piece {
        origin: zero,
        dir,
        len,
        coeffs: quintic_hermite(len, 0.0, d, k, h, 0.0, 0.0),
    };
    if q.keeps_sign(d.signum()) {
        q
    } else {
        Piece {
            origin: zero,
            dir,
            len,
            coeffs: [0.0, d, -0.5 * d / len, 0.0, 0.0, 0.0],
        }
    }
}

/// Samples the datum described by `p` on the cell centers of `grid`.
pub fn build_initial_datum(
    p: &DatumPrescription,
    a: &CoefficientField,
    grid: &SpatialGrid,
) -> Result<StateProfile> {
    Ok(SmoothDatum::new(p, a)?.sample(grid, 0.0))
}

/// Copy of `u` whose germ near each zero is replaced by the unit-slope line
/// `±(x - x_l)` inside radius `rho_bar`.
pub fn smoothed_comparator(
    u: &StateProfile,
    pattern: &SignChangePattern,
    rho_bar: f64,
) -> StateProfile {
    let mut out = u.clone();
    for (i, &x) in u.grid.centers().iter().enumerate() {
        for (l, &z) in pattern.zeros.iter().enumerate() {
            let s = x - z;
            if s.abs() < rho_bar {
                let chi = bump(s, rho_bar);
                out.values[i] = chi * pattern.slope_sign(l) * s + (1.0 - chi) * out.values[i];
            }
        }
    }
    out
}

/// Cells excluded from shaping: within `rho_bar` of ±1, of a zero of either
/// pattern, or between corresponding zeros.
pub fn excluded_cells(
    grid: &SpatialGrid,
    p: &SignChangePattern,
    q: &SignChangePattern,
    rho_bar: f64,
) -> Vec<bool> {
    grid.centers()
        .iter()
        .map(|&x| {
            if 1.0 - x.abs() < rho_bar {
                return true;
            }
            p.zeros.iter().zip(&q.zeros).any(|(&a, &b)| {
                let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                x > lo - rho_bar && x < hi + rho_bar
            })
        })
        .collect()
}

/// Default cap on |α₀|.
pub const ALPHA_CAP: f64 = 20.0;

fn tent_smooth(v: &[f64], r: usize) -> Vec<f64> {
    if r == 0 {
        return v.to_vec();
    }
    let n = v.len() as isize;
    let r = r as isize;
    let norm: f64 = (-r..=r).map(|k| (r + 1 - k.abs()) as f64).sum();
    (0..n)
        .map(|i| {
            (-r..=r)
                .map(|k| {
                    let j = i + k;
                    if j < 0 || j >= n {
                        0.0
                    } else {
                        (r + 1 - k.abs()) as f64 * v[j as usize]
                    }
                })
                .sum::<f64>()
                / norm
        })
        .collect()
}

/// `α₀ / t_shape` with α₀ = log(u_target / u_in) on the shaping region,
/// clipped to [-alpha_cap, 0], smoothed twice with a triangular kernel of
/// radius ρ̄/4 and zeroed again on the excluded cells.
pub fn shape_control(
    u_in: &StateProfile,
    u_target: &StateProfile,
    rho_bar: f64,
    alpha_cap: f64,
    t_shape: f64,
) -> Result<Vec<f64>> {
    if u_in.n() != u_target.n() {
        return Err(Error::ShapeMismatch {
            expected: u_in.n(),
            got: u_target.n(),
        });
    }
    let p = detect_sign_changes(u_in, pattern_tol(u_in));
    let q = detect_sign_changes(u_target, pattern_tol(u_target));
    if !same_order(&p, &q) {
        return Err(Error::SignPatternMismatch(format!(
            "{} zeros ({:?}) vs {} zeros ({:?})",
            p.len(),
            p.leading_sign,
            q.len(),
            q.leading_sign
        )));
    }
    let excluded = excluded_cells(&u_in.grid, &p, &q, rho_bar);
    let mut raw = vec![0.0; u_in.n()];
    for i in 0..u_in.n() {
        if excluded[i] {
            continue;
        }
        let ratio = u_target.values[i] / u_in.values[i];
        if !(ratio > 0.0) {
            if u_target.values[i] == 0.0 {
                raw[i] = -alpha_cap;
                continue;
            }
            return Err(Error::SignPatternMismatch(format!(
                "ratio {ratio} at x = {}",
                u_in.grid.centers()[i]
            )));
        }
        raw[i] = ratio.ln().clamp(-alpha_cap, 0.0);
    }
    let r = (0.25 * rho_bar / u_in.grid.dx()).floor() as usize;
    let mut smooth = tent_smooth(&tent_smooth(&raw, r), r);
    for (v, &e) in smooth.iter_mut().zip(&excluded) {
        *v = if e { 0.0 } else { v.min(0.0) / t_shape };
    }
    Ok(smooth)
}

/// (log M) / t1.
pub fn amplification_control(m: f64, t1: f64) -> Result<f64> {
    if !(m >= 1.0) || !m.is_finite() {
        return Err(Error::InvalidAmplification(m));
    }
    if !(t1 > 0.0) {
        return Err(Error::InvalidSchedule(format!(
            "amplification time {t1} must be positive"
        )));
    }
    Ok(m.ln() / t1)
}

/// Threshold below which values count as zero when reading sign patterns.
pub fn pattern_tol(u: &StateProfile) -> f64 {
    1e-9 * u.max_abs()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PreservingPlan {
    #[serde(rename = "M")]
    pub m: f64,
    pub t1: f64,
    pub sigma: f64,
    #[serde(rename = "C_bound")]
    pub c_bound: f64,
    pub achieved_error: f64,
    pub eta: f64,
    pub rho_bar: f64,
    pub alpha_amplify: f64,
    #[serde(skip)]
    pub alpha_shape: Vec<f64>,
}

impl PreservingPlan {
    /// √2·M·e^ν.
    pub fn gronwall_constant(&self, nu: f64) -> f64 {
        std::f64::consts::SQRT_2 * self.m * nu.exp()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerOptions {
    /// Base time step; bisection floors are 10·dt.
    pub dt: f64,
    pub alpha_cap: f64,
    pub t1_init: f64,
    pub shape_init: f64,
    /// Relative reaction increment per step, |α|·dt.
    pub reaction_step: f64,
    /// Relative size of the perturbation probe used for C_bound.
    pub probe: f64,
}

impl Default for ControllerOptions {
    fn default() -> Self {
        Self {
            dt: 1e-5,
            alpha_cap: ALPHA_CAP,
            t1_init: 4e-3,
            shape_init: 4e-3,
            reaction_step: 5e-3,
            probe: 1e-3,
        }
    }
}

/// Result of a controller synthesis that may have missed its accuracy target.
#[derive(Debug, Clone)]
pub struct ControllerRun {
    pub plan: PreservingPlan,
    pub schedule: ControlSchedule,
    pub state: StateProfile,
    pub met: bool,
}

fn run_piece(
    solver: &Solver,
    u: &StateProfile,
    alpha: Vec<f64>,
    duration: f64,
    f: &NonlinearitySpec,
    opts: &ControllerOptions,
) -> Result<(StateProfile, ControlPiece)> {
    let piece = ControlPiece {
        t_start: u.time,
        t_end: u.time + duration,
        alpha_profile: alpha,
    };
    let sup = piece.sup_norm();
    let dt = if sup > 0.0 {
        opts.dt.min(opts.reaction_step / sup)
    } else {
        opts.dt
    };
    let sch = ControlSchedule {
        pieces: vec![piece.clone()],
    };
    let traj = solver.evolve(u, &sch, f, dt, usize::MAX)?;
    Ok((
        traj.profiles.last().cloned().unwrap_or_else(|| u.clone()),
        piece,
    ))
}

/// Re-runs `schedule` from `u` piece by piece with the step refinement used
/// during synthesis; the trajectory holds `u` and every piece end.
pub fn replay_schedule(
    solver: &Solver,
    u: &StateProfile,
    schedule: &ControlSchedule,
    f: &NonlinearitySpec,
    opts: &ControllerOptions,
) -> Result<Trajectory> {
    let mut traj = Trajectory {
        times: vec![u.time],
        profiles: vec![u.clone()],
        snapshot_stride: 1,
    };
    let mut state = u.clone();
    for piece in &schedule.pieces {
        let (next, _) = run_piece(
            solver,
            &state,
            piece.alpha_profile.clone(),
            piece.duration(),
            f,
            opts,
        )?;
        traj.push(&next);
        state = next;
    }
    Ok(traj)
}

/// Largest M over the shaping region and the matching ρ̄ from the sweep
/// ρ₀/2·2^{-j}, j = 0..=8.
fn choose_rho_bar(
    u: &StateProfile,
    w: &StateProfile,
    p: &SignChangePattern,
    q: &SignChangePattern,
    eta: f64,
) -> Result<(f64, f64)> {
    let mut rho0: f64 = 2.0;
    for pat in [p, q] {
        let mut prev = -1.0;
        for &z in pat.zeros.iter().chain(std::iter::once(&1.0)) {
            rho0 = rho0.min(z - prev);
            prev = z;
        }
    }
    let dx = u.grid.dx();
    let mut last = None;
    for j in 0..=8 {
        let rho_bar = 0.5 * rho0 * 0.5f64.powi(j);
        let excluded = excluded_cells(&u.grid, p, q, rho_bar);
        let mut max_ratio: f64 = 0.0;
        for i in 0..u.n() {
            if excluded[i] || u.values[i] == 0.0 {
                continue;
            }
            let r = w.values[i] / u.values[i];
            if r.is_finite() {
                max_ratio = max_ratio.max(r);
            }
        }
        let m = max_ratio + 1.0;
        let u_c = smoothed_comparator(u, p, rho_bar);
        let w_c = smoothed_comparator(w, q, rho_bar);
        let tail_vals: Vec<f64> = (0..u.n())
            .filter(|&i| excluded[i])
            .map(|i| (m * u_c.values[i]).abs() + w_c.values[i].abs())
            .collect();
        let tail = l2_norm(&tail_vals, dx);
        last = Some((rho_bar, m));
        if tail < 0.25 * eta {
            break;
        }
    }
    last.ok_or_else(|| Error::Domain("empty ρ̄ sweep".into()))
}

type Attempt = (f64, ControlPiece, Vec<f64>, ControlPiece, StateProfile);

#[allow(clippy::too_many_arguments)]
fn two_step(
    solver: &Solver,
    u_start: &StateProfile,
    w_target: &StateProfile,
    f: &NonlinearitySpec,
    opts: &ControllerOptions,
    rho_bar: f64,
    m: f64,
    t1: f64,
    ts: f64,
) -> Result<Attempt> {
    let alpha1 = amplification_control(m, t1)?;
    let (u1, a) = run_piece(solver, u_start, vec![alpha1; u_start.n()], t1, f, opts)?;
    let shape = shape_control(&u1, w_target, rho_bar, opts.alpha_cap, ts)?;
    let (end, b) = run_piece(solver, &u1, shape.clone(), ts, f, opts)?;
    Ok((alpha1, a, shape, b, end))
}

/// ‖u(t1 + ts) - w_target‖ for the two-step control with fixed durations.
#[allow(clippy::too_many_arguments)]
pub fn two_step_error(
    solver: &Solver,
    u_start: &StateProfile,
    w_target: &StateProfile,
    eta: f64,
    f: &NonlinearitySpec,
    opts: &ControllerOptions,
    t1: f64,
    ts: f64,
) -> Result<f64> {
    let p = detect_sign_changes(u_start, pattern_tol(u_start));
    let q = detect_sign_changes(w_target, pattern_tol(w_target));
    if !same_order(&p, &q) {
        return Err(Error::SignPatternMismatch(
            "start and target patterns differ".into(),
        ));
    }
    let (rho_bar, m) = choose_rho_bar(u_start, w_target, &p, &q, eta)?;
    let (_, _, _, _, end) = two_step(solver, u_start, w_target, f, opts, rho_bar, m, t1, ts)?;
    Ok(end.l2_distance(w_target))
}

/// Steers `u_start` towards `w_target` with two static pieces: α₁ = log M / t1,
/// then α₀/(T - t1). Returns the best attempt even when it misses `eta`.
pub fn synthesize_controller(
    solver: &Solver,
    u_start: &StateProfile,
    w_target: &StateProfile,
    eta: f64,
    f: &NonlinearitySpec,
    opts: &ControllerOptions,
) -> Result<ControllerRun> {
    let tol_u = pattern_tol(u_start);
    let tol_w = pattern_tol(w_target);
    let p = detect_sign_changes(u_start, tol_u);
    let q = detect_sign_changes(w_target, tol_w);
    if !same_order(&p, &q) {
        return Err(Error::SignPatternMismatch(format!(
            "start has {} zeros ({:?}), target has {} ({:?})",
            p.len(),
            p.leading_sign,
            q.len(),
            q.leading_sign
        )));
    }
    let n = u_start.n();
    let floor = 10.0 * opts.dt;

    // Nothing to do: two idle pieces of minimal length.
    {
        let (mid, a) = run_piece(solver, u_start, vec![0.0; n], floor, f, opts)?;
        let (end, b) = run_piece(solver, &mid, vec![0.0; n], floor, f, opts)?;
        let err = end.l2_distance(w_target);
        if err <= eta {
            let plan = PreservingPlan {
                m: 1.0,
                t1: floor,
                sigma: 2.0 * floor,
                c_bound: 1.0,
                achieved_error: err,
                eta,
                rho_bar: 0.0,
                alpha_amplify: 0.0,
                alpha_shape: vec![0.0; n],
            };
            let mut run = ControllerRun {
                plan,
                schedule: ControlSchedule { pieces: vec![a, b] },
                state: end,
                met: true,
            };
            run.plan.c_bound = measure_c_bound(solver, u_start, &run, f, opts)?;
            return Ok(run);
        }
    }

    let (rho_bar, m) = choose_rho_bar(u_start, w_target, &p, &q, eta)?;
    let mut best: Option<ControllerRun> = None;
    let mut t1 = opts.t1_init.max(floor);
    let mut ts = opts.shape_init.max(floor);
    loop {
        let (alpha1, a, shape, b, end) =
            match two_step(solver, u_start, w_target, f, opts, rho_bar, m, t1, ts) {
                Ok(r) => r,
                Err(e @ Error::SignPatternMismatch(_)) => {
                    if t1 <= floor && ts <= floor {
                        return Err(e);
                    }
                    t1 = (0.5 * t1).max(floor);
                    ts = (0.5 * ts).max(floor);
                    continue;
                }
                Err(e) => return Err(e),
            };
        let err = end.l2_distance(w_target);
        let improved = best.as_ref().is_none_or(|r| err < r.plan.achieved_error);
        if improved {
            let alpha_shape = shape.iter().map(|v| v * ts).collect();
            best = Some(ControllerRun {
                plan: PreservingPlan {
                    m,
                    t1,
                    sigma: t1 + ts,
                    c_bound: f64::NAN,
                    achieved_error: err,
                    eta,
                    rho_bar,
                    alpha_amplify: alpha1,
                    alpha_shape,
                },
                schedule: ControlSchedule { pieces: vec![a, b] },
                state: end,
                met: err <= eta,
            });
        }
        if err <= eta || (t1 <= floor && ts <= floor) {
            break;
        }
        t1 = (0.5 * t1).max(floor);
        ts = (0.5 * ts).max(floor);
    }
    let mut run = best.ok_or_else(|| Error::Domain("controller produced no attempt".into()))?;
    run.plan.c_bound = measure_c_bound(solver, u_start, &run, f, opts)?;
    Ok(run)
}

/// ‖Δu(T)‖ / ‖r‖ for a fixed smooth perturbation r of relative size `opts.probe`.
fn measure_c_bound(
    solver: &Solver,
    u_start: &StateProfile,
    run: &ControllerRun,
    f: &NonlinearitySpec,
    opts: &ControllerOptions,
) -> Result<f64> {
    let scale = opts.probe * u_start.l2().max(1e-12);
    let shape = StateProfile::from_fn(&u_start.grid, u_start.time, |x| {
        (1.0 - x * x) * (2.0 + x).cos()
    });
    let r = shape.scaled(scale / shape.l2());
    let mut perturbed = u_start.clone();
    for (v, d) in perturbed.values.iter_mut().zip(&r.values) {
        *v += d;
    }
    let traj = replay_schedule(solver, &perturbed, &run.schedule, f, opts)?;
    let end = traj.last().expect("replay keeps the start");
    Ok(end.l2_distance(&run.state) / r.l2())
}

/// Two-piece controller reaching ‖u(T) - w_target‖ ≤ η, or `Unachievable`.
pub fn preserving_controller(
    solver: &Solver,
    u_start: &StateProfile,
    w_target: &StateProfile,
    eta: f64,
    f: &NonlinearitySpec,
    opts: &ControllerOptions,
) -> Result<(PreservingPlan, ControlSchedule, StateProfile)> {
    let run = synthesize_controller(solver, u_start, w_target, eta, f, opts)?;
    if !run.met {
        return Err(Error::Unachievable {
            eta,
            best: run.plan.achieved_error,
        });
    }
    Ok((run.plan, run.schedule, run.state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary::BoundarySpec;
    use crate::coefficient::{eval_coefficient, CoefficientSpec};
    use crate::grid::build_grid;
    use crate::operator::assemble_operator;

    fn legendre(n: usize) -> CoefficientField {
        eval_coefficient(&CoefficientSpec::Legendre, &build_grid(n).unwrap()).unwrap()
    }

    #[test]
    fn hermite_matches_ends() {
        let c = quintic_hermite(0.7, 0.1, -0.3, 2.0, 0.4, 0.5, -1.0);
        let p = Piece {
            origin: 0.0,
            dir: 1.0,
            len: 0.7,
            coeffs: c,
        };
        let h = 1e-4;
        let d = |s: f64| (p.eval_s(s + h) - p.eval_s(s - h)) / (2.0 * h);
        let k = |s: f64| (p.eval_s(s + h) - 2.0 * p.eval_s(s) + p.eval_s(s - h)) / (h * h);
        assert!((p.eval_s(0.7) - 0.4).abs() < 1e-12);
        assert!((d(0.7) - 0.5).abs() < 1e-6);
        assert!((k(0.7) + 1.0).abs() < 1e-4);
        assert!((d(0.0) + 0.3).abs() < 1e-6);
        assert!((k(0.0) - 2.0).abs() < 1e-4);
    }

    #[test]
    fn single_zero_at_origin() {
        let a = legendre(256);
        let p = DatumPrescription::ops(vec![0.0], vec![1.0], vec![0.0], 0.5, &a);
        let w = SmoothDatum::new(&p, &a).unwrap();
        let h = w.probe_step();
        assert_eq!(w.value(0.0), 0.0);
        assert!((w.derivative(0.0, h) - 1.0).abs() < 1e-8);
        assert!(w.second_derivative(0.0, h).abs() < 1e-8);
    }

    #[test]
    fn zero_at_half_with_unit_mu() {
        let a = legendre(256);
        let p = DatumPrescription::ops(vec![0.5], vec![1.0], vec![1.0], 0.4, &a);
        let w = SmoothDatum::new(&p, &a).unwrap();
        let h = w.probe_step();
        assert!((w.derivative(0.5, h) - 0.75).abs() < 1e-8);
        assert!(w.second_derivative(0.5, h).abs() < 1e-8);
    }

    #[test]
    fn two_zero_sign_pattern() {
        let a = legendre(512);
        let p = DatumPrescription::ops(vec![-0.3, 0.4], vec![1.0, -1.0], vec![1.0, -1.0], 0.3, &a);
        let u = build_initial_datum(&p, &a, &a.grid).unwrap();
        let pat = detect_sign_changes(&u, 0.0);
        assert_eq!(pat.zeros.len(), 2);
        assert_eq!(pat.leading_sign, crate::zeros::Sign::Negative);
        for (z, want) in pat.zeros.iter().zip(&p.zeros) {
            assert!((z - want).abs() < a.grid.dx());
        }
        let mid = u.interpolate(0.05);
        assert!(mid > 0.0);
    }

    #[test]
    fn rejects_crowded_zeros() {
        let a = legendre(64);
        let p = DatumPrescription::ops(vec![0.0, 0.05], vec![1.0, -1.0], vec![0.0, 0.0], 0.1, &a);
        assert!(matches!(
            SmoothDatum::new(&p, &a),
            Err(Error::InvalidPrescription(_))
        ));
    }

    #[test]
    fn amplification() {
        assert!((amplification_control(std::f64::consts::E, 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(amplification_control(1.0, 0.3).unwrap(), 0.0);
        let m = std::f64::consts::E.powi(2);
        assert!((amplification_control(m, 0.5).unwrap() - 4.0).abs() < 1e-14);
        assert!(matches!(
            amplification_control(0.5, 1.0),
            Err(Error::InvalidAmplification(_))
        ));
    }

    #[test]
    fn shape_of_halved_profile() {
        let g = build_grid(256).unwrap();
        let u = StateProfile::from_fn(&g, 0.0, |x| x + 0.2);
        let half = u.scaled(0.5);
        let rho = 0.1;
        let s = shape_control(&u, &half, rho, ALPHA_CAP, 1.0).unwrap();
        let p = detect_sign_changes(&u, 0.0);
        let ex = excluded_cells(&g, &p, &p, rho);
        let core = excluded_cells(&g, &p, &p, 2.0 * rho);
        for i in 0..g.n() {
            if ex[i] {
                assert_eq!(s[i], 0.0);
            } else if !core[i] {
                assert!((s[i] - 0.5f64.ln()).abs() < 1e-12);
            }
        }
        let same = shape_control(&u, &u, rho, ALPHA_CAP, 1.0).unwrap();
        assert!(same.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn shape_cap() {
        let g = build_grid(128).unwrap();
        let u = StateProfile::from_fn(&g, 0.0, |_| 1.0);
        let w = StateProfile::from_fn(
            &g,
            0.0,
            |x| if x.abs() < 0.3 { (-50.0f64).exp() } else { 1.0 },
        );
        let s = shape_control(&u, &w, 0.05, 20.0, 1.0).unwrap();
        let i = g.cell_of(0.0);
        assert_eq!(s[i], -20.0);
    }

    #[test]
    fn identity_needs_no_control() {
        let a = legendre(128);
        let solver = Solver::new(assemble_operator(&a, &BoundarySpec::WeightedNeumann).unwrap());
        let w = StateProfile::from_fn(&a.grid, 0.0, |x| (x + 0.3) * (x - 0.4));
        let eta = 0.05 * w.l2();
        let (plan, sch, end) = preserving_controller(
            &solver,
            &w,
            &w,
            eta,
            &NonlinearitySpec::zero(),
            &ControllerOptions::default(),
        )
        .unwrap();
        assert_eq!(sch.pieces.len(), 2);
        assert!(sch.pieces.iter().all(|p| p.is_zero()));
        assert!(plan.achieved_error <= eta);
        assert!(end.l2_distance(&w) <= eta);
    }

    #[test]
    fn halving_profile() {
        let a = legendre(256);
        let solver = Solver::new(assemble_operator(&a, &BoundarySpec::WeightedNeumann).unwrap());
        let w = StateProfile::from_fn(&a.grid, 0.0, |x| (x + 0.3) * (x - 0.4));
        let u = w.scaled(2.0);
        let eta = 0.05 * w.l2();
        let (plan, sch, _) = preserving_controller(
            &solver,
            &u,
            &w,
            eta,
            &NonlinearitySpec::zero(),
            &ControllerOptions::default(),
        )
        .unwrap();
        assert_eq!(sch.pieces.len(), 2);
        assert!(plan.m > 1.0 && plan.alpha_amplify > 0.0);
        assert!(plan.alpha_shape.iter().all(|&v| v <= 0.0));
        assert!(
            plan.achieved_error <= eta,
            "{} > {eta}",
            plan.achieved_error
        );
    }
}
