//! Simulation and multiplicative control of sign-changing states for
//! `u_t = (a(x) u_x)_x + α(x,t) u + f(x,t,u)` on (-1, 1) with a degenerate
//! diffusion coefficient.

// `!(x > 0.0)` style checks are deliberate: they reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod boundary;
pub mod cli;
pub mod climate;
pub mod coefficient;
pub mod config;
pub mod error;
pub mod grid;
pub mod nonlinearity;
pub mod operator;
pub mod quadrature;
pub mod schedule;
pub mod solver;
pub mod spectral;
pub mod state;
pub mod steering;
pub mod synthesis;
pub mod tridiag;
pub mod zeros;

pub use boundary::BoundarySpec;
pub use coefficient::{eval_coefficient, CoefficientField, CoefficientSpec, Degeneracy};
pub use error::{Error, Result};
pub use grid::{build_grid, SpatialGrid};
pub use nonlinearity::NonlinearitySpec;
pub use operator::{assemble_operator, DiscreteOperator};
pub use schedule::{ControlPiece, ControlSchedule};
pub use solver::{Flow, Solver, Trajectory};
pub use spectral::{eigenpairs, propagate_mild, EigenSystem};
pub use state::{weighted_norms, StateProfile, WeightedNorms};
pub use steering::{
    plan_times, steer_diffusion, steer_full, SteeringConfig, SteeringFamily, SteeringRun,
    SteeringSummary,
};
pub use synthesis::{
    amplification_control, build_initial_datum, preserving_controller, replay_schedule,
    shape_control, synthesize_controller, two_step_error, ControllerOptions, DatumPrescription,
    PreservingPlan, SmoothDatum,
};
pub use zeros::{
    curve_ode_rhs, detect_sign_changes, gap_functional, same_order, target_distance, track_curves,
    CurveStatus, CurveTrace, CurveTracker, Sign, SignChangePattern, TargetSpec,
};
