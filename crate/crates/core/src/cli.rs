//! Command-line front end: `signflow eigen|evolve|steer --config F`,
//! `signflow suite --dir D`.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde_json::json;

use crate::config::{Command, Scenario, ScenarioConfig};
use crate::error::{Error, Result};
use crate::schedule::ControlSchedule;
use crate::solver::Flow;
use crate::spectral::eigenpairs;
use crate::steering::steer_full;
use crate::synthesis::pattern_tol;
use crate::zeros::{detect_sign_changes, write_traces_csv, CurveTracker};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_STEERING: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "signflow",
    version,
    about = "Degenerate reaction-diffusion runs with sign-change steering"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Sub,
}

#[derive(Debug, Subcommand)]
pub enum Sub {
    /// Leading eigenpairs of the diffusion operator.
    Eigen {
        #[arg(long)]
        config: PathBuf,
    },
    /// Forward evolution under a constant control.
    Evolve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Steer the sign changes of the initial profile onto the target's.
    Steer {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run every *.json scenario in a directory.
    Suite {
        #[arg(long)]
        dir: PathBuf,
    },
}

/// Files produced by a run, written only once the run has finished.
#[derive(Debug, Default)]
pub struct Artifacts {
    pub files: Vec<(String, Vec<u8>)>,
}

impl Artifacts {
    fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    fn json(&mut self, name: &str, v: &serde_json::Value) {
        let mut s = serde_json::to_string_pretty(v).expect("json");
        s.push('\n');
        self.add(name, s.into_bytes());
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        for (name, bytes) in &self.files {
            fs::write(dir.join(name), bytes)?;
        }
        Ok(())
    }
}

/// Outcome of a single scenario.
#[derive(Debug)]
pub struct Outcome {
    pub artifacts: Artifacts,
    pub success: bool,
}

pub fn run_eigen(s: &Scenario) -> Result<Outcome> {
    let es = eigenpairs(&s.solver.op, s.config.modes)?;
    let mut out = Artifacts::default();
    let mut csv = String::from("p,lambda\n");
    for (p, l) in es.lambdas.iter().enumerate() {
        csv.push_str(&format!("{},{}\n", p + 1, l));
    }
    out.add("eigen.csv", csv.into_bytes());
    for p in 0..es.len() {
        let mut m = String::from("x,phi\n");
        for (x, v) in es.grid.centers().iter().zip(&es.modes[p]) {
            m.push_str(&format!("{x},{v}\n"));
        }
        out.add(&format!("mode_{}.csv", p + 1), m.into_bytes());
    }
    out.json(
        "summary.json",
        &json!({
            "command": "eigen",
            "n": s.coefficient.grid.n(),
            "degeneracy": s.coefficient.degeneracy.label(),
            "boundary": s.boundary.label(),
            "lambdas": es.lambdas,
        }),
    );
    Ok(Outcome {
        artifacts: out,
        success: true,
    })
}

pub fn run_evolve(s: &Scenario) -> Result<Outcome> {
    let u0 = s
        .initial
        .as_ref()
        .ok_or_else(|| Error::Config("missing initial profile".into()))?;
    let p = &s.config.solver;
    let sch = ControlSchedule::constant(u0.n(), 0.0, p.t_final, p.alpha)?;
    let pattern = detect_sign_changes(u0, pattern_tol(u0));
    let window = crate::steering::min_spacing(&pattern.zeros).min(0.5);
    let mut tracker = CurveTracker::new(u0, &pattern, window, Some(&s.coefficient));
    let mut min_u = u0.min();
    let traj =
        s.solver
            .evolve_monitored(u0, &sch, &s.nonlinearity, p.dt, p.snapshot_stride, |u| {
                tracker.update(u);
                min_u = min_u.min(u.min());
                Flow::Continue
            })?;
    let last = traj.last().cloned().unwrap_or_else(|| u0.clone());
    let mut out = Artifacts::default();
    let mut buf = Vec::new();
    traj.write_csv(&mut buf)?;
    out.add("trajectory.csv", buf);
    let traces = tracker.into_traces();
    let mut buf = Vec::new();
    write_traces_csv(&traces, &mut buf)?;
    out.add("traces.csv", buf);
    let tol = pattern_tol(&last);
    out.json(
        "summary.json",
        &json!({
            "command": "evolve",
            "t_final": last.time,
            "snapshots": traj.len(),
            "final_l2": last.l2(),
            "min_u": min_u,
            "sign_changes_initial": pattern.len(),
            "sign_changes_final": detect_sign_changes(&last, tol).len(),
            "curves_flagged": traces.iter().filter(|t| t.flagged).count(),
        }),
    );
    Ok(Outcome {
        artifacts: out,
        success: true,
    })
}

pub fn run_steer(s: &Scenario) -> Result<Outcome> {
    let (u0, us) = match (&s.initial, &s.target) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            return Err(Error::Config(
                "steer needs initial and target profiles".into(),
            ))
        }
    };
    let (cfg, eta) = s.steering_setup()?;
    let clock = Instant::now();
    let run = steer_full(u0, us, eta, cfg, &s.solver, &s.coefficient, &s.nonlinearity)?;
    let mut out = Artifacts::default();
    let mut buf = Vec::new();
    run.trajectory.write_csv(&mut buf)?;
    out.add("trajectory.csv", buf);
    let mut buf = Vec::new();
    write_traces_csv(&run.family.traces, &mut buf)?;
    out.add("traces.csv", buf);
    let mut summary = serde_json::to_value(run.summary(eta)).expect("summary");
    // timing goes to its own file so that summary.json is reproducible
    if let Some(obj) = summary.as_object_mut() {
        obj.remove("wallclock");
        obj.insert("command".into(), json!("steer"));
    }
    out.json("summary.json", &summary);
    out.json(
        "timing.json",
        &json!({ "wallclock": clock.elapsed().as_secs_f64() }),
    );
    Ok(Outcome {
        artifacts: out,
        success: run.success,
    })
}

pub fn error_json(e: &Error) -> String {
    let kind = match e {
        Error::Config(_) => "config",
        Error::SteeringFailed(_) => "steering_failed",
        Error::Unachievable { .. } => "unachievable",
        Error::SignPatternMismatch(_) => "sign_pattern_mismatch",
        Error::BlowUp { .. } => "blow_up",
        Error::Io(_) => "io",
        _ => "invalid_input",
    };
    json!({ "error": kind, "message": e.to_string() }).to_string()
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::SteeringFailed(_) | Error::Unachievable { .. } => EXIT_STEERING,
        _ => EXIT_CONFIG,
    }
}

/// Output directory: `SIGNFLOW_OUT`, else the config's `output`, else `out`.
pub fn output_dir(cfg: &ScenarioConfig) -> PathBuf {
    std::env::var_os("SIGNFLOW_OUT")
        .map(PathBuf::from)
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from("out"))
}

/// Runs one scenario and returns the process exit code; errors are printed
/// to stderr as JSON.
pub fn run_scenario(path: &Path, command: Option<Command>, out_override: Option<&Path>) -> i32 {
    let cfg = match ScenarioConfig::load(path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{}", error_json(&e));
            return EXIT_CONFIG;
        }
    };
    let Some(command) = command.or(cfg.command) else {
        eprintln!(
            "{}",
            error_json(&Error::Config(format!(
                "{}: no command given",
                path.display()
            )))
        );
        return EXIT_CONFIG;
    };
    let scenario = match cfg.prepare(command) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("{}", error_json(&e));
            return EXIT_CONFIG;
        }
    };
    let result = match command {
        Command::Eigen => run_eigen(&scenario),
        Command::Evolve => run_evolve(&scenario),
        Command::Steer => run_steer(&scenario),
    };
    match result {
        Ok(o) => {
            let dir = out_override
                .map(Path::to_path_buf)
                .unwrap_or_else(|| output_dir(&cfg));
            if let Err(e) = o.artifacts.write(&dir) {
                eprintln!("{}", error_json(&e));
                return EXIT_CONFIG;
            }
            if o.success {
                EXIT_OK
            } else {
                eprintln!(
                    "{}",
                    error_json(&Error::SteeringFailed(
                        "targets or final accuracy not reached".into()
                    ))
                );
                EXIT_STEERING
            }
        }
        Err(e) => {
            eprintln!("{}", error_json(&e));
            exit_code(&e)
        }
    }
}

/// Runs all `*.json` files in `dir` concurrently, each into its own
/// subdirectory of the output root. Returns the largest exit code.
pub fn run_suite(dir: &Path) -> i32 {
    let mut paths: Vec<PathBuf> = match fs::read_dir(dir) {
        Ok(rd) => rd
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect(),
        Err(e) => {
            eprintln!(
                "{}",
                error_json(&Error::Config(format!(
                    "cannot read {}: {e}",
                    dir.display()
                )))
            );
            return EXIT_CONFIG;
        }
    };
    paths.sort();
    let root = std::env::var_os("SIGNFLOW_OUT")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("out"));
    std::thread::scope(|scope| {
        let handles: Vec<_> = paths
            .iter()
            .map(|p| {
                let out = root.join(p.file_stem().unwrap_or_default());
                scope.spawn(move || run_scenario(p, None, Some(&out)))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or(EXIT_CONFIG))
            .max()
            .unwrap_or(EXIT_OK)
    })
}

pub fn main_with(cli: Cli) -> i32 {
    match cli.command {
        Sub::Eigen { config } => run_scenario(&config, Some(Command::Eigen), None),
        Sub::Evolve { config } => run_scenario(&config, Some(Command::Evolve), None),
        Sub::Steer { config } => run_scenario(&config, Some(Command::Steer), None),
        Sub::Suite { dir } => run_suite(&dir),
    }
}
