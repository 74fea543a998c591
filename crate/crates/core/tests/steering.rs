use signflow::steering::{min_spacing, steer_diffusion, steer_full, SteeringConfig};
use signflow::synthesis::pattern_tol;
use signflow::zeros::count_sign_changes;
use signflow::*;

fn setup(n: usize) -> (CoefficientField, Solver) {
    let a = eval_coefficient(&CoefficientSpec::Legendre, &build_grid(n).unwrap()).unwrap();
    let s = Solver::new(assemble_operator(&a, &BoundarySpec::WeightedNeumann).unwrap());
    (a, s)
}

fn roots(a: &CoefficientField, r: [f64; 2]) -> StateProfile {
    StateProfile::from_fn(&a.grid, 0.0, |x| (x - r[0]) * (x - r[1]))
}

#[test]
fn two_curve_run_invariants() {
    let (a, s) = setup(512);
    let u0 = roots(&a, [-0.3, 0.4]);
    let us = roots(&a, [0.1, 0.5]);
    let eta = 0.05 * us.l2();
    let cfg = SteeringConfig::new(0.02, &[-0.3, 0.4], &[0.1, 0.5]).unwrap();
    let rho0 = cfg.rho0_star;
    let eps = cfg.epsilon;
    let run = steer_full(&u0, &us, eta, cfg, &s, &a, &NonlinearitySpec::zero()).unwrap();
    assert!(run.success);
    let fam = &run.family;
    let n_int = fam.taus.len();

    // odd (amplify, shape) and even pieces, then the final odd pair
    assert_eq!(run.schedule.pieces.len(), 3 * n_int + 2);
    for (i, p) in run.schedule.pieces.iter().enumerate() {
        if i % 3 == 2 && i < 3 * n_int {
            assert!(p.is_zero(), "even piece {i} carries a control");
        }
    }
    let amp = &run.schedule.pieces[0].alpha_profile;
    assert!(amp.iter().all(|v| *v == amp[0]));

    for w in fam.inactive.windows(2) {
        assert!(w[0].iter().all(|l| w[1].contains(l)));
    }

    for u in &run.trajectory.profiles {
        assert_eq!(count_sign_changes(u, pattern_tol(u)), 2, "t = {}", u.time);
    }

    let short = fam
        .taus
        .iter()
        .zip(&fam.tau_tilde)
        .filter(|(t, tt)| **t < **tt - 1e-12)
        .count();
    assert!(short <= 2, "{short} truncated intervals");

    let budget: f64 = fam.odd_plans.iter().map(|p| p.eta).sum::<f64>() + eta;
    assert!(run.final_error <= budget);

    let targets = [0.1, 0.5];
    for ev in &fam.stop_events {
        for k in ev.k..=n_int {
            let x = fam.positions[k - 1][ev.l];
            assert!(
                (x - targets[ev.l]).abs() <= eps * rho0 / 4.0,
                "curve {} at {x} after k = {k}",
                ev.l
            );
        }
    }

    assert!(gap_functional(&fam.traces, -1.0, 1.0) >= 0.5 * rho0);
    for tr in &fam.traces {
        assert!(tr.samples.windows(2).all(|w| w[1].0 > w[0].0));
    }
}

#[test]
fn diffusion_family_reaches_targets() {
    let (a, s) = setup(256);
    let u0 = roots(&a, [-0.2, 0.3]);
    let targets = TargetSpec::new(vec![-0.05, 0.35], 0.02).unwrap();
    let cfg = SteeringConfig::new(0.02, &[-0.2, 0.3], &targets.targets).unwrap();
    let (fam, end) =
        steer_diffusion(&u0, &targets, cfg, &s, &a, &NonlinearitySpec::zero()).unwrap();
    let pos = fam.positions.last().unwrap();
    assert!(target_distance(pos, &targets).unwrap() <= 0.02);
    assert_eq!(count_sign_changes(&end, pattern_tol(&end)), 2);
    assert_eq!(fam.data.len(), fam.taus.len());
    // every datum starts at the previous end positions
    for (k, w) in fam.data.iter().enumerate().skip(1) {
        let z = detect_sign_changes(w, 0.0).zeros;
        for (zl, pl) in z.iter().zip(&fam.positions[k - 1]) {
            assert!((zl - pl).abs() <= a.grid.dx());
        }
    }
}

#[test]
fn pattern_mismatch_is_rejected() {
    let (a, s) = setup(128);
    let u0 = roots(&a, [-0.3, 0.4]);
    let us = StateProfile::from_fn(&a.grid, 0.0, |x| x - 0.2);
    let cfg = SteeringConfig::new(0.02, &[-0.3, 0.4], &[0.2]).unwrap();
    let r = steer_full(&u0, &us, 0.01, cfg, &s, &a, &NonlinearitySpec::zero());
    assert!(matches!(r, Err(Error::SignPatternMismatch(_))));
}

#[test]
fn exhausted_budget_fails() {
    let (a, s) = setup(256);
    let u0 = roots(&a, [-0.3, 0.4]);
    let targets = TargetSpec::new(vec![0.1, 0.5], 0.02).unwrap();
    let mut cfg = SteeringConfig::new(0.02, &[-0.3, 0.4], &targets.targets).unwrap();
    cfg.n_max = 3;
    let r = steer_diffusion(&u0, &targets, cfg, &s, &a, &NonlinearitySpec::zero());
    assert!(matches!(r, Err(Error::SteeringFailed(_))));
}

#[test]
fn already_on_target() {
    let (a, s) = setup(256);
    let u0 = roots(&a, [-0.3, 0.4]);
    let us = u0.scaled(1.5);
    let cfg = SteeringConfig::new(0.02, &[-0.3, 0.4], &[-0.3, 0.4]).unwrap();
    let run = steer_full(
        &u0,
        &us,
        0.05 * us.l2(),
        cfg,
        &s,
        &a,
        &NonlinearitySpec::zero(),
    )
    .unwrap();
    assert!(run.success);
    assert!(run.family.taus.is_empty());
    assert_eq!(run.schedule.pieces.len(), 2);
    assert!(min_spacing(&[-0.3, 0.4]) > 0.0);
}
