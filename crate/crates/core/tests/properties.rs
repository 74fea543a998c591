use proptest::prelude::*;

use signflow::climate::{sellers_coalbedo, EbmBlock, EbmModel, InsolationProfile, SellersParams};
use signflow::coefficient::classify_degeneracy;
use signflow::config::parse_nonlinearity;
use signflow::synthesis::{excluded_cells, pattern_tol};
use signflow::zeros::{count_sign_changes, value_at};
use signflow::*;

fn field(spec: CoefficientSpec, n: usize) -> CoefficientField {
    eval_coefficient(&spec, &build_grid(n).unwrap()).unwrap()
}

fn sdp(n: usize) -> (CoefficientField, Solver) {
    let a = field(CoefficientSpec::Legendre, n);
    let s = Solver::new(assemble_operator(&a, &BoundarySpec::WeightedNeumann).unwrap());
    (a, s)
}

fn profile(a: &CoefficientField, c: &[f64]) -> StateProfile {
    StateProfile::from_fn(&a.grid, 0.0, |x| {
        c.iter()
            .enumerate()
            .map(|(k, ck)| ck * (k as f64 * 1.3 * x + 0.4 * k as f64).cos())
            .sum()
    })
}

fn schedule(n: usize, t_end: f64, levels: &[f64]) -> ControlSchedule {
    let k = levels.len();
    let pieces = (0..k)
        .map(|j| ControlPiece {
            t_start: t_end * j as f64 / k as f64,
            t_end: t_end * (j + 1) as f64 / k as f64,
            alpha_profile: (0..n)
                .map(|i| levels[(i + j) % k] * (1.0 + (i % 7) as f64 / 7.0))
                .collect(),
        })
        .collect();
    ControlSchedule::new(pieces).unwrap()
}

#[test]
fn degeneracy_stable_under_refinement() {
    for (spec, want) in [
        (CoefficientSpec::Legendre, "SDP"),
        (CoefficientSpec::Sqrt, "WDP"),
    ] {
        assert_eq!(classify_degeneracy(&spec).label(), want);
        for n in [64, 128, 256, 512] {
            assert_eq!(field(spec.clone(), n).degeneracy.label(), want);
        }
    }
}

#[test]
fn legendre_xi_moment_finite() {
    let m = field(CoefficientSpec::Legendre, 64).xi_moment(1.0).unwrap();
    // ∫ ½|log((1+x)/(1-x))| dx over (-1, 1) = 2 log 2
    assert!((m - 2.0 * 2f64.ln()).abs() < 1e-3, "{m}");
}

#[test]
fn parseval_tail_small_for_smooth_data() {
    let (a, s) = sdp(512);
    let es = eigenpairs(&s.op, 64).unwrap();
    for u in [
        StateProfile::from_fn(&a.grid, 0.0, |x| x.exp()),
        StateProfile::from_fn(&a.grid, 0.0, |x| (3.0 * x).sin() + 0.2),
        StateProfile::from_fn(&a.grid, 0.0, |x| 1.0 / (1.2 + x)),
    ] {
        assert!(es.parseval_tail(&u) <= 1e-2);
    }
}

#[test]
fn mild_propagator_strongly_continuous() {
    let (a, s) = sdp(256);
    let es = eigenpairs(&s.op, 64).unwrap();
    let f = NonlinearitySpec::zero();
    let u0 = StateProfile::from_fn(&a.grid, 0.0, |x| (2.0 * x).cos() + x);
    let projected =
        StateProfile::new(&a.grid, es.synthesize(&es.project(&u0.values)), 0.0).unwrap();
    let mut prev = f64::INFINITY;
    for j in 1..25 {
        let t = 0.5f64.powi(j);
        let d = propagate_mild(&u0, 0.0, &f, t, &es, None)
            .unwrap()
            .l2_distance(&projected);
        assert!(d < prev);
        prev = d;
    }
    assert!(prev < 1e-3);
}

#[test]
fn shape_control_profile() {
    let (a, _) = sdp(512);
    let u = StateProfile::from_fn(&a.grid, 0.0, |x| 2.0 * (x + 0.3) * (x - 0.4));
    let w = StateProfile::from_fn(&a.grid, 0.0, |x| (x + 0.3) * (x - 0.4) * (1.0 + 0.3 * x));
    let p = detect_sign_changes(&u, 0.0);
    let rho = 0.1;
    let alpha = shape_control(&u, &w, rho, 20.0, 1.0).unwrap();
    let excluded = excluded_cells(&a.grid, &p, &p, rho);
    assert!(alpha.iter().all(|v| *v <= 0.0));
    assert_eq!(alpha[0], 0.0);
    assert_eq!(alpha[511], 0.0);
    let dx = a.grid.dx();
    let ratio: Vec<f64> = (1..512)
        .map(|f| (alpha[f] - alpha[f - 1]) / dx / a.values_at_faces[f])
        .collect();
    assert!(ratio.iter().all(|r| r.is_finite()));
    let edge = 512 / 20;
    assert!(ratio[..edge]
        .iter()
        .chain(&ratio[511 - edge..])
        .all(|r| *r == 0.0));
    for (i, ex) in excluded.iter().enumerate() {
        if *ex {
            assert_eq!(alpha[i], 0.0);
        }
    }
}

#[test]
fn controller_is_two_static_pieces_and_halving_helps() {
    let (a, s) = sdp(256);
    let opts = ControllerOptions::default();
    let f = NonlinearitySpec::zero();
    let pairs = [
        (
            StateProfile::from_fn(&a.grid, 0.0, |x| (x + 0.3) * (x - 0.4)),
            StateProfile::from_fn(&a.grid, 0.0, |x| {
                1.5 * (x + 0.3) * (x - 0.4) * (1.0 + 0.2 * x)
            }),
        ),
        (
            StateProfile::from_fn(&a.grid, 0.0, |x| (std::f64::consts::PI * x).sin()),
            StateProfile::from_fn(&a.grid, 0.0, |x| 0.5 * (std::f64::consts::PI * x).sin()),
        ),
    ];
    for (u, w) in &pairs {
        let eta = 0.05 * w.l2();
        let (_, sch, _) = preserving_controller(&s, u, w, eta, &f, &opts).unwrap();
        assert_eq!(sch.pieces.len(), 2);
        let amp = &sch.pieces[0].alpha_profile;
        assert!(amp.iter().all(|v| *v == amp[0]));
        let mut t = 4e-3;
        let mut prev = two_step_error(&s, u, w, eta, &f, &opts, t, t).unwrap();
        while t > 1e-3 {
            t *= 0.5;
            let err = two_step_error(&s, u, w, eta, &f, &opts, t, t).unwrap();
            assert!(err <= prev * (1.0 + 1e-9), "t = {t}: {err} > {prev}");
            prev = err;
        }
    }
}

#[test]
fn sdp_conserves_mass() {
    let (a, s) = sdp(256);
    let u0 = StateProfile::from_fn(&a.grid, 0.0, |x| (x - 0.2).powi(3) + 0.5);
    let sch = ControlSchedule::constant(256, 0.0, 0.02, 0.0).unwrap();
    let mut prev = u0.integral();
    s.evolve_monitored(
        &u0,
        &sch,
        &NonlinearitySpec::zero(),
        1e-4,
        usize::MAX,
        |u| {
            let m = u.integral();
            assert!((m - prev).abs() <= 1e-10);
            prev = m;
            Flow::Continue
        },
    )
    .unwrap();
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn nonnegative_for_nonnegative_data(
        c in prop::collection::vec(0.0f64..2.0, 1..4),
        levels in prop::collection::vec(-6.0f64..6.0, 1..4),
        model in 0usize..4,
        weak in any::<bool>(),
    ) {
        let n = 96;
        let a = field(if weak { CoefficientSpec::Sqrt } else { CoefficientSpec::Legendre }, n);
        let bc = if weak { BoundarySpec::DIRICHLET } else { BoundarySpec::WeightedNeumann };
        let s = Solver::new(assemble_operator(&a, &bc).unwrap());
        let f = [
            NonlinearitySpec::zero(),
            NonlinearitySpec::linear(-1.0).unwrap(),
            NonlinearitySpec::saturating(0.5, 2.0).unwrap(),
            NonlinearitySpec::saturating(-1.0, 1.5).unwrap(),
        ][model].clone();
        let u0 = StateProfile::from_fn(&a.grid, 0.0, |x| {
            c.iter().enumerate().map(|(k, ck)| ck * (1.0 + (k as f64 * 2.0 * x).cos())).sum()
        });
        let sch = schedule(n, 0.03, &levels);
        s.evolve_monitored(&u0, &sch, &f, 2e-4, usize::MAX, |u| {
            assert!(u.min() >= -1e-10, "min {}", u.min());
            Flow::Continue
        }).unwrap();
    }

    #[test]
    fn energy_dissipates_without_growth(
        c in prop::collection::vec(-1.0f64..1.0, 1..5),
        levels in prop::collection::vec(-5.0f64..0.0, 1..4),
    ) {
        let (a, s) = sdp(96);
        let u0 = profile(&a, &c);
        let sch = schedule(96, 0.03, &levels);
        let mut prev = u0.l2();
        s.evolve_monitored(&u0, &sch, &NonlinearitySpec::zero(), 2e-4, usize::MAX, |u| {
            let e = u.l2();
            assert!(e <= prev * (1.0 + 1e-12) + 1e-15);
            prev = e;
            Flow::Continue
        }).unwrap();
    }

    #[test]
    fn zero_number_never_grows(c in prop::collection::vec(-1.0f64..1.0, 2..6)) {
        let (a, s) = sdp(128);
        let u0 = profile(&a, &c);
        let sch = ControlSchedule::constant(128, 0.0, 0.05, 0.0).unwrap();
        let mut prev = count_sign_changes(&u0, pattern_tol(&u0));
        s.evolve_monitored(&u0, &sch, &NonlinearitySpec::zero(), 1e-4, usize::MAX, |u| {
            let k = count_sign_changes(u, pattern_tol(u));
            assert!(k <= prev);
            prev = k;
            Flow::Continue
        }).unwrap();
    }

    #[test]
    fn gronwall_perturbation(
        c in prop::collection::vec(-1.0f64..1.0, 1..4),
        d in prop::collection::vec(-1.0f64..1.0, 1..4),
        levels in prop::collection::vec(-3.0f64..0.0, 1..3),
    ) {
        let (a, s) = sdp(96);
        let f = NonlinearitySpec::saturating(1.0, 2.0).unwrap();
        let t_end = 0.9 / (4.0 * f.nu);
        let u_in = profile(&a, &c);
        let r = profile(&a, &d).scaled(0.05);
        prop_assume!(r.l2() > 1e-6);
        let mut v_in = u_in.clone();
        for (v, dr) in v_in.values.iter_mut().zip(&r.values) {
            *v += dr;
        }
        let sch = schedule(96, t_end, &levels);
        let u = s.evolve(&u_in, &sch, &f, 1e-4, usize::MAX).unwrap();
        let v = s.evolve(&v_in, &sch, &f, 1e-4, usize::MAX).unwrap();
        let h = u.last().unwrap().l2_distance(v.last().unwrap());
        prop_assert!(h <= std::f64::consts::SQRT_2 * r.l2() * 1.05);
    }

    #[test]
    fn roots_located_within_a_cell(mut roots in prop::collection::vec(-0.9f64..0.9, 1..5)) {
        roots.sort_by(|x, y| x.partial_cmp(y).unwrap());
        prop_assume!(roots.windows(2).all(|w| w[1] - w[0] > 0.05));
        let (a, _) = sdp(256);
        let u = StateProfile::from_fn(&a.grid, 0.0, |x| roots.iter().fold(1.0, |acc, r| acc * (x - r)));
        let p = detect_sign_changes(&u, 0.0);
        prop_assert_eq!(p.zeros.len(), roots.len());
        for (z, r) in p.zeros.iter().zip(&roots) {
            prop_assert!((z - r).abs() <= a.grid.dx());
        }
    }

    #[test]
    fn tracked_points_stay_on_zeros(
        zeros in prop::collection::vec(-0.7f64..0.7, 1..3),
        mu in -1.0f64..1.0,
    ) {
        let mut zeros = zeros;
        zeros.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let rho = signflow::steering::min_spacing(&zeros);
        prop_assume!(rho > 0.2);
        let (a, s) = sdp(256);
        let lambdas = (0..zeros.len()).map(|l| if l % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let p = DatumPrescription::ops(zeros.clone(), lambdas, vec![mu; zeros.len()], rho, &a);
        let w = build_initial_datum(&p, &a, &a.grid).unwrap();
        let pat = detect_sign_changes(&w, 0.0);
        let mut tracker = CurveTracker::new(&w, &pat, rho, None);
        let sch = ControlSchedule::constant(256, 0.0, 0.005, 0.0).unwrap();
        s.evolve_monitored(&w, &sch, &NonlinearitySpec::zero(), 1e-5, usize::MAX, |u| {
            tracker.update(u);
            // the interpolant is linear between centers, so the root is exact up to rounding
            let tol = pattern_tol(u).max(1e-14);
            for x in tracker.positions() {
                assert!(value_at(u, x).abs() < 10.0 * tol);
            }
            Flow::Continue
        }).unwrap();
        prop_assert!(gap_functional(tracker.traces(), -1.0, 1.0) >= 0.5 * rho);
    }

    #[test]
    fn ebm_recentered_and_coalbedo_monotone(
        q in 0.0f64..400.0,
        a_i in 0.1f64..0.5,
        width in 0.05f64..0.4,
        eta in 0.5f64..5.0,
        m in 0.01f64..0.9,
        reference in 240.0f64..300.0,
    ) {
        let p = SellersParams {
            q,
            s_profile: InsolationProfile::Table(vec![0.6, 1.2, 0.6]),
            a_i,
            a_f: a_i + width,
            u_s: 263.15,
            eta_smooth: eta,
            sigma_sb: 5.67e-8,
            m_opacity: m,
        };
        let mut prev = 0.0;
        for k in 0..200 {
            let b = sellers_coalbedo(240.0 + 0.25 * k as f64, &p);
            prop_assert!(b >= prev);
            prev = b;
        }
        let block = EbmBlock { model: EbmModel::Sellers(p), reference, range: [-20.0, 20.0] };
        let f = signflow::climate::make_ebm_nonlinearity(&block).unwrap();
        for x in [-0.95, -0.2, 0.0, 0.6] {
            prop_assert_eq!(f.eval(x, 0.3, 0.0), 0.0);
        }
        let v = serde_json::to_value(&block).unwrap();
        prop_assert!(parse_nonlinearity(Some(&v)).is_ok());
    }
}
