mod common;

use approx::assert_abs_diff_eq;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tangency_core::ambient::*;
use tangency_core::folding::*;
use tangency_core::systems::*;
use tangency_core::tangency::*;
use tangency_core::Error;

fn span(d: usize, cols: &[Vec<f64>]) -> Subspace {
    orthonormalize(&DMatrix::from_fn(d, cols.len(), |i, j| cols[j][i])).unwrap()
}

fn class(c_t: i64, d_t: i64, k_t: i64) -> Classification {
    Classification::Tangency(TangencyClass { c_t, d_t, k_t })
}

/// Cat-map base with the fold of the (1, s) elliptic scenario. The stable
/// plane is constant, so the residual has a closed form.
fn linear_elliptic(s: usize) -> ScenarioSystem {
    let da = build_scenario(1, s, FoldKind::Elliptic).unwrap();
    ScenarioSystem::new(da.contraction().to_vec(), Base::Linear(ToralAutomorphism::cat()), da.epsilon())
        .unwrap()
        .with_fold(da.fold().unwrap().clone())
        .unwrap()
}

#[test]
fn classification_examples() {
    let x = vec![1.0, 0.0, 0.0];
    let y = vec![0.0, 1.0, 0.0];
    let z = vec![0.0, 0.0, 1.0];
    let tol = DEFAULT_ANGLE_TOL;
    // Two curves in R^3 with a common tangent.
    assert_eq!(classify(&span(3, &[x.clone()]), &span(3, &[x.clone()]), 3, tol).unwrap(), class(2, 1, -1));
    // A curve tangent to a surface.
    assert_eq!(classify(&span(3, &[x.clone(), y.clone()]), &span(3, &[x.clone()]), 3, tol).unwrap(), class(1, 1, 0));
    // Two tangent surfaces.
    let xy = span(3, &[x.clone(), y.clone()]);
    assert_eq!(classify(&xy, &xy, 3, tol).unwrap(), class(1, 2, 1));
    // Generic pairs.
    assert_eq!(classify(&xy, &span(3, &[z.clone()]), 3, tol).unwrap(), Classification::Transverse);
    assert_eq!(classify(&xy, &span(3, &[y, z]), 3, tol).unwrap(), Classification::Transverse);
    assert_eq!(classify(&span(3, &[x]), &span(3, &[vec![0.0, 1.0, 1.0]]), 3, tol).unwrap(), Classification::Transverse);
    assert!(matches!(classify(&xy, &span(2, &[vec![1.0, 0.0]]), 3, tol), Err(Error::DimensionMismatch { .. })));
}

#[test]
fn small_angles_count_only_below_the_tolerance() {
    let xy = Subspace::coordinate(3, &[0, 1]).unwrap();
    let near = |a: f64| span(3, &[vec![1.0, 0.0, 0.0], vec![0.0, a.cos(), a.sin()]]);
    assert_eq!(classify(&xy, &near(1e-8), 3, 1e-6).unwrap(), class(1, 2, 1));
    assert_eq!(classify(&xy, &near(1e-4), 3, 1e-6).unwrap(), Classification::Transverse);
}

#[test]
fn residual_vanishes_at_the_center_of_linear_scenarios() {
    for sys in [linear_elliptic(2), build_scenario(2, 3, FoldKind::Mixed).unwrap()] {
        let fold = sys.fold().unwrap();
        let r = tangency_residual(&sys, fold, &vec![0.0; fold.k()], 60).unwrap();
        assert_eq!(r.len(), fold.s() * fold.c_t());
        assert!(r.norm() < 1e-12, "{}", r.norm());
    }
}

#[test]
fn residual_matches_the_projector_formula() {
    // |N^T F|_F = |N^T P_E|_F for any orthonormal basis F of E.
    for sys in [linear_elliptic(2), linear_elliptic(3), build_scenario(2, 3, FoldKind::Mixed).unwrap()] {
        let fold = sys.fold().unwrap();
        let exact = common::exact_stable_plane(&sys);
        let proj = exact.frame() * exact.frame().transpose();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let t: Vec<f64> = (0..fold.k()).map(|_| rand::Rng::random_range(&mut rng, -0.5..0.5)).collect();
            let expected = (normal_frame(fold, &t).unwrap().transpose() * &proj).norm();
            let got = tangency_residual(&sys, fold, &t, 60).unwrap().norm();
            assert_abs_diff_eq!(got, expected, epsilon = 1e-10);
        }
    }
}

#[test]
fn residual_grows_away_from_the_tangency() {
    let sys = linear_elliptic(2);
    let fold = sys.fold().unwrap();
    let norms: Vec<f64> = [1e-4, 1e-3, 1e-2, 1e-1]
        .iter()
        .map(|&delta| tangency_residual(&sys, fold, &[delta, 0.0], 60).unwrap().norm())
        .collect();
    assert!(norms.windows(2).all(|w| w[1] > w[0]), "{norms:?}");
    // Linear to leading order.
    assert_abs_diff_eq!(norms[1] / norms[0], 10.0, epsilon = 1e-3);
}

fn shifted_residual(sys: &ScenarioSystem, delta: f64) -> f64 {
    let fold = sys.fold().unwrap();
    let (_, e) = sys.base().unstable_pair().unwrap();
    let mut shift = vec![0.0; sys.dim()];
    for (i, v) in e.iter().enumerate() {
        shift[sys.box_dim() + i] = delta * v;
    }
    let moved = fold.with_chart(fold.chart().translated(&shift)).unwrap();
    tangency_residual(sys, &moved, &[0.0, 0.0], 60).unwrap().norm()
}

#[test]
fn da_stable_leaves_are_parallel_lines() {
    // The surgery pushes points along stable lines, so translating the fold
    // along the unstable direction keeps the tangency at the chart center.
    let sys = build_scenario(1, 2, FoldKind::Elliptic).unwrap();
    for delta in [0.0, 1e-3, 1e-2, 0.1] {
        assert!(shifted_residual(&sys, delta) < 1e-12, "{delta}");
    }
}

#[test]
fn residual_under_a_bump_is_continuous_in_the_shift() {
    let sys = build_scenario(1, 2, FoldKind::Elliptic).unwrap();
    let center = embed(sys.fold().unwrap(), &[0.0, 0.0]).unwrap();
    let bump = BumpPerturbation::with_c1_bound(center.translated(&[0.0, 0.01, 0.02]), 0.1, vec![0.3, -0.5, 1.0], 1e-3)
        .unwrap();
    let pert = sys.with_perturbation(bump).unwrap();
    let r0 = shifted_residual(&pert, 0.0);
    let diffs: Vec<f64> = [1e-6, 1e-5, 1e-4].map(|d| (shifted_residual(&pert, d) - r0).abs()).to_vec();
    assert!(diffs[2] > 0.0, "{diffs:?}");
    assert!(diffs.windows(2).all(|w| w[0] <= w[1] + 1e-15), "{diffs:?}");
    assert!(diffs[0] < 1e-5, "{diffs:?}");
}

#[test]
fn newton_finds_the_default_tangencies() {
    for (c, s, kind) in [
        (1, 1, FoldKind::Elliptic),
        (1, 2, FoldKind::Elliptic),
        (1, 3, FoldKind::Elliptic),
        (1, 2, FoldKind::Saddle),
        (2, 3, FoldKind::Mixed),
    ] {
        let sys = build_scenario(c, s, kind).unwrap();
        let fold = sys.fold().unwrap();
        let r = find_tangency_newton(&sys, fold, &vec![0.0; fold.k()], &NewtonOptions::default()).unwrap();
        assert!(r.residual_norm < 1e-9, "({c}, {s}) residual {}", r.residual_norm);
        let k = fold.k() as i64;
        let d = sys.dim() as i64;
        let s = s as i64;
        assert_eq!(r.class, TangencyClass { c_t: c as i64, d_t: s, k_t: k + s - d }, "({c}, {s})");
        assert_eq!(r.principal_angles.len(), s as usize);
        assert_eq!(r.detector, Detector::Newton);
        assert_eq!(r.point, embed(fold, &r.t_star).unwrap());
    }
}

#[test]
fn newton_lands_on_the_center_for_linear_bases() {
    let sys = build_scenario(2, 3, FoldKind::Mixed).unwrap();
    let fold = sys.fold().unwrap();
    let t0: Vec<f64> = (0..fold.k()).map(|i| 0.02 * (i as f64 - 2.5)).collect();
    let r = find_tangency_newton(&sys, fold, &t0, &NewtonOptions::default()).unwrap();
    assert_eq!(r.class, TangencyClass { c_t: 2, d_t: 3, k_t: 1 });
    assert!(r.t_star.iter().all(|v| v.abs() < 1e-9), "{:?}", r.t_star);
}

#[test]
fn newton_is_insensitive_to_the_difference_step() {
    let sys = build_scenario(1, 2, FoldKind::Elliptic).unwrap();
    let fold = sys.fold().unwrap();
    let solve = |h| {
        let opts = NewtonOptions { fd_step: h, ..Default::default() };
        find_tangency_newton(&sys, fold, &[0.0, 0.0], &opts).unwrap().t_star
    };
    let (a, b) = (solve(1e-6), solve(5e-7));
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() < 1e-9, "{a:?} vs {b:?}");
    }
}

#[test]
fn newton_reports_nonconvergence() {
    let sys = build_scenario(1, 2, FoldKind::Elliptic).unwrap();
    let fold = sys.fold().unwrap();
    let opts = NewtonOptions { max_iterations: 0, ..Default::default() };
    assert!(matches!(
        find_tangency_newton(&sys, fold, &[0.3, -0.2], &opts),
        Err(Error::NoConvergence { iterations: 0, .. })
    ));
    let other = build_scenario(1, 3, FoldKind::Elliptic).unwrap();
    assert!(matches!(
        find_tangency_newton(&other, fold, &[0.0, 0.0], &NewtonOptions::default()),
        Err(Error::DimensionMismatch { .. })
    ));
}

#[test]
fn detectors_are_deterministic() {
    let sys = build_scenario(1, 2, FoldKind::Elliptic).unwrap();
    let fold = sys.fold().unwrap();
    let leaves = LeafFamily::for_scenario(&sys).unwrap();
    let run = || {
        (
            find_tangency_newton(&sys, fold, &[0.0, 0.0], &NewtonOptions::default()).unwrap(),
            find_tangency_sweep(&sys, fold, &leaves, &SweepOptions::default()).unwrap(),
        )
    };
    assert_eq!(run(), run());
}

#[test]
fn sweep_infimum_is_the_center_leaf() {
    let sys = linear_elliptic(2);
    let fold = sys.fold().unwrap();
    let leaves = LeafFamily::for_scenario(&sys).unwrap();
    assert_eq!(leaves.mode(), LeafMode::Chart);
    let r = find_tangency_sweep(&sys, fold, &leaves, &SweepOptions::default()).unwrap();
    assert_eq!(r.detector, Detector::Sweep);
    assert!(r.leaf_parameter.unwrap().abs() < 1e-12, "{:?}", r.leaf_parameter);
    assert!(r.t_star.iter().all(|v| v.abs() < 1e-6), "{:?}", r.t_star);
    assert_eq!(r.class, TangencyClass { c_t: 1, d_t: 2, k_t: 1 });
}

#[test]
fn sweep_follows_a_shifted_fold() {
    let sys = linear_elliptic(2);
    let leaves = LeafFamily::for_scenario(&sys).unwrap();
    let (_, e) = sys.base().unstable_pair().unwrap();
    for h in [-0.004, 0.003] {
        let mut shift = vec![0.0; sys.dim()];
        for (i, v) in e.iter().enumerate() {
            shift[sys.box_dim() + i] = h * v;
        }
        let fold = sys.fold().unwrap();
        let moved = fold.with_chart(fold.chart().translated(&shift)).unwrap();
        let r = find_tangency_sweep(&sys, &moved, &leaves, &SweepOptions::default()).unwrap();
        assert_abs_diff_eq!(r.leaf_parameter.unwrap(), h, epsilon = 1e-12);
    }
}

#[test]
fn fold_meets_leaves_on_one_side_only() {
    let sys = linear_elliptic(2);
    let fold = sys.fold().unwrap();
    let leaves = LeafFamily::for_scenario(&sys).unwrap();
    let problem = FoldLeafIntersection::new(&sys, fold, &leaves, SweepOptions::default()).unwrap();
    for tau in [1e-6, 1e-4, 5e-3] {
        assert!(problem.meets(tau), "{tau}");
        assert!(!problem.meets(-tau), "{tau}");
    }
}

#[test]
fn sweep_needs_an_elliptic_hypersurface() {
    let sys = build_scenario(1, 2, FoldKind::Saddle).unwrap();
    let leaves = LeafFamily::for_scenario(&sys).unwrap();
    assert!(matches!(
        find_tangency_sweep(&sys, sys.fold().unwrap(), &leaves, &SweepOptions::default()),
        Err(Error::NotElliptic)
    ));
}

#[test]
fn detectors_agree_on_the_da_scenarios() {
    for s in 1..=3 {
        let sys = build_scenario(1, s, FoldKind::Elliptic).unwrap();
        let fold = sys.fold().unwrap();
        let a = find_tangency_newton(&sys, fold, &vec![0.0; s], &NewtonOptions::default()).unwrap();
        let leaves = LeafFamily::for_scenario(&sys).unwrap();
        let b = find_tangency_sweep(&sys, fold, &leaves, &SweepOptions::default()).unwrap();
        assert!(a.point.distance(&b.point) < 1e-6, "s = {s}: {}", a.point.distance(&b.point));
        assert_eq!(a.class, b.class);
    }
}

#[test]
fn detectors_agree_under_a_bump() {
    let sys = build_scenario(1, 2, FoldKind::Elliptic).unwrap();
    let fold = sys.fold().unwrap().clone();
    let center = embed(&fold, &[0.0, 0.0]).unwrap();
    let bump = BumpPerturbation::with_c1_bound(center.translated(&[0.0, 0.01, 0.02]), 0.1, vec![0.3, -0.5, 1.0], 1e-3)
        .unwrap();
    let pert = sys.with_perturbation(bump).unwrap();
    let leaves = LeafFamily::for_scenario(&pert).unwrap();
    assert_eq!(leaves.mode(), LeafMode::Shooting);
    let a = find_tangency_newton(&pert, &fold, &[0.0, 0.0], &NewtonOptions::default()).unwrap();
    let b = find_tangency_sweep(&pert, &fold, &leaves, &SweepOptions::default()).unwrap();
    assert!(a.point.distance(&b.point) < 1e-6, "{}", a.point.distance(&b.point));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn classification_is_rotation_invariant(seed in any::<u64>(), dims in (3usize..6).prop_flat_map(|d| (Just(d), 1..d, 1..d))) {
        let (d, a, b) = dims;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw = DMatrix::from_fn(d, d, |_, _| rand::Rng::random_range(&mut rng, -1.0..1.0));
        let q = raw.qr().q();
        // Coordinate planes sharing min(a, b) axes.
        let u = Subspace::coordinate(d, &(0..a).collect::<Vec<_>>()).unwrap();
        let v = Subspace::coordinate(d, &(0..b).collect::<Vec<_>>()).unwrap();
        let rot = |p: &Subspace| orthonormalize(&(&q * p.frame())).unwrap();
        let plain = classify(&u, &v, d, DEFAULT_ANGLE_TOL).unwrap();
        prop_assert_eq!(plain, classify(&rot(&u), &rot(&v), d, DEFAULT_ANGLE_TOL).unwrap());
        if let Classification::Tangency(c) = plain {
            prop_assert_eq!(c.c_t, c.d_t - c.k_t);
            prop_assert_eq!(c.d_t, a.min(b) as i64);
        }
    }
}
