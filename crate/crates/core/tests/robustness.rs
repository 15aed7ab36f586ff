use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tangency_core::folding::*;
use tangency_core::robustness::*;
use tangency_core::systems::*;
use tangency_core::tangency::{find_tangency_newton, Detector, NewtonOptions};

fn quick() -> ExperimentOptions {
    ExperimentOptions { certificate_grid: 3, ..Default::default() }
}

#[test]
fn zero_magnitude_changes_nothing() {
    for (c, s, kind) in [(1, 1, FoldKind::Elliptic), (2, 3, FoldKind::Mixed)] {
        let sys = build_scenario(c, s, kind).unwrap();
        let rows = persistence_trials(&sys, 0.0, 6, 3, &quick()).unwrap();
        let newton: Vec<_> = rows.iter().filter(|r| r.detector == Detector::Newton).collect();
        assert_eq!(newton.len(), 6);
        for r in &newton {
            assert!(r.success);
            assert!(r.displacement.unwrap() < 1e-9, "{r:?}");
        }
        // The sweep only runs on elliptic hypersurfaces.
        assert_eq!(rows.len(), if c == 1 { 12 } else { 6 });
    }
}

#[test]
fn trials_are_reproducible() {
    let sys = build_scenario(1, 2, FoldKind::Elliptic).unwrap();
    let a = persistence_trials(&sys, 1e-3, 4, 17, &quick()).unwrap();
    let b = persistence_trials(&sys, 1e-3, 4, 17, &quick()).unwrap();
    assert_eq!(a, b);
    let c = persistence_trials(&sys, 1e-3, 4, 18, &quick()).unwrap();
    assert_ne!(a, c);
}

#[test]
fn trial_seeds_separate_magnitudes_and_trials() {
    let seeds = [trial_seed(1, 1e-3, 0), trial_seed(1, 1e-3, 1), trial_seed(1, 3e-4, 0), trial_seed(2, 1e-3, 0)];
    for i in 0..seeds.len() {
        for j in i + 1..seeds.len() {
            assert_ne!(seeds[i], seeds[j]);
        }
    }
}

#[test]
fn ladder_experiment_behaves() {
    let sys = build_scenario(1, 1, FoldKind::Elliptic).unwrap();
    let ladder = MagnitudeLadder::new(vec![1e-2, 1e-3, 1e-4]).unwrap();
    let out = persistence_experiment(&sys, &ladder, 8, 5, &quick()).unwrap();
    assert_eq!(out.records.len(), 3 * 8 * 2);
    let s = &out.summary;
    assert_eq!(s.experiment, "system");
    assert!(s.stats.iter().all(|st| st.success_rate == 1.0));
    assert!(s.monotone);
    assert!(s.displacement_decreasing, "{:?}", s.stats.iter().map(|x| x.mean_displacement).collect::<Vec<_>>());
    assert!(s.displacement_slope.unwrap().is_finite());
    assert!(s.stats.iter().all(|st| st.max_agreement.unwrap() < 1e-6));
    assert_eq!(s.stats.iter().map(|st| st.magnitude).collect::<Vec<_>>(), ladder.magnitudes());
}

#[test]
fn summary_flags_follow_the_rows() {
    let row = |magnitude, trial, success, displacement: Option<f64>| TrialRecord {
        magnitude,
        trial,
        seed: 0,
        detector: Detector::Newton,
        success,
        residual: Some(0.0),
        displacement,
        detector_agreement: None,
        certified: None,
    };
    let records = vec![
        row(1e-2, 0, true, Some(2e-2)),
        row(1e-2, 1, false, None),
        row(1e-3, 0, true, Some(1e-3)),
        row(1e-3, 1, true, Some(1e-3)),
    ];
    let s = summarize("system", Placement::Overlap, &[0.0], &[1e-2, 1e-3], 2, &records);
    assert_eq!(s.stats[0].success_rate, 0.5);
    assert_eq!(s.stats[1].success_rate, 1.0);
    assert!(s.monotone);
    assert!(s.displacement_decreasing);
    // Slope through (1e-2, 2e-2), (1e-3, 1e-3) twice.
    let expected = (1e-2 * 2e-2 + 2.0 * 1e-3 * 1e-3) / (1e-4 + 2.0 * 1e-6);
    assert!((s.displacement_slope.unwrap() - expected).abs() < 1e-12);
    assert_eq!(s.envelope_violations, 0);
    assert_eq!(s.stats[0].sweep_successes, None);

    let worse = vec![row(1e-2, 0, true, Some(1e-3)), row(1e-3, 0, false, None)];
    let s = summarize("system", Placement::Overlap, &[0.0], &[1e-2, 1e-3], 1, &worse);
    assert!(!s.monotone);
}

#[test]
fn zero_fold_perturbation_leaves_the_report_unchanged() {
    let sys = build_scenario(1, 2, FoldKind::Elliptic).unwrap();
    let fold = sys.fold().unwrap();
    let zero = fold.with_perturbation(FoldPerturbation::random(fold.k(), fold.dim(), 0.0, 9)).unwrap();
    let opts = NewtonOptions::default();
    let a = find_tangency_newton(&sys, fold, &[0.0, 0.0], &opts).unwrap();
    let b = find_tangency_newton(&sys, &zero, &[0.0, 0.0], &opts).unwrap();
    assert_eq!(a, b);
}

#[test]
fn small_quadratic_fold_term_moves_the_tangency_slightly() {
    let delta = 1e-3;
    let sys = build_scenario(1, 2, FoldKind::Elliptic).unwrap();
    let fold = sys.fold().unwrap();
    let p = FoldPerturbation { terms: vec![PolyTerm { component: 0, coeff: delta, exponents: vec![0, 2] }] };
    let bent = fold.with_perturbation(p).unwrap();
    assert!(verify_folding(&bent, &sys.cone().unwrap(), 11).pass);
    let opts = NewtonOptions::default();
    let a = find_tangency_newton(&sys, fold, &[0.0, 0.0], &opts).unwrap();
    let b = find_tangency_newton(&sys, &bent, &a.t_star, &opts).unwrap();
    let shift = a.t_star.iter().zip(&b.t_star).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    assert!(shift < 10.0 * delta, "{shift}");
    assert_eq!(a.class, b.class);
}

#[test]
fn detector_failures_only_on_uncertified_folds() {
    let sys = build_scenario(1, 2, FoldKind::Elliptic).unwrap();
    let ladder = MagnitudeLadder::new(vec![3e-1, 1e-2]).unwrap();
    let out = fold_perturbation_experiment(&sys, &ladder, 6, 2, &quick()).unwrap();
    assert_eq!(out.summary.experiment, "fold");
    assert_eq!(out.summary.uncertified_failures, Some(0));
    assert!(out.records.iter().all(|r| r.certified.is_some()));
}

#[test]
fn magnitude_is_capped_near_the_fold() {
    let sys = build_scenario(1, 2, FoldKind::Elliptic).unwrap();
    let region = PerturbationRegion::around_fold(&sys, Placement::Overlap).unwrap();
    assert!(region.cap > 0.0 && region.cap < 1.0, "{}", region.cap);
    let bump = random_perturbation(&region, 10.0, 1).unwrap();
    assert!((bump.c1_bound() - region.cap).abs() <= 1e-12 * region.cap);
    assert!(random_perturbation(&region, -1e-3, 1).is_err());
    assert!(random_perturbation(&region, f64::NAN, 1).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn sampled_c1_size_respects_the_magnitude(seed in any::<u64>(), exp in -4.0..-1.0f64, away in any::<bool>()) {
        let sys = build_scenario(1, 2, FoldKind::Elliptic).unwrap();
        let placement = if away { Placement::Away } else { Placement::Overlap };
        let region = PerturbationRegion::around_fold(&sys, placement).unwrap();
        let magnitude = 10f64.powf(exp);
        let bump = random_perturbation(&region, magnitude, seed).unwrap();
        prop_assert!(bump.c1_bound() <= magnitude * (1.0 + 1e-12));
        let offset = region.anchor.distance(bump.center());
        let r = region.radius;
        if away {
            prop_assert!(offset >= r + 0.1 - 1e-12);
        } else {
            prop_assert!(offset <= 0.6 * r + 1e-12);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut c0, mut c1) = (0.0f64, 0.0f64);
        for _ in 0..200 {
            let v: Vec<f64> = (0..3).map(|_| rng.random_range(-r..r)).collect();
            let x = bump.center().translated(&v);
            c0 = c0.max(bump.displacement(&x).norm());
            c1 = c1.max(bump.differential(&x).norm());
        }
        prop_assert!(c0 + c1 <= bump.c1_bound() * (1.0 + 1e-9), "{} > {}", c0 + c1, bump.c1_bound());
    }
}
