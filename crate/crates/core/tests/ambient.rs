use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

use approx::assert_abs_diff_eq;
use nalgebra::DMatrix;
use proptest::prelude::*;
use tangency_core::ambient::*;
use tangency_core::Error;

fn span(d: usize, cols: &[&[f64]]) -> Subspace {
    let raw = DMatrix::from_fn(d, cols.len(), |i, j| cols[j][i]);
    orthonormalize(&raw).unwrap()
}

fn cone_e1(alpha: f64) -> ConeField {
    ConeField::new(Subspace::coordinate(2, &[0]).unwrap(), alpha).unwrap()
}

#[test]
fn orthonormalize_examples() {
    let e = span(3, &[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]]);
    let expected = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
    assert_abs_diff_eq!(e.frame(), &expected, epsilon = 1e-15);

    let raw = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
    assert!(matches!(orthonormalize(&raw), Err(Error::InvalidDimension(_))));

    // (3,4)/5 by hand.
    let e = span(2, &[&[3.0, 4.0]]);
    let sign = e.frame()[(0, 0)].signum();
    assert_abs_diff_eq!(sign * e.frame()[(0, 0)], 0.6, epsilon = 1e-15);
    assert_abs_diff_eq!(sign * e.frame()[(1, 0)], 0.8, epsilon = 1e-15);
}

#[test]
fn rank_deficient_frames_are_rejected() {
    let raw = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 1.0, 2.0, 0.0, 0.0]);
    assert!(matches!(orthonormalize(&raw), Err(Error::RankDeficient(_))));
    let raw = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 0.0, 1e-12, 0.0, 0.0]);
    assert!(matches!(orthonormalize(&raw), Err(Error::RankDeficient(_))));
}

#[test]
fn principal_angle_examples() {
    let e1 = span(2, &[&[1.0, 0.0]]);
    let e2 = span(2, &[&[0.0, 1.0]]);
    let diag = span(2, &[&[1.0, 1.0]]);
    assert_eq!(principal_angles(&e1, &e1).unwrap().angles(), &[0.0]);
    assert_abs_diff_eq!(principal_angles(&e1, &e2).unwrap().angles()[0], FRAC_PI_2, epsilon = 1e-15);
    // cos θ = 1/√2.
    assert_abs_diff_eq!(principal_angles(&e1, &diag).unwrap().angles()[0], FRAC_PI_4, epsilon = 1e-15);

    let e3 = span(3, &[&[1.0, 0.0, 0.0]]);
    assert!(matches!(principal_angles(&e1, &e3), Err(Error::DimensionMismatch { .. })));
}

#[test]
fn tiny_angles_are_resolved() {
    // arccos would lose everything below ~1e-8.
    let a: f64 = 1e-11;
    let u = span(2, &[&[1.0, 0.0]]);
    let v = span(2, &[&[a.cos(), a.sin()]]);
    let got = principal_angles(&u, &v).unwrap().angles()[0];
    assert!((got - a).abs() < 1e-20, "{got}");
}

#[test]
fn graph_norm_examples() {
    let cone = cone_e1(0.1);
    assert_eq!(graph_norm(cone.center(), &cone), 0.0);
    assert_abs_diff_eq!(graph_norm(&span(2, &[&[1.0, 0.05]]), &cone), 0.05, epsilon = 1e-15);
    assert_eq!(graph_norm(&span(2, &[&[0.0, 1.0]]), &cone), f64::INFINITY);
}

#[test]
fn cone_membership_examples() {
    let cone = cone_e1(0.1);
    assert!(cone_membership(cone.center(), &cone));
    assert!(cone_membership(cone.center(), &cone_e1(1e-6)));
    assert!(cone_membership(&span(2, &[&[1.0, 0.05]]), &cone));
    assert!(!cone_membership(&span(2, &[&[1.0, 0.2]]), &cone));
}

#[test]
fn cone_aperture_must_be_below_one() {
    let c = Subspace::coordinate(2, &[0]).unwrap();
    assert!(ConeField::new(c.clone(), 1.0).is_err());
    assert!(ConeField::new(c.clone(), 0.0).is_err());
    assert!(ConeField::new(c, 0.5).is_ok());
}

#[test]
fn torus_points_wrap_and_use_shortest_distance() {
    let p = AmbientPoint::new(vec![0.2, 1.25, -0.1], vec![false, true, true]).unwrap();
    assert_eq!(p.coords()[0], 0.2);
    assert_abs_diff_eq!(p.coords()[1], 0.25, epsilon = 1e-15);
    assert_abs_diff_eq!(p.coords()[2], 0.9, epsilon = 1e-15);
    let q = AmbientPoint::new(vec![0.2, 0.25, 0.05], vec![false, true, true]).unwrap();
    assert_abs_diff_eq!(p.distance(&q), 0.15, epsilon = 1e-15);
    assert!(AmbientPoint::euclidean(vec![1.0]).is_err());
    assert!(AmbientPoint::euclidean(vec![1.0, f64::NAN]).is_err());
}

fn frame_strategy(d: usize, s: usize) -> impl Strategy<Value = DMatrix<f64>> {
    proptest::collection::vec(-1.0..1.0f64, d * s).prop_map(move |v| DMatrix::from_vec(d, s, v))
}

fn plane_strategy() -> impl Strategy<Value = (Subspace, Subspace)> {
    (3usize..7)
        .prop_flat_map(|d| (Just(d), 1..d))
        .prop_flat_map(|(d, s)| (frame_strategy(d, s), frame_strategy(d, s)))
        .prop_filter_map("full rank", |(a, b)| Some((orthonormalize(&a).ok()?, orthonormalize(&b).ok()?)))
}

proptest! {
    #[test]
    fn orthonormal_frames((u, _) in plane_strategy()) {
        let g = u.frame().transpose() * u.frame();
        let err = (g - DMatrix::identity(u.dim(), u.dim())).amax();
        prop_assert!(err < 1e-12, "{}", err);
    }

    #[test]
    fn principal_angles_are_symmetric_sorted_and_bounded((u, v) in plane_strategy()) {
        let a = principal_angles(&u, &v).unwrap();
        let b = principal_angles(&v, &u).unwrap();
        prop_assert_eq!(a.angles().len(), u.dim().min(v.dim()));
        for (x, y) in a.angles().iter().zip(b.angles()) {
            prop_assert!((x - y).abs() < 1e-12, "{:?} vs {:?}", a.angles(), b.angles());
        }
        prop_assert!(a.angles().windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(a.angles().iter().all(|&x| (0.0..=FRAC_PI_2).contains(&x)));
    }

    #[test]
    fn graph_norm_vanishes_exactly_on_the_center((u, v) in plane_strategy(), alpha in 0.01..0.99f64, mix in frame_strategy(6, 6)) {
        let cone = ConeField::new(u.clone(), alpha).unwrap();
        // Same plane, rotated frame.
        let s = u.dim();
        let q = (mix.view((0, 0), (s, s)).into_owned() + DMatrix::identity(s, s) * 3.0).qr().q();
        let rotated = orthonormalize(&(u.frame() * q)).unwrap();
        let gn = graph_norm(&rotated, &cone);
        prop_assert!(gn < 1e-12);
        prop_assert!(rotated.approx_eq(&u, ANGLE_TOL));
        // A generic plane is not the center.
        if !v.approx_eq(&u, 1e-6) {
            prop_assert!(graph_norm(&v, &cone) > 1e-12);
        }
    }

    #[test]
    fn cone_membership_ignores_the_frame((u, v) in plane_strategy(), alpha in 0.01..0.99f64, mix in frame_strategy(6, 6)) {
        let cone = ConeField::new(u, alpha).unwrap();
        let s = v.dim();
        let m = mix.view((0, 0), (s, s)).into_owned() + DMatrix::identity(s, s) * 3.0;
        let Ok(w) = orthonormalize(&(v.frame() * m)) else { return Ok(()); };
        prop_assert_eq!(cone_membership(&v, &cone), cone_membership(&w, &cone));
        let (a, b) = (graph_norm(&v, &cone), graph_norm(&w, &cone));
        prop_assert!(a == b || (a - b).abs() <= 1e-9 * a.max(1.0));
    }

    #[test]
    fn graph_round_trip(alpha in 0.05..0.95f64, l in proptest::collection::vec(-1.0..1.0f64, 2)) {
        let center = Subspace::coordinate(3, &[0, 1]).unwrap();
        let cone = ConeField::new(center, alpha).unwrap();
        let lm = DMatrix::from_row_slice(1, 2, &l);
        let e = cone.plane_from_graph(&lm).unwrap();
        let back = cone.graph_map(&e).unwrap();
        // Same map up to the sign convention of the complement basis.
        let err = (back.abs() - lm.abs()).amax();
        prop_assert!(err < 1e-12);
    }
}
