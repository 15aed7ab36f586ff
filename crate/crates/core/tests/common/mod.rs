#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use tangency_core::ambient::{orthonormalize, AmbientPoint, Subspace};
use tangency_core::systems::{Diffeomorphism, ScenarioSystem};

/// Stable eigenvector of an integer matrix with a single eigenvalue inside
/// the unit circle, by power iteration on the inverse.
pub fn stable_eigenvector(b: &[Vec<i64>]) -> (f64, DVector<f64>) {
    let n = b.len();
    let m = DMatrix::from_fn(n, n, |i, j| b[i][j] as f64);
    let inv = m.clone().try_inverse().expect("unimodular");
    let mut v = DVector::from_fn(n, |i, _| 1.0 + 0.1 * i as f64);
    for _ in 0..5000 {
        v = &inv * &v;
        v /= v.norm();
    }
    let lambda = (&m * &v).dot(&v);
    (lambda, v)
}

/// Exact stable plane of a linear-base scenario: the box axes plus the
/// stable eigenvector of the base.
pub fn exact_stable_plane(sys: &ScenarioSystem) -> Subspace {
    let (m, d) = (sys.box_dim(), sys.dim());
    let (_, v) = stable_eigenvector(sys.base().automorphism().matrix());
    let mut raw = DMatrix::zeros(d, m + 1);
    for i in 0..m {
        raw[(i, i)] = 1.0;
    }
    raw.view_mut((m, m), (d - m, 1)).copy_from(&v);
    orthonormalize(&raw).unwrap()
}

/// Central finite-difference Jacobian of `apply`.
pub fn fd_differential<S: Diffeomorphism + ?Sized>(sys: &S, x: &AmbientPoint, h: f64) -> DMatrix<f64> {
    let d = sys.dim();
    let mut jac = DMatrix::zeros(d, d);
    for j in 0..d {
        let mut e = vec![0.0; d];
        e[j] = h;
        let plus = sys.apply(&x.translated(&e));
        e[j] = -h;
        let minus = sys.apply(&x.translated(&e));
        jac.set_column(j, &(plus.displacement_to(&minus) * (-1.0 / (2.0 * h))));
    }
    jac
}
