use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::classify::{classify, Classification, TangencyClass, DEFAULT_ANGLE_TOL};
use super::{Detector, TangencyReport};
use crate::ambient::{principal_angles, Subspace};
use crate::cocycle::{stable_plane, DEFAULT_PULLBACK_STEPS};
use crate::error::{Error, Result};
use crate::folding::{embed, normal_frame, tangent_frame, FoldingManifold};
use crate::linalg::{gram_schmidt_fast, sigma_min};
use crate::systems::Diffeomorphism;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NewtonOptions {
    pub max_iterations: usize,
    pub tolerance: f64,
    pub fd_step: f64,
    pub pullback_steps: usize,
    pub min_damping: f64,
    pub angle_tol: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            tolerance: 1e-9,
            fd_step: 1e-6,
            pullback_steps: DEFAULT_PULLBACK_STEPS,
            min_damping: 1.0 / 1024.0,
            angle_tol: DEFAULT_ANGLE_TOL,
        }
    }
}

/// Orthonormalized graph basis `(e_i, ·)` of `e` over the fold's center split.
///
/// Unlike the raw pullback frame this basis depends smoothly on the plane
/// alone, so finite differences of the residual are meaningful.
fn canonical_frame(fold: &FoldingManifold, e: &Subspace) -> Result<DMatrix<f64>> {
    let r = fold.chart().frame();
    let em = r.transpose() * e.frame();
    let x = em.rows(0, fold.s()).into_owned();
    if sigma_min(&x) < 1e-12 {
        return Err(Error::NotAGraph);
    }
    let g = r * em * x.try_inverse().ok_or(Error::NotAGraph)?;
    Ok(gram_schmidt_fast(&g))
}

fn residual_and_plane<S: Diffeomorphism + ?Sized>(
    sys: &S,
    fold: &FoldingManifold,
    t: &[f64],
    n: usize,
) -> Result<(DVector<f64>, Subspace)> {
    let x = embed(fold, t)?;
    if !sys.in_domain(&x) {
        return Err(Error::LeftDomain);
    }
    let est = stable_plane(sys, &x, n, &fold.center_plane())?;
    let f = canonical_frame(fold, &est.plane)?;
    let r = normal_frame(fold, t)?.transpose() * f;
    Ok((DVector::from_column_slice(r.as_slice()), est.plane))
}

/// Components of the stable plane at `embed(t)` normal to the fold, `s·c_T` numbers.
pub fn tangency_residual<S: Diffeomorphism + ?Sized>(
    sys: &S,
    fold: &FoldingManifold,
    t: &[f64],
    n: usize,
) -> Result<DVector<f64>> {
    residual_and_plane(sys, fold, t, n).map(|(r, _)| r)
}

fn fd_jacobian<S: Diffeomorphism + ?Sized>(
    sys: &S,
    fold: &FoldingManifold,
    t: &DVector<f64>,
    h: f64,
    n: usize,
    rows: usize,
) -> Result<DMatrix<f64>> {
    let mut jac = DMatrix::zeros(rows, t.len());
    for j in 0..t.len() {
        let mut tp = t.clone();
        let mut tm = t.clone();
        tp[j] += h;
        tm[j] -= h;
        let col = (tangency_residual(sys, fold, tp.as_slice(), n)? - tangency_residual(sys, fold, tm.as_slice(), n)?)
            / (2.0 * h);
        jac.set_column(j, &col);
    }
    Ok(jac)
}

/// Damped Newton on the tangency residual in fold parameters.
pub fn find_tangency_newton<S: Diffeomorphism + ?Sized>(
    sys: &S,
    fold: &FoldingManifold,
    t0: &[f64],
    opts: &NewtonOptions,
) -> Result<TangencyReport> {
    if fold.dim() != sys.dim() {
        return Err(Error::DimensionMismatch { expected: sys.dim(), found: fold.dim() });
    }
    let n = opts.pullback_steps;
    let to_detector_err = |e: Error| match e {
        Error::OutOfDomain => Error::LeftDomain,
        other => other,
    };
    let mut t = DVector::from_column_slice(t0);
    let (mut r, mut plane) = residual_and_plane(sys, fold, t0, n).map_err(to_detector_err)?;
    let mut iterations = 0;
    let mut polished = false;
    loop {
        if r.norm() < opts.tolerance {
            if polished || r.norm() == 0.0 {
                break;
            }
            // One extra step tightens the solution when it helps.
            polished = true;
        } else if iterations >= opts.max_iterations {
            return Err(Error::NoConvergence { iterations, residual: r.norm() });
        }
        let jac = fd_jacobian(sys, fold, &t, opts.fd_step, n, r.len()).map_err(to_detector_err)?;
        let Some(step) = jac.lu().solve(&(-&r)) else {
            if polished {
                break;
            }
            return Err(Error::NoConvergence { iterations, residual: r.norm() });
        };
        let mut lambda = 1.0;
        let accepted = loop {
            let cand = &t + &step * lambda;
            if cand.amax() <= 1.0 {
                match residual_and_plane(sys, fold, cand.as_slice(), n) {
                    Ok((rc, pc)) if rc.norm() < r.norm() => break Some((cand, rc, pc)),
                    Ok(_) | Err(Error::LeftDomain) | Err(Error::OutOfDomain) => {}
                    Err(e) => return Err(e),
                }
            }
            lambda *= 0.5;
            if lambda < opts.min_damping {
                break None;
            }
        };
        match accepted {
            Some((tc, rc, pc)) => {
                t = tc;
                r = rc;
                plane = pc;
                iterations += 1;
            }
            None if polished => break,
            None => {
                let cand = &t + &step * opts.min_damping;
                return Err(if cand.amax() > 1.0 {
                    Error::LeftDomain
                } else {
                    Error::NoConvergence { iterations, residual: r.norm() }
                });
            }
        }
    }

    let tu = tangent_frame(fold, t.as_slice())?;
    let angles = principal_angles(&tu, &plane)?.angles().to_vec();
    let class = match classify(&tu, &plane, sys.dim(), opts.angle_tol)? {
        Classification::Tangency(c) => c,
        Classification::Transverse => {
            let d_t = angles.iter().filter(|&&a| a < opts.angle_tol).count() as i64;
            let k_t = (tu.dim() + plane.dim()) as i64 - sys.dim() as i64;
            TangencyClass { c_t: d_t - k_t, d_t, k_t }
        }
    };
    Ok(TangencyReport {
        detector: Detector::Newton,
        point: embed(fold, t.as_slice())?,
        t_star: t.as_slice().to_vec(),
        plane,
        class,
        residual_norm: r.norm(),
        principal_angles: angles,
        iterations,
        leaf_parameter: None,
    })
}
