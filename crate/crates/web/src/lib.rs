//! Browser bindings for the demo page. Every export returns a JSON string.

use serde::Serialize;
use tangency_core::ambient::Subspace;
use tangency_core::cocycle::verify_cone_invariance;
use tangency_core::folding::{embed, verify_folding, FoldKind};
use tangency_core::robustness::{random_perturbation, PerturbationRegion, Placement};
use tangency_core::systems::build_scenario;
use tangency_core::tangency::{
    classify, find_tangency_newton, find_tangency_sweep, Classification, LeafFamily, NewtonOptions, SweepOptions,
    DEFAULT_ANGLE_TOL,
};
use tangency_core::Error;
use wasm_bindgen::prelude::*;

#[derive(Serialize)]
struct Detection {
    magnitude: f64,
    /// C¹ size actually used after capping.
    c1_size: f64,
    newton_t: f64,
    sweep_t: f64,
    leaf_parameter: Option<f64>,
    distance: f64,
    residual: f64,
    /// Fold curve and tangency point as offsets from the fold center.
    curve: Vec<[f64; 2]>,
    point: [f64; 2],
    /// Direction of the stable leaf at the tangency.
    leaf_direction: [f64; 2],
}

#[derive(Serialize)]
struct Certificates {
    alpha: f64,
    cone_pass: bool,
    cone_max_ratio: f64,
    folding_pass: bool,
    folding_max_residual: f64,
    folding_out_of_domain: usize,
    folding_planes: usize,
}

#[derive(Serialize)]
struct ClassOut {
    transverse: bool,
    c_t: Option<i64>,
    d_t: Option<i64>,
    k_t: Option<i64>,
}

fn js(e: Error) -> JsError {
    JsError::new(&e.to_string())
}

fn to_json<T: Serialize>(v: &T) -> Result<String, JsError> {
    serde_json::to_string(v).map_err(|e| JsError::new(&e.to_string()))
}

fn pair(v: &[f64]) -> [f64; 2] {
    [v[0], v[1]]
}

/// Parabola on the 2-torus against the stable leaves of a DA map, after a
/// random bump of the given C¹ size. Runs both detectors.
#[wasm_bindgen]
pub fn parabola_tangency(magnitude: f64, seed: u32) -> Result<String, JsError> {
    let base = build_scenario(1, 1, FoldKind::Elliptic).map_err(js)?;
    let region = PerturbationRegion::around_fold(&base, Placement::Overlap).map_err(js)?;
    let bump = random_perturbation(&region, magnitude, u64::from(seed)).map_err(js)?;
    let c1_size = bump.c1_bound();
    let sys = base.with_perturbation(bump).map_err(js)?;
    let fold = sys.fold().ok_or(Error::NotElliptic).map_err(js)?;
    let newton = find_tangency_newton(&sys, fold, &[0.0], &NewtonOptions::default()).map_err(js)?;
    let leaves = LeafFamily::for_scenario(&sys).map_err(js)?;
    let sweep = find_tangency_sweep(&sys, fold, &leaves, &SweepOptions::default()).map_err(js)?;
    let center = fold.chart().center_point();
    let curve = (0..=40)
        .map(|i| {
            let t = -1.0 + i as f64 / 20.0;
            embed(fold, &[t]).map(|x| pair(center.displacement_to(&x).as_slice()))
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(js)?;
    let dir = newton.plane.frame().column(0);
    let out = Detection {
        magnitude,
        c1_size,
        newton_t: newton.t_star[0],
        sweep_t: sweep.t_star[0],
        leaf_parameter: sweep.leaf_parameter,
        distance: newton.point.distance(&sweep.point),
        residual: newton.residual_norm,
        curve,
        point: pair(center.displacement_to(&newton.point).as_slice()),
        leaf_direction: [dir[0], dir[1]],
    };
    to_json(&out)
}

/// Cone invariance and folding certificates of the 3-dimensional DA
/// scenario at aperture `alpha`.
#[wasm_bindgen]
pub fn certificates(alpha: f64, samples: u32, seed: u32) -> Result<String, JsError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(JsError::new("alpha must lie in (0, 1)"));
    }
    let sys = build_scenario(1, 2, FoldKind::Elliptic).map_err(js)?.with_alpha(alpha);
    let cone = sys.cone().map_err(js)?;
    let c = verify_cone_invariance(&sys, &cone, samples as usize, u64::from(seed));
    let fold = sys.fold().ok_or(Error::NotElliptic).map_err(js)?;
    let f = verify_folding(fold, &cone, 11);
    to_json(&Certificates {
        alpha,
        cone_pass: c.pass,
        cone_max_ratio: c.max_ratio,
        folding_pass: f.pass,
        folding_max_residual: f.max_residual,
        folding_out_of_domain: f.out_of_domain,
        folding_planes: f.planes,
    })
}

/// Classifies two coordinate planes of dimensions `a` and `b` in `R^d` that
/// share exactly `shared` axes.
#[wasm_bindgen]
pub fn classify_planes(d: usize, a: usize, b: usize, shared: usize) -> Result<String, JsError> {
    if a == 0 || b == 0 || shared > a.min(b) || a + b - shared > d {
        return Err(JsError::new("need 1 <= a, b; shared <= min(a, b); a + b - shared <= d"));
    }
    let u: Vec<usize> = (0..a).collect();
    let v: Vec<usize> = (0..shared).chain(a..a + b - shared).collect();
    let tu = Subspace::coordinate(d, &u).map_err(js)?;
    let tv = Subspace::coordinate(d, &v).map_err(js)?;
    let out = match classify(&tu, &tv, d, DEFAULT_ANGLE_TOL).map_err(js)? {
        Classification::Transverse => ClassOut { transverse: true, c_t: None, d_t: None, k_t: None },
        Classification::Tangency(c) => {
            ClassOut { transverse: false, c_t: Some(c.c_t), d_t: Some(c.d_t), k_t: Some(c.k_t) }
        }
    };
    to_json(&out)
}
