//! Tangency classification and the two detectors.

mod classify;
mod newton;
mod sweep;

pub use classify::{classify, Classification, TangencyClass, DEFAULT_ANGLE_TOL};
pub use newton::{find_tangency_newton, tangency_residual, NewtonOptions};
pub use sweep::{find_tangency_sweep, FoldLeafIntersection, LeafFamily, LeafMode, SweepOptions};

use serde::{Deserialize, Serialize};

use crate::ambient::{AmbientPoint, Subspace};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Detector {
    Newton,
    Sweep,
}

impl std::fmt::Display for Detector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Detector::Newton => "newton",
            Detector::Sweep => "sweep",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TangencyReport {
    pub detector: Detector,
    pub t_star: Vec<f64>,
    #[serde(serialize_with = "coords_only")]
    pub point: AmbientPoint,
    #[serde(skip)]
    pub plane: Subspace,
    pub class: TangencyClass,
    pub residual_norm: f64,
    pub principal_angles: Vec<f64>,
    pub iterations: usize,
    /// Unstable coordinate of the tangency leaf, when a leaf family was used.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub leaf_parameter: Option<f64>,
}

fn coords_only<S: serde::Serializer>(p: &AmbientPoint, s: S) -> Result<S::Ok, S::Error> {
    p.coords().serialize(s)
}
