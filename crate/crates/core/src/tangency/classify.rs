use serde::{Deserialize, Serialize};

use crate::ambient::{principal_angles, Subspace};
use crate::error::{Error, Result};

pub const DEFAULT_ANGLE_TOL: f64 = 1e-6;

/// Codimension, tangency dimension and signed co-index; `c_T = d_T - k_T`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TangencyClass {
    #[serde(rename = "cT")]
    pub c_t: i64,
    #[serde(rename = "dT")]
    pub d_t: i64,
    #[serde(rename = "kT")]
    pub k_t: i64,
}

impl std::fmt::Display for TangencyClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(c_T, d_T, k_T) = ({}, {}, {})", self.c_t, self.d_t, self.k_t)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Classification {
    Tangency(TangencyClass),
    Transverse,
}

impl Classification {
    pub fn tangency(self) -> Option<TangencyClass> {
        match self {
            Classification::Tangency(c) => Some(c),
            Classification::Transverse => None,
        }
    }
}

/// Classifies the pair of tangent spaces at an intersection point.
///
/// Shared directions are principal angles below `angle_tol`. The pair is
/// transverse when `TU + TS` has the generic dimension `min(d, dim TU + dim TS)`.
pub fn classify(tu: &Subspace, ts: &Subspace, d: usize, angle_tol: f64) -> Result<Classification> {
    for sub in [tu, ts] {
        if sub.ambient_dim() != d {
            return Err(Error::DimensionMismatch { expected: d, found: sub.ambient_dim() });
        }
    }
    let d_t = principal_angles(tu, ts)?.count_below(angle_tol) as i64;
    let k_t = (tu.dim() + ts.dim()) as i64 - d as i64;
    if d_t == k_t.max(0) {
        return Ok(Classification::Transverse);
    }
    Ok(Classification::Tangency(TangencyClass { c_t: d_t - k_t, d_t, k_t }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn span(d: usize, idx: &[usize]) -> Subspace {
        Subspace::coordinate(d, idx).unwrap()
    }

    #[test]
    fn generic_planes_are_transverse() {
        let c = classify(&span(3, &[0, 1]), &span(3, &[1, 2]), 3, DEFAULT_ANGLE_TOL).unwrap();
        assert_eq!(c, Classification::Transverse);
        let c = classify(&span(3, &[0]), &span(3, &[1]), 3, DEFAULT_ANGLE_TOL).unwrap();
        assert_eq!(c, Classification::Transverse);
    }

    #[test]
    fn dimension_mismatch() {
        assert!(classify(&span(3, &[0]), &span(4, &[0]), 3, 1e-6).is_err());
    }
}
