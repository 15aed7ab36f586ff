//! Points on `[-ε,ε]^m × T^n`, subspaces as orthonormal frames, principal
//! angles and graph cones.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, sigma_min};

/// Default tolerance for subspace equality, in radians.
pub const ANGLE_TOL: f64 = 1e-9;

/// Representative of `x mod 1` in `[0, 1)`.
pub fn wrap_unit(x: f64) -> f64 {
    let r = x - x.floor();
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Representative of `x mod 1` in `[-1/2, 1/2)`.
pub fn wrap_centered(x: f64) -> f64 {
    x - (x + 0.5).floor()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmbientPoint {
    coords: Vec<f64>,
    periodic_mask: Vec<bool>,
}

impl AmbientPoint {
    pub fn new(mut coords: Vec<f64>, periodic_mask: Vec<bool>) -> Result<Self> {
        if coords.len() != periodic_mask.len() {
            return Err(Error::DimensionMismatch { expected: periodic_mask.len(), found: coords.len() });
        }
        if coords.len() < 2 {
            return Err(Error::InvalidDimension(format!("ambient dimension {} < 2", coords.len())));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidDimension("non-finite coordinate".into()));
        }
        for (c, &p) in coords.iter_mut().zip(&periodic_mask) {
            if p {
                *c = wrap_unit(*c);
            }
        }
        Ok(Self { coords, periodic_mask })
    }

    /// A point of plain Euclidean space.
    pub fn euclidean(coords: Vec<f64>) -> Result<Self> {
        let mask = vec![false; coords.len()];
        Self::new(coords, mask)
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn periodic_mask(&self) -> &[bool] {
        &self.periodic_mask
    }

    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.coords)
    }

    /// Shortest displacement `other - self`, periodic coordinates taken mod 1.
    pub fn displacement_to(&self, other: &AmbientPoint) -> DVector<f64> {
        DVector::from_iterator(
            self.dim(),
            self.coords.iter().zip(&other.coords).zip(&self.periodic_mask).map(|((a, b), &p)| {
                if p {
                    wrap_centered(b - a)
                } else {
                    b - a
                }
            }),
        )
    }

    pub fn distance(&self, other: &AmbientPoint) -> f64 {
        self.displacement_to(other).norm()
    }

    /// `self + v`, wrapped.
    pub fn translated(&self, v: &[f64]) -> AmbientPoint {
        let coords = self.coords.iter().zip(v).map(|(a, b)| a + b).collect();
        AmbientPoint::new(coords, self.periodic_mask.clone()).expect("same shape")
    }
}

/// An `s`-plane in `ℝ^d` stored as a `d × s` orthonormal frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Subspace {
    #[serde(with = "linalg::matrix_rows")]
    frame: DMatrix<f64>,
}

impl Subspace {
    pub fn frame(&self) -> &DMatrix<f64> {
        &self.frame
    }

    pub fn dim(&self) -> usize {
        self.frame.ncols()
    }

    pub fn ambient_dim(&self) -> usize {
        self.frame.nrows()
    }

    /// Span of the standard basis vectors `e_i`, `i ∈ indices`.
    pub fn coordinate(d: usize, indices: &[usize]) -> Result<Self> {
        let mut raw = DMatrix::zeros(d, indices.len());
        for (j, &i) in indices.iter().enumerate() {
            if i >= d {
                return Err(Error::InvalidDimension(format!("index {i} out of range for d = {d}")));
            }
            raw[(i, j)] = 1.0;
        }
        orthonormalize(&raw)
    }

    /// Orthonormal basis of the orthogonal complement (may be 0 columns wide).
    pub fn complement_frame(&self) -> DMatrix<f64> {
        linalg::orthogonal_complement(&self.frame)
    }

    /// Orthogonal projector onto the plane.
    pub fn projector(&self) -> DMatrix<f64> {
        &self.frame * self.frame.transpose()
    }

    pub fn approx_eq(&self, other: &Subspace, angle_tol: f64) -> bool {
        self.dim() == other.dim() && principal_angles(self, other).is_ok_and(|a| a.max() < angle_tol)
    }

    /// Wraps a frame already known to be orthonormal.
    pub(crate) fn from_orthonormal(frame: DMatrix<f64>) -> Self {
        Self { frame }
    }
}

/// Orthonormalizes `raw` into a [`Subspace`] spanning the same columns.
pub fn orthonormalize(raw: &DMatrix<f64>) -> Result<Subspace> {
    let (d, s) = raw.shape();
    if s == 0 || s >= d {
        return Err(Error::InvalidDimension(format!("subspace dimension {s} must satisfy 1 <= s < d = {d}")));
    }
    Ok(Subspace { frame: linalg::gram_schmidt(raw)? })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrincipalAngles {
    angles: Vec<f64>,
}

impl PrincipalAngles {
    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn max(&self) -> f64 {
        self.angles.last().copied().unwrap_or(0.0)
    }

    pub fn count_below(&self, tol: f64) -> usize {
        self.angles.iter().filter(|&&a| a < tol).count()
    }
}

/// Principal angles between `u` and `v`, nondecreasing.
///
/// Cosines are the singular values of `UᵀV` and sines those of the residual
/// `A - BBᵀA` (with `A` the smaller plane); small angles are read from the
/// sines and large ones from the cosines so both ends keep full accuracy.
pub fn principal_angles(u: &Subspace, v: &Subspace) -> Result<PrincipalAngles> {
    if u.ambient_dim() != v.ambient_dim() {
        return Err(Error::DimensionMismatch { expected: u.ambient_dim(), found: v.ambient_dim() });
    }
    let (a, b) = if u.dim() <= v.dim() { (u, v) } else { (v, u) };
    let proj = b.frame.transpose() * &a.frame;
    let mut cos: Vec<f64> = proj.singular_values().iter().map(|c| c.clamp(0.0, 1.0)).collect();
    let mut sin: Vec<f64> = (&a.frame - &b.frame * &proj).singular_values().iter().map(|s| s.clamp(0.0, 1.0)).collect();
    cos.sort_by(|x, y| y.total_cmp(x));
    sin.sort_by(f64::total_cmp);
    let mut angles: Vec<f64> = cos
        .iter()
        .zip(&sin)
        .map(|(&c, &s)| if s < std::f64::consts::FRAC_1_SQRT_2 { s.asin() } else { c.acos() })
        .map(|t| t.clamp(0.0, std::f64::consts::FRAC_PI_2))
        .collect();
    angles.sort_by(f64::total_cmp);
    Ok(PrincipalAngles { angles })
}

/// Planes that are graphs of maps `center → center⊥` with norm below `aperture`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConeField {
    center: Subspace,
    aperture: f64,
    #[serde(with = "linalg::matrix_rows")]
    complement: DMatrix<f64>,
}

impl ConeField {
    pub fn new(center: Subspace, aperture: f64) -> Result<Self> {
        if !(aperture > 0.0 && aperture < 1.0) {
            return Err(Error::InvalidConfig(format!("cone aperture {aperture} outside (0, 1)")));
        }
        let complement = center.complement_frame();
        Ok(Self { center, aperture, complement })
    }

    /// Same center, different aperture. Apertures ≥ 1 are allowed here so that
    /// certificates can be run on deliberately oversized cones.
    pub fn with_aperture(&self, aperture: f64) -> Self {
        Self { aperture, ..self.clone() }
    }

    pub fn center(&self) -> &Subspace {
        &self.center
    }

    pub fn aperture(&self) -> f64 {
        self.aperture
    }

    /// Orthonormal basis of `center⊥`, fixed at construction.
    pub fn complement(&self) -> &DMatrix<f64> {
        &self.complement
    }

    /// Matrix of the linear map `L` with `E = graph(L)`, in the bases
    /// (center, complement). `None` when `E` is not a graph.
    pub fn graph_map(&self, e: &Subspace) -> Option<DMatrix<f64>> {
        let c = self.center.frame.transpose() * &e.frame;
        if sigma_min(&c) < 1e-12 {
            return None;
        }
        let q = self.complement.transpose() * &e.frame;
        let c_inv = c.try_inverse()?;
        Some(q * c_inv)
    }

    /// Plane spanned by `center + complement · L`.
    pub fn plane_from_graph(&self, l: &DMatrix<f64>) -> Result<Subspace> {
        if l.shape() != (self.complement.ncols(), self.center.dim()) {
            return Err(Error::DimensionMismatch {
                expected: self.complement.ncols() * self.center.dim(),
                found: l.len(),
            });
        }
        orthonormalize(&(self.center.frame() + &self.complement * l))
    }
}

/// Operator norm of the graph map of `e` over the cone's split; infinite when
/// `e` is not a graph.
pub fn graph_norm(e: &Subspace, cone: &ConeField) -> f64 {
    match cone.graph_map(e) {
        Some(l) if l.nrows() == 0 => 0.0,
        Some(l) => linalg::op_norm(&l),
        None => f64::INFINITY,
    }
}

pub fn cone_membership(e: &Subspace, cone: &ConeField) -> bool {
    graph_norm(e, cone) < cone.aperture
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn line(x: f64, y: f64) -> Subspace {
        orthonormalize(&DMatrix::from_column_slice(2, 1, &[x, y])).unwrap()
    }

    #[test]
    fn normalizes_single_column() {
        let s = line(3.0, 4.0);
        assert!((s.frame()[(0, 0)] - 0.6).abs() < 1e-15);
        assert!((s.frame()[(1, 0)] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn identity_columns_unchanged() {
        let raw = DMatrix::from_column_slice(3, 2, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        assert_eq!(orthonormalize(&raw).unwrap().frame(), &raw);
    }

    #[test]
    fn full_dimension_is_rejected() {
        let raw = DMatrix::from_column_slice(2, 2, &[1.0, 0.0, 1.0, 1.0]);
        assert!(matches!(orthonormalize(&raw), Err(Error::InvalidDimension(_))));
    }

    #[test]
    fn angles_on_lines() {
        let e1 = line(1.0, 0.0);
        assert_eq!(principal_angles(&e1, &e1).unwrap().angles(), &[0.0]);
        let a = principal_angles(&e1, &line(0.0, 1.0)).unwrap();
        assert!((a.max() - FRAC_PI_2).abs() < 1e-15);
        let a = principal_angles(&e1, &line(1.0, 1.0)).unwrap();
        assert!((a.max() - FRAC_PI_4).abs() < 1e-15);
    }

    #[test]
    fn tiny_angle_is_resolved() {
        let a = principal_angles(&line(1.0, 0.0), &line(1.0, 1e-13)).unwrap();
        assert!((a.max() - 1e-13).abs() < 1e-26);
    }

    #[test]
    fn graph_norm_of_lines() {
        let cone = ConeField::new(line(1.0, 0.0), 0.1).unwrap();
        assert_eq!(graph_norm(cone.center(), &cone), 0.0);
        assert!((graph_norm(&line(1.0, 0.05), &cone) - 0.05).abs() < 1e-15);
        assert!(graph_norm(&line(0.0, 1.0), &cone).is_infinite());
        assert!(cone_membership(&line(1.0, 0.05), &cone));
        assert!(!cone_membership(&line(1.0, 0.2), &cone));
    }

    #[test]
    fn wrapping() {
        let p = AmbientPoint::new(vec![0.3, 1.25, -0.25], vec![false, true, true]).unwrap();
        assert_eq!(p.coords(), &[0.3, 0.25, 0.75]);
        let q = AmbientPoint::new(vec![0.3, 0.95, 0.75], vec![false, true, true]).unwrap();
        assert!((p.distance(&q) - 0.3).abs() < 1e-15);
        assert_eq!(wrap_unit(-1e-20), 0.0);
    }
}
