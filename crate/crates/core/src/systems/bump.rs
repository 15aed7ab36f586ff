use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::ambient::AmbientPoint;
use crate::error::{Error, Result};

/// Number of radial samples used to estimate the C¹ norm.
pub const C1_SAMPLES: usize = 10_000;
pub const C1_SAFETY: f64 = 1.1;

/// `V(x) = a (1 - |x - c|²/r²)³ w` inside the `r`-ball, zero outside.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BumpPerturbation {
    center: AmbientPoint,
    radius: f64,
    amplitude: f64,
    direction: Vec<f64>,
    c1_bound: f64,
}

impl BumpPerturbation {
    /// `direction` is normalized; the C¹ bound is estimated on construction.
    pub fn new(center: AmbientPoint, radius: f64, direction: Vec<f64>, amplitude: f64) -> Result<Self> {
        if direction.len() != center.dim() {
            return Err(Error::DimensionMismatch { expected: center.dim(), found: direction.len() });
        }
        if !(radius > 0.0 && radius < 0.5) || !amplitude.is_finite() || amplitude < 0.0 {
            return Err(Error::InvalidConfig(format!("bump radius {radius}, amplitude {amplitude}")));
        }
        let n = direction.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(n > 0.0) {
            return Err(Error::InvalidConfig("zero bump direction".into()));
        }
        let direction = direction.iter().map(|x| x / n).collect();
        let c1_bound = amplitude * unit_c1_estimate(radius);
        Ok(Self { center, radius, amplitude, direction, c1_bound })
    }

    /// Bump with the amplitude chosen so that `c1_bound == magnitude`.
    pub fn with_c1_bound(center: AmbientPoint, radius: f64, direction: Vec<f64>, magnitude: f64) -> Result<Self> {
        let amp = magnitude / unit_c1_estimate(radius);
        let mut b = Self::new(center, radius, direction, amp)?;
        b.c1_bound = magnitude;
        Ok(b)
    }

    pub fn center(&self) -> &AmbientPoint {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn direction(&self) -> &[f64] {
        &self.direction
    }

    pub fn c1_bound(&self) -> f64 {
        self.c1_bound
    }

    pub fn is_zero(&self) -> bool {
        self.amplitude == 0.0
    }

    /// Offset from the center and `q = |offset|²/r²`, or `None` outside the support.
    fn local(&self, x: &AmbientPoint) -> Option<(DVector<f64>, f64)> {
        let z = self.center.displacement_to(x);
        let q = z.norm_squared() / (self.radius * self.radius);
        (q < 1.0).then_some((z, q))
    }

    pub fn displacement(&self, x: &AmbientPoint) -> DVector<f64> {
        let d = self.direction.len();
        match self.local(x) {
            Some((_, q)) if !self.is_zero() => {
                let w = 1.0 - q;
                DVector::from_column_slice(&self.direction) * (self.amplitude * w * w * w)
            }
            _ => DVector::zeros(d),
        }
    }

    pub fn differential(&self, x: &AmbientPoint) -> DMatrix<f64> {
        let d = self.direction.len();
        match self.local(x) {
            Some((z, q)) if !self.is_zero() => {
                let w = 1.0 - q;
                let grad = z * (-6.0 * w * w / (self.radius * self.radius));
                DVector::from_column_slice(&self.direction) * grad.transpose() * self.amplitude
            }
            _ => DMatrix::zeros(d, d),
        }
    }
}

/// Safety-scaled sup of `|β| + |∇β|` for the unit-amplitude profile, sampled
/// on `C1_SAMPLES` radii.
///
/// The profile is radial, so sampling radii covers the whole ball.
pub fn unit_c1_estimate(radius: f64) -> f64 {
    let sup = (0..=C1_SAMPLES)
        .map(|i| {
            let rho = i as f64 / C1_SAMPLES as f64;
            let w = 1.0 - rho * rho;
            w * w * w + 6.0 * rho * w * w / radius
        })
        .fold(0.0, f64::max);
    C1_SAFETY * sup
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vanishes_outside_support() {
        let c = AmbientPoint::euclidean(vec![0.0, 0.0, 0.0]).unwrap();
        let b = BumpPerturbation::new(c, 0.1, vec![1.0, 2.0, 2.0], 1e-3).unwrap();
        let x = AmbientPoint::euclidean(vec![0.1, 0.0, 0.0]).unwrap();
        assert_eq!(b.displacement(&x).norm(), 0.0);
        assert_eq!(b.differential(&x).norm(), 0.0);
        let y = AmbientPoint::euclidean(vec![0.0, 0.0, 0.0]).unwrap();
        assert!((b.displacement(&y).norm() - 1e-3).abs() < 1e-18);
    }

    #[test]
    fn wraps_across_the_torus_seam() {
        let c = AmbientPoint::new(vec![0.0, 0.99], vec![false, true]).unwrap();
        let b = BumpPerturbation::new(c, 0.05, vec![0.0, 1.0], 1.0).unwrap();
        let x = AmbientPoint::new(vec![0.0, 0.01], vec![false, true]).unwrap();
        assert!(b.displacement(&x).norm() > 0.0);
    }
}
