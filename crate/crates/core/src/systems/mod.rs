//! Model diffeomorphisms with exact differentials.

mod bump;
mod da;
mod scenario;
mod toral;

pub use bump::{unit_c1_estimate, BumpPerturbation, C1_SAFETY, C1_SAMPLES};
pub use da::{cutoff, profile, DASystem, DEFAULT_FIXED_MULTIPLIER, DEFAULT_RHO};
pub use scenario::{build_scenario, Base, ScenarioConfig, ScenarioDocument, ScenarioSystem, Surgery, TrappingReport};
pub use toral::{integer_det, ToralAutomorphism};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};

use crate::ambient::AmbientPoint;
use crate::error::{Error, Result};

/// A diffeomorphism of a product of intervals and circles.
pub trait Diffeomorphism: Sync {
    fn dim(&self) -> usize;
    fn periodic_mask(&self) -> &[bool];
    fn apply(&self, x: &AmbientPoint) -> AmbientPoint;
    fn differential(&self, x: &AmbientPoint) -> DMatrix<f64>;
    /// Preimage of `y`. `guess` seeds Newton where the inverse is not explicit.
    fn inverse_apply(&self, y: &AmbientPoint, guess: Option<&AmbientPoint>) -> Result<AmbientPoint>;
    /// Uniform sample of the domain.
    fn sample_domain(&self, rng: &mut dyn RngCore) -> AmbientPoint;
    fn in_domain(&self, _x: &AmbientPoint) -> bool {
        true
    }
}

/// `x ↦ M x` on `ℝ^d`, sampled on `[-1, 1]^d`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearMap {
    matrix: DMatrix<f64>,
    inverse: DMatrix<f64>,
    mask: Vec<bool>,
}

impl LinearMap {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        let d = matrix.nrows();
        if d < 2 || !matrix.is_square() {
            return Err(Error::InvalidDimension("linear map must be square, d >= 2".into()));
        }
        let inverse = matrix.clone().try_inverse().ok_or(Error::SingularSystem(0.0))?;
        Ok(Self { matrix, inverse, mask: vec![false; d] })
    }

    pub fn diagonal(entries: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(entries)))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }
}

impl Diffeomorphism for LinearMap {
    fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn periodic_mask(&self) -> &[bool] {
        &self.mask
    }

    fn apply(&self, x: &AmbientPoint) -> AmbientPoint {
        let y = &self.matrix * x.to_vector();
        AmbientPoint::euclidean(y.as_slice().to_vec()).expect("finite")
    }

    fn differential(&self, _x: &AmbientPoint) -> DMatrix<f64> {
        self.matrix.clone()
    }

    fn inverse_apply(&self, y: &AmbientPoint, _guess: Option<&AmbientPoint>) -> Result<AmbientPoint> {
        let x = &self.inverse * y.to_vector();
        AmbientPoint::euclidean(x.as_slice().to_vec())
    }

    fn sample_domain(&self, rng: &mut dyn RngCore) -> AmbientPoint {
        let c = (0..self.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        AmbientPoint::euclidean(c).expect("finite")
    }
}

/// Newton inversion of `sys` from `x0`, to `1e-13` per coordinate.
pub fn newton_inverse<S: Diffeomorphism + ?Sized>(sys: &S, y: &AmbientPoint, x0: AmbientPoint) -> Result<AmbientPoint> {
    let mut x = x0;
    let mut r = y.displacement_to(&sys.apply(&x));
    for _ in 0..50 {
        if r.amax() < 1e-13 {
            return Ok(x);
        }
        let step = sys.differential(&x).lu().solve(&r).ok_or(Error::SingularSystem(0.0))?;
        let mut lambda = 1.0;
        loop {
            let cand = x.translated((-&step * lambda).as_slice());
            let rc = y.displacement_to(&sys.apply(&cand));
            if rc.amax() < r.amax() || lambda < 1e-3 {
                x = cand;
                r = rc;
                break;
            }
            lambda *= 0.5;
        }
    }
    if r.amax() < 1e-10 {
        Ok(x)
    } else {
        Err(Error::NoConvergence { iterations: 50, residual: r.amax() })
    }
}
