//! Derived-from-Anosov surgery of the cat map at the fixed point 0.
//!
//! In eigencoordinates `(u, v)` of the cat map the surgered map is
//!
//! ```text
//! u' = λ_u u
//! v' = λ_s v + μ ρ χ(u/ρ) P(v/ρ)
//! ```
//!
//! with `χ(z) = (1 - z²)³` and `P` an odd polynomial profile supported in
//! `[-1, 1]` with `P'(0) = 1`. Only the stable coordinate is modified, so the
//! stable direction is invariant everywhere and the unstable coordinate of the
//! lift is still multiplied by `λ_u` exactly.

use nalgebra::{DMatrix, DVector, Matrix2};
use serde::{Deserialize, Serialize};

use super::toral::ToralAutomorphism;
use crate::ambient::wrap_unit;
use crate::error::{Error, Result};

/// Correction factor `r(y)` of the profile, `P(x) = x (1 - x²)³ r(x²)`.
///
/// Chosen so that `P' > -0.25` on `[-1, 1]`, which keeps the stable-line map
/// monotone for the default strength.
const PROFILE: [f64; 5] = [1.0, -6.4, 27.1, -49.8, 35.5];

pub const DEFAULT_RHO: f64 = 0.15;
/// Stable multiplier at the fixed point after surgery.
pub const DEFAULT_FIXED_MULTIPLIER: f64 = 1.5;

fn poly(c: &[f64], y: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &a| acc * y + a)
}

fn dpoly(c: &[f64], y: f64) -> f64 {
    c.iter().enumerate().skip(1).rev().fold(0.0, |acc, (k, &a)| acc * y + k as f64 * a)
}

/// Cutoff `χ(z) = (1 - z²)³` and its derivative; zero outside `|z| < 1`.
pub fn cutoff(z: f64) -> (f64, f64) {
    if z.abs() >= 1.0 {
        return (0.0, 0.0);
    }
    let w = 1.0 - z * z;
    (w * w * w, -6.0 * z * w * w)
}

/// Profile `P` and its derivative; zero outside `|x| < 1`.
pub fn profile(x: f64) -> (f64, f64) {
    if x.abs() >= 1.0 {
        return (0.0, 0.0);
    }
    let y = x * x;
    let w = 1.0 - y;
    let r = poly(&PROFILE, y);
    let dr = dpoly(&PROFILE, y) * 2.0 * x;
    let p = x * w * w * w * r;
    let dp = w * w * w * r - 6.0 * y * w * w * r + x * w * w * w * dr;
    (p, dp)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DaParams", into = "DaParams")]
pub struct DASystem {
    base: ToralAutomorphism,
    rho: f64,
    mu: f64,
    lambda_u: f64,
    lambda_s: f64,
    /// Columns `e_u`, `e_s` (unit right eigenvectors).
    eig: Matrix2<f64>,
    /// Inverse of `eig`: torus displacement → eigencoordinates.
    eig_inv: Matrix2<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DaParams {
    base: Vec<Vec<i64>>,
    rho: f64,
    mu: f64,
}

impl TryFrom<DaParams> for DASystem {
    type Error = Error;
    fn try_from(p: DaParams) -> Result<Self> {
        DASystem::new(ToralAutomorphism::new(p.base)?, p.rho, p.mu)
    }
}

impl From<DASystem> for DaParams {
    fn from(d: DASystem) -> Self {
        DaParams { base: d.base.matrix().to_vec(), rho: d.rho, mu: d.mu }
    }
}

impl DASystem {
    pub fn new(base: ToralAutomorphism, rho: f64, mu: f64) -> Result<Self> {
        if base.dim() != 2 || base.stable_dim() != 1 {
            return Err(Error::InvalidDimension("DA surgery needs a 2-torus base with one stable direction".into()));
        }
        if !(rho > 0.0 && rho < 0.25) || !(mu >= 0.0) {
            return Err(Error::InvalidConfig(format!("surgery parameters rho={rho}, mu={mu}")));
        }
        let lambda_s = base.stable_eigenvalue().expect("stable_dim 1 on T^2 is real");
        let lambda_u = base.real().trace() - lambda_s;
        let es = base.stable_vector().expect("real");
        let eu = {
            let m = base.real() - DMatrix::identity(2, 2) * lambda_u;
            // Kernel of a 2x2 rank-one matrix: rotate a nonzero row.
            let (a, b) = if m[(0, 0)].abs() + m[(0, 1)].abs() > m[(1, 0)].abs() + m[(1, 1)].abs() {
                (m[(0, 0)], m[(0, 1)])
            } else {
                (m[(1, 0)], m[(1, 1)])
            };
            let v = DVector::from_vec(vec![-b, a]).normalize();
            if v[0] < 0.0 {
                -v
            } else {
                v
            }
        };
        let eig = Matrix2::new(eu[0], es[0], eu[1], es[1]);
        let eig_inv = eig.try_inverse().expect("distinct eigenvalues");
        Ok(Self { base, rho, mu, lambda_u, lambda_s, eig, eig_inv })
    }

    /// Cat map with the default radius and strength.
    pub fn standard() -> Self {
        let base = ToralAutomorphism::cat();
        let ls = base.stable_eigenvalue().unwrap();
        Self::new(base, DEFAULT_RHO, DEFAULT_FIXED_MULTIPLIER - ls).expect("defaults are valid")
    }

    pub fn base(&self) -> &ToralAutomorphism {
        &self.base
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn lambda_u(&self) -> f64 {
        self.lambda_u
    }

    pub fn lambda_s(&self) -> f64 {
        self.lambda_s
    }

    pub fn unstable_vector(&self) -> [f64; 2] {
        [self.eig[(0, 0)], self.eig[(1, 0)]]
    }

    pub fn stable_vector(&self) -> [f64; 2] {
        [self.eig[(0, 1)], self.eig[(1, 1)]]
    }

    /// Eigencoordinates `(u, v)` of the lift of `theta` nearest to the origin.
    pub fn eigencoords(&self, theta: &[f64]) -> (f64, f64) {
        let c = nalgebra::Vector2::new(theta[0] - theta[0].round(), theta[1] - theta[1].round());
        let uv = self.eig_inv * c;
        (uv[0], uv[1])
    }

    /// Surgery term `δ` and its gradient in torus coordinates.
    fn surgery(&self, theta: &[f64]) -> (f64, [f64; 2]) {
        let (u, v) = self.eigencoords(theta);
        let (cu, dcu) = cutoff(u / self.rho);
        let (pv, dpv) = profile(v / self.rho);
        if cu == 0.0 && dcu == 0.0 || pv == 0.0 && dpv == 0.0 {
            return (0.0, [0.0, 0.0]);
        }
        let delta = self.mu * self.rho * cu * pv;
        let du = self.mu * dcu * pv;
        let dv = self.mu * cu * dpv;
        let g0 = du * self.eig_inv[(0, 0)] + dv * self.eig_inv[(1, 0)];
        let g1 = du * self.eig_inv[(0, 1)] + dv * self.eig_inv[(1, 1)];
        (delta, [g0, g1])
    }

    pub fn apply(&self, theta: &[f64]) -> Vec<f64> {
        let (delta, _) = self.surgery(theta);
        let es = self.stable_vector();
        let a = self.base.matrix();
        (0..2).map(|i| wrap_unit(a[i][0] as f64 * theta[0] + a[i][1] as f64 * theta[1] + es[i] * delta)).collect()
    }

    pub fn differential(&self, theta: &[f64]) -> Matrix2<f64> {
        let (_, g) = self.surgery(theta);
        let es = self.stable_vector();
        let a = self.base.real();
        Matrix2::new(
            a[(0, 0)] + es[0] * g[0],
            a[(0, 1)] + es[0] * g[1],
            a[(1, 0)] + es[1] * g[0],
            a[(1, 1)] + es[1] * g[1],
        )
    }

    /// Stable-line map `v ↦ λ_s v + μ ρ P(v/ρ)` on `u = 0`.
    pub fn stable_line_map(&self, v: f64) -> f64 {
        self.lambda_s * v + self.mu * self.rho * profile(v / self.rho).0
    }

    /// The two saddle points created on the stable line, `±v*` in eigencoordinates.
    ///
    /// `v*` is the positive root of `stable_line_map(v) = v`, found by bisection.
    pub fn saddle_offset(&self) -> f64 {
        let g = |v: f64| self.stable_line_map(v) - v;
        let (mut lo, mut hi) = (1e-9 * self.rho, self.rho);
        if g(lo) <= 0.0 {
            return 0.0;
        }
        while hi - lo > 1e-16 {
            let mid = 0.5 * (lo + hi);
            if g(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Torus coordinates of the point with eigencoordinates `(u, v)`.
    pub fn from_eigencoords(&self, u: f64, v: f64) -> Vec<f64> {
        let c = self.eig * nalgebra::Vector2::new(u, v);
        vec![wrap_unit(c[0]), wrap_unit(c[1])]
    }
}
