use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ambient::wrap_unit;
use crate::error::{Error, Result};
use crate::linalg::{self, sigma_min};

/// Seed of the deterministic search in [`ToralAutomorphism::search`].
const SEARCH_SEED: u64 = 0x7a11_5eed;
const SEARCH_BUDGET: usize = 400_000;
/// Smallest admissible distance of any eigenvalue modulus from 1.
const SPECTRAL_MARGIN: f64 = 0.1;

/// A hyperbolic integer matrix acting on `T^n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<i64>>", into = "Vec<Vec<i64>>")]
pub struct ToralAutomorphism {
    matrix: Vec<Vec<i64>>,
    real: DMatrix<f64>,
    inverse: DMatrix<f64>,
    stable_dim: usize,
    stable_eigenvalue: Option<f64>,
}

impl ToralAutomorphism {
    pub fn new(matrix: Vec<Vec<i64>>) -> Result<Self> {
        let n = matrix.len();
        if n < 2 || matrix.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidDimension("toral matrix must be square, n >= 2".into()));
        }
        if integer_det(&matrix).abs() != 1 {
            return Err(Error::InvalidConfig("toral matrix must have |det| = 1".into()));
        }
        let real = DMatrix::from_fn(n, n, |i, j| matrix[i][j] as f64);
        let inverse =
            integer_inverse(&matrix).ok_or_else(|| Error::InvalidConfig("integer inverse not recovered".into()))?;
        let eig = real.complex_eigenvalues();
        if eig.iter().any(|z| (z.norm() - 1.0).abs() < 1e-9) {
            return Err(Error::InvalidConfig("eigenvalue on the unit circle".into()));
        }
        let stable: Vec<_> = eig.iter().filter(|z| z.norm() < 1.0).collect();
        let stable_eigenvalue = match stable.as_slice() {
            [z] if z.im.abs() < 1e-12 => Some(z.re),
            _ => None,
        };
        Ok(Self { matrix, real, inverse, stable_dim: stable.len(), stable_eigenvalue })
    }

    /// The cat map `[[2,1],[1,1]]`.
    pub fn cat() -> Self {
        Self::new(vec![vec![2, 1], vec![1, 1]]).expect("cat map is hyperbolic")
    }

    /// Deterministic search for an `n × n` unimodular integer matrix with
    /// exactly one (real) eigenvalue inside the unit circle.
    ///
    /// `n = 2` returns the cat map. Larger `n` scans banded matrices with
    /// entries in `{-1, 0, 1, 2}` and keeps the first one whose spectrum stays
    /// [`SPECTRAL_MARGIN`] away from the unit circle and whose inverse
    /// contracts the unstable directions fast enough for a stable cone of
    /// small aperture to be invariant.
    pub fn search(n: usize, contraction: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidDimension(format!("torus dimension {n} < 2")));
        }
        if n == 2 {
            return Ok(Self::cat());
        }
        const ENTRIES: [i64; 6] = [-1, 0, 0, 1, 1, 2];
        let mut rng = ChaCha8Rng::seed_from_u64(SEARCH_SEED ^ n as u64);
        for _ in 0..SEARCH_BUDGET {
            let m: Vec<Vec<i64>> = (0..n)
                .map(|i| {
                    (0..n)
                        .map(|j| if i.abs_diff(j) <= 2 { ENTRIES[rng.random_range(0..ENTRIES.len())] } else { 0 })
                        .collect()
                })
                .collect();
            if integer_det(&m).abs() != 1 {
                continue;
            }
            let Ok(cand) = Self::new(m) else { continue };
            if cand.admissible(contraction) {
                return Ok(cand);
            }
        }
        Err(Error::NoSuchAutomorphism(n))
    }

    fn admissible(&self, contraction: f64) -> bool {
        let Some(ls) = self.stable_eigenvalue else { return false };
        if self.stable_dim != 1 {
            return false;
        }
        let eig = self.real.complex_eigenvalues();
        if eig.iter().any(|z| (z.norm() - 1.0).abs() < SPECTRAL_MARGIN) {
            return false;
        }
        if sigma_min(&self.real) < 0.1 {
            return false;
        }
        // Pullback of a graph over the stable line, measured in the fixed split.
        let es = self.stable_vector().expect("stable line exists");
        let es = DMatrix::from_column_slice(es.len(), 1, es.as_slice());
        let q = linalg::orthogonal_complement(&es);
        let kappa = ls.abs().max(contraction) * linalg::op_norm(&(q.transpose() * &self.inverse * &q));
        kappa < 0.8
    }

    pub fn dim(&self) -> usize {
        self.matrix.len()
    }

    pub fn matrix(&self) -> &[Vec<i64>] {
        &self.matrix
    }

    pub fn real(&self) -> &DMatrix<f64> {
        &self.real
    }

    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.inverse
    }

    pub fn stable_dim(&self) -> usize {
        self.stable_dim
    }

    /// The eigenvalue inside the unit circle, when there is exactly one and it is real.
    pub fn stable_eigenvalue(&self) -> Option<f64> {
        self.stable_eigenvalue
    }

    /// Unit right eigenvector of the stable eigenvalue.
    pub fn stable_vector(&self) -> Option<DVector<f64>> {
        let ls = self.stable_eigenvalue?;
        Some(null_vector(&(&self.real - DMatrix::identity(self.dim(), self.dim()) * ls)))
    }

    /// Unit left eigenvector of the single unstable eigenvalue, for `n = 2`.
    pub fn unstable_covector(&self) -> Option<DVector<f64>> {
        if self.dim() != 2 {
            return None;
        }
        let lu = self.real.trace() - self.stable_eigenvalue?;
        Some(null_vector(&(self.real.transpose() - DMatrix::identity(2, 2) * lu)))
    }

    /// Action on torus coordinates, wrapped to `[0,1)`.
    pub fn apply(&self, theta: &[f64]) -> Vec<f64> {
        self.matrix.iter().map(|row| wrap_unit(row.iter().zip(theta).map(|(&a, &x)| a as f64 * x).sum())).collect()
    }

    pub fn apply_inverse(&self, theta: &[f64]) -> Vec<f64> {
        let v = &self.inverse * DVector::from_column_slice(theta);
        v.iter().map(|&x| wrap_unit(x)).collect()
    }
}

impl TryFrom<Vec<Vec<i64>>> for ToralAutomorphism {
    type Error = Error;
    fn try_from(m: Vec<Vec<i64>>) -> Result<Self> {
        Self::new(m)
    }
}

impl From<ToralAutomorphism> for Vec<Vec<i64>> {
    fn from(t: ToralAutomorphism) -> Self {
        t.matrix
    }
}

/// Unit vector spanning the (numerical) kernel of a rank-deficient matrix, with
/// the sign fixed so the largest-magnitude entry is positive.
fn null_vector(m: &DMatrix<f64>) -> DVector<f64> {
    let svd = m.clone().svd(false, true);
    let vt = svd.v_t.expect("requested");
    let (imin, _) = svd.singular_values.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).expect("nonempty");
    let mut v = vt.row(imin).transpose().into_owned();
    let (imax, _) = v.iter().enumerate().max_by(|a, b| a.1.abs().total_cmp(&b.1.abs())).unwrap();
    if v[imax] < 0.0 {
        v.neg_mut();
    }
    v
}

/// Exact determinant by fraction-free (Bareiss) elimination.
pub fn integer_det(m: &[Vec<i64>]) -> i128 {
    let n = m.len();
    let mut a: Vec<Vec<i128>> = m.iter().map(|r| r.iter().map(|&x| x as i128).collect()).collect();
    let mut sign = 1i128;
    let mut prev = 1i128;
    for k in 0..n {
        if a[k][k] == 0 {
            let Some(p) = (k + 1..n).find(|&i| a[i][k] != 0) else { return 0 };
            a.swap(k, p);
            sign = -sign;
        }
        for i in k + 1..n {
            for j in k + 1..n {
                a[i][j] = (a[i][j] * a[k][k] - a[i][k] * a[k][j]) / prev;
            }
        }
        prev = a[k][k];
    }
    sign * a[n - 1][n - 1]
}

/// Inverse of a unimodular matrix, rounded to integers and checked exactly.
fn integer_inverse(m: &[Vec<i64>]) -> Option<DMatrix<f64>> {
    let n = m.len();
    let real = DMatrix::from_fn(n, n, |i, j| m[i][j] as f64);
    let inv = real.try_inverse()?.map(f64::round);
    let ok = (0..n).all(|i| {
        (0..n).all(|j| {
            let s: i128 = (0..n).map(|k| m[i][k] as i128 * inv[(k, j)] as i128).sum();
            s == i128::from(i == j)
        })
    });
    ok.then_some(inv)
}
