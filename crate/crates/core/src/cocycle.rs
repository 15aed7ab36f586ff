//! The Grassmannian cocycle `(x, E) ↦ (f(x), Df(x)E)`, stable planes by
//! pullback, and the sampled cone-invariance certificate.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::ambient::{graph_norm, orthonormalize, principal_angles, AmbientPoint, ConeField, Subspace};
use crate::error::{Error, Result};
use crate::linalg::{gram_schmidt_fast, op_norm};
use crate::systems::Diffeomorphism;
use crate::{mix_seed, par_map};

pub const DEFAULT_PULLBACK_STEPS: usize = 60;
pub const DEFAULT_GAP_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct BundlePoint {
    pub point: AmbientPoint,
    pub plane: Subspace,
}

pub fn grassmann_step<S: Diffeomorphism + ?Sized>(sys: &S, b: &BundlePoint) -> Result<BundlePoint> {
    let img = sys.differential(&b.point) * b.plane.frame();
    Ok(BundlePoint { point: sys.apply(&b.point), plane: orthonormalize(&img)? })
}

#[derive(Clone, Debug, PartialEq)]
pub struct StableBundleEstimate {
    pub plane: Subspace,
    pub iterations: usize,
    /// Sine of the largest principal angle between the `n`- and `(n-1)`-step pullbacks.
    pub cauchy_gap: f64,
}

/// Differentials along the forward orbit `x, f(x), …, f^{n-1}(x)`.
fn orbit_differentials<S: Diffeomorphism + ?Sized>(sys: &S, x: &AmbientPoint, n: usize) -> Vec<DMatrix<f64>> {
    let mut out = Vec::with_capacity(n);
    let mut p = x.clone();
    for _ in 0..n {
        out.push(sys.differential(&p));
        p = sys.apply(&p);
    }
    out
}

/// Pulls `seed` back through `diffs[..m]`, last differential first.
fn pull_back(diffs: &[DMatrix<f64>], seed: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut f = seed.clone();
    for d in diffs.iter().rev() {
        let raw = d.clone().lu().solve(&f).ok_or(Error::SingularSystem(0.0))?;
        f = gram_schmidt_fast(&raw);
        if f.iter().any(|v| !v.is_finite()) {
            return Err(Error::RankDeficient(0.0));
        }
    }
    Ok(f)
}

fn sin_gap(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let r = b - a * (a.transpose() * b);
    op_norm(&r).min(1.0)
}

pub fn stable_plane<S: Diffeomorphism + ?Sized>(
    sys: &S,
    x: &AmbientPoint,
    n: usize,
    seed: &Subspace,
) -> Result<StableBundleEstimate> {
    stable_plane_with_tol(sys, x, n, seed, DEFAULT_GAP_TOL)
}

/// Stable plane at `x` as the `n`-fold pullback of `seed` placed at `f^n(x)`.
pub fn stable_plane_with_tol<S: Diffeomorphism + ?Sized>(
    sys: &S,
    x: &AmbientPoint,
    n: usize,
    seed: &Subspace,
    tol: f64,
) -> Result<StableBundleEstimate> {
    if n == 0 {
        return Err(Error::InvalidConfig("stable_plane needs n >= 1".into()));
    }
    if seed.ambient_dim() != sys.dim() {
        return Err(Error::DimensionMismatch { expected: sys.dim(), found: seed.ambient_dim() });
    }
    let diffs = orbit_differentials(sys, x, n);
    let full = pull_back(&diffs, seed.frame())?;
    let short = pull_back(&diffs[..n - 1], seed.frame())?;
    let cauchy_gap = sin_gap(&full, &short);
    if !(cauchy_gap <= tol) {
        return Err(Error::NoConvergence { iterations: n, residual: cauchy_gap });
    }
    Ok(StableBundleEstimate { plane: Subspace::from_orthonormal(full), iterations: n, cauchy_gap })
}

/// Cauchy gaps of the `j`-step pullbacks for `j = 1..=n`.
pub fn pullback_gap_history<S: Diffeomorphism + ?Sized>(
    sys: &S,
    x: &AmbientPoint,
    n: usize,
    seed: &Subspace,
) -> Result<Vec<f64>> {
    let diffs = orbit_differentials(sys, x, n);
    let mut prev = seed.frame().clone();
    let mut gaps = Vec::with_capacity(n);
    for j in 1..=n {
        let cur = pull_back(&diffs[..j], seed.frame())?;
        gaps.push(sin_gap(&cur, &prev));
        prev = cur;
    }
    Ok(gaps)
}

/// Largest per-step decay factor of a gap history, over the steps where the
/// gap lies in `(floor, 0.1)`.
pub fn gap_decay_factor(gaps: &[f64], floor: f64) -> Option<f64> {
    gaps.windows(2).filter(|w| w[0] < 0.1 && w[0] > floor && w[1] > floor).map(|w| w[1] / w[0]).reduce(f64::max)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConeCertificate {
    pub alpha: f64,
    pub samples: usize,
    pub max_ratio: f64,
    pub pass: bool,
    pub seed: u64,
}

/// Random plane whose graph map over the cone's split has norm in `[lo, hi)`.
pub fn random_cone_plane(cone: &ConeField, lo: f64, hi: f64, rng: &mut impl Rng) -> Result<Subspace> {
    let (r, c) = (cone.complement().ncols(), cone.center().dim());
    let m = DMatrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal));
    let norm = op_norm(&m);
    let target = if hi > lo { rng.random_range(lo..hi) } else { lo };
    cone.plane_from_graph(&(m * (target / norm)))
}

/// Samples `x` and a plane `E` on the shell `0.5α ≤ ‖L‖ < α` at `f(x)`,
/// pulls `E` back by `Df(x)⁻¹` and records the growth of the graph norm.
pub fn verify_cone_invariance<S: Diffeomorphism + ?Sized>(
    sys: &S,
    cone: &ConeField,
    samples: usize,
    seed: u64,
) -> ConeCertificate {
    let alpha = cone.aperture();
    let ratios = par_map((0..samples.max(1)).collect(), |i: usize| {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, i as u64));
        let x = sys.sample_domain(&mut rng);
        let Ok(e) = random_cone_plane(cone, 0.5 * alpha, alpha, &mut rng) else {
            return f64::INFINITY;
        };
        let before = graph_norm(&e, cone);
        let pulled = sys.differential(&x).lu().solve(e.frame()).and_then(|raw| orthonormalize(&raw).ok());
        match pulled {
            Some(p) => graph_norm(&p, cone) / before,
            None => f64::INFINITY,
        }
    });
    let max_ratio = ratios.iter().copied().fold(0.0, f64::max);
    ConeCertificate { alpha, samples: samples.max(1), max_ratio, pass: max_ratio < 1.0, seed }
}

/// Largest principal angle between the `n`-step pullbacks at `x` of two planes.
pub fn pullback_separation<S: Diffeomorphism + ?Sized>(
    sys: &S,
    x: &AmbientPoint,
    n: usize,
    a: &Subspace,
    b: &Subspace,
) -> Result<f64> {
    let diffs = orbit_differentials(sys, x, n);
    let pa = Subspace::from_orthonormal(pull_back(&diffs, a.frame())?);
    let pb = Subspace::from_orthonormal(pull_back(&diffs, b.frame())?);
    Ok(principal_angles(&pa, &pb)?.max())
}
