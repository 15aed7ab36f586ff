//! Folding manifolds: quadratic graphs `t ↦ (t, q(t))` placed in the ambient
//! space by a similarity chart, and the linear system locating the point whose
//! tangent plane contains a given cone plane.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ambient::{orthonormalize, AmbientPoint, ConeField, Subspace};
use crate::error::{Error, Result};
use crate::linalg::{self, gram_schmidt_fast, sigma_min};
use crate::par_map;

/// Tolerance for accepting a reconstructed fold point.
pub const RECONSTRUCTION_TOL: f64 = 1e-10;
/// Above this many grid points the certificate samples the grid instead.
pub const FULL_GRID_LIMIT: usize = 20_000;
pub const SAMPLED_PLANES: usize = 4096;
const UNIQUENESS_STARTS: usize = 3;
const UNIQUENESS_TOL: f64 = 1e-8;
const CERTIFICATE_SEED: u64 = 0xf01d;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FoldKind {
    Elliptic,
    Saddle,
    Mixed,
}

impl fmt::Display for FoldKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FoldKind::Elliptic => "elliptic",
            FoldKind::Saddle => "saddle",
            FoldKind::Mixed => "mixed",
        })
    }
}

impl FromStr for FoldKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "elliptic" => Ok(FoldKind::Elliptic),
            "saddle" => Ok(FoldKind::Saddle),
            "mixed" => Ok(FoldKind::Mixed),
            other => Err(Error::InvalidConfig(format!("unknown fold kind '{other}'"))),
        }
    }
}

/// `x = center + scale · frame · p` with `frame` orthogonal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FoldChart {
    center: Vec<f64>,
    #[serde(with = "linalg::matrix_rows")]
    frame: DMatrix<f64>,
    scale: f64,
    periodic_mask: Vec<bool>,
}

impl FoldChart {
    pub fn new(center: Vec<f64>, frame: DMatrix<f64>, scale: f64, periodic_mask: Vec<bool>) -> Result<Self> {
        let d = center.len();
        if frame.shape() != (d, d) || periodic_mask.len() != d {
            return Err(Error::DimensionMismatch { expected: d, found: frame.nrows() });
        }
        if (frame.transpose() * &frame - DMatrix::identity(d, d)).amax() > 1e-12 {
            return Err(Error::InvalidConfig("chart frame is not orthogonal".into()));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidConfig(format!("chart scale {scale}")));
        }
        Ok(Self { center, frame, scale, periodic_mask })
    }

    pub fn identity(d: usize) -> Self {
        Self::new(vec![0.0; d], DMatrix::identity(d, d), 1.0, vec![false; d]).expect("valid")
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn frame(&self) -> &DMatrix<f64> {
        &self.frame
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn periodic_mask(&self) -> &[bool] {
        &self.periodic_mask
    }

    pub fn center_point(&self) -> AmbientPoint {
        AmbientPoint::new(self.center.clone(), self.periodic_mask.clone()).expect("valid chart")
    }

    pub fn map(&self, p: &DVector<f64>) -> AmbientPoint {
        let x = DVector::from_column_slice(&self.center) + &self.frame * p * self.scale;
        AmbientPoint::new(x.as_slice().to_vec(), self.periodic_mask.clone()).expect("finite")
    }

    /// Same chart with the center moved by `v`.
    pub fn translated(&self, v: &[f64]) -> Self {
        let center = self.center_point().translated(v).coords().to_vec();
        Self { center, ..self.clone() }
    }

    /// Chart composed with the Euclidean isometry `x ↦ q x + shift`.
    pub fn transformed(&self, q: &DMatrix<f64>, shift: &[f64]) -> Result<Self> {
        let c = q * DVector::from_column_slice(&self.center) + DVector::from_column_slice(shift);
        Self::new(c.as_slice().to_vec(), q * &self.frame, self.scale, self.periodic_mask.clone())
    }
}

/// Monomial `coeff · Π t_i^{e_i}` added to model coordinate `component`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolyTerm {
    pub component: usize,
    pub coeff: f64,
    pub exponents: Vec<u32>,
}

impl PolyTerm {
    fn degree(&self) -> u32 {
        self.exponents.iter().sum()
    }
}

/// Polynomial correction to the model embedding, `p(t) ↦ p(t) + P(t)`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FoldPerturbation {
    pub terms: Vec<PolyTerm>,
}

impl FoldPerturbation {
    /// Bound on `sup |P| + sup ‖DP‖` over `[-1,1]^k`.
    pub fn c1_bound(&self) -> f64 {
        self.terms.iter().map(|m| m.coeff.abs() * (1.0 + m.degree() as f64)).sum()
    }

    /// A few random monomials of degree 1 to 3, scaled so the C¹ bound equals `magnitude`.
    pub fn random(k: usize, d: usize, magnitude: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut terms: Vec<PolyTerm> = (0..4)
            .map(|_| {
                let degree = rng.random_range(1..=3u32);
                let mut exponents = vec![0u32; k];
                for _ in 0..degree {
                    exponents[rng.random_range(0..k)] += 1;
                }
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                PolyTerm { component: rng.random_range(0..d), coeff: sign * rng.random_range(0.5..1.0), exponents }
            })
            .collect();
        let scale = if magnitude > 0.0 { magnitude / Self { terms: terms.clone() }.c1_bound() } else { 0.0 };
        for t in &mut terms {
            t.coeff *= scale;
        }
        Self { terms }
    }

    fn value(&self, t: &[f64], out: &mut DVector<f64>) {
        for m in &self.terms {
            let v: f64 = m.exponents.iter().zip(t).map(|(&e, &x)| x.powi(e as i32)).product();
            out[m.component] += m.coeff * v;
        }
    }

    fn jacobian(&self, t: &[f64], out: &mut DMatrix<f64>) {
        for m in &self.terms {
            for (j, &e) in m.exponents.iter().enumerate() {
                if e == 0 {
                    continue;
                }
                let v: f64 = m
                    .exponents
                    .iter()
                    .zip(t)
                    .enumerate()
                    .map(|(i, (&ei, &x))| if i == j { e as f64 * x.powi(ei as i32 - 1) } else { x.powi(ei as i32) })
                    .product();
                out[(m.component, j)] += m.coeff * v;
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FoldDoc", into = "FoldDoc")]
pub struct FoldingManifold {
    kind: FoldKind,
    s: usize,
    c_t: usize,
    k: usize,
    /// One symmetric `k × k` matrix per normal coordinate, `q_m = tᵀ Q_m t`.
    forms: Vec<DMatrix<f64>>,
    chart: FoldChart,
    perturbation: Option<FoldPerturbation>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FoldDoc {
    kind: FoldKind,
    s: usize,
    #[serde(rename = "c_T")]
    c_t: usize,
    k: usize,
    chart: FoldChart,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    perturbation: Option<FoldPerturbation>,
}

impl TryFrom<FoldDoc> for FoldingManifold {
    type Error = Error;
    fn try_from(doc: FoldDoc) -> Result<Self> {
        let f = FoldingManifold::new(doc.kind, doc.s, doc.c_t, doc.chart)?;
        if f.k != doc.k {
            return Err(Error::InvalidConfig(format!("fold k = {} but kind implies {}", doc.k, f.k)));
        }
        match doc.perturbation {
            Some(p) => f.with_perturbation(p),
            None => Ok(f),
        }
    }
}

impl From<FoldingManifold> for FoldDoc {
    fn from(f: FoldingManifold) -> Self {
        FoldDoc { kind: f.kind, s: f.s, c_t: f.c_t, k: f.k, chart: f.chart, perturbation: f.perturbation }
    }
}

/// Quadratic forms of each kind.
fn normal_forms(kind: FoldKind, s: usize, c: usize) -> Result<Vec<DMatrix<f64>>> {
    match kind {
        FoldKind::Elliptic => {
            if c != 1 {
                return Err(Error::InvalidConfig("elliptic folds have codimension 1".into()));
            }
            Ok(vec![DMatrix::identity(s, s)])
        }
        FoldKind::Saddle => {
            if c != 1 {
                return Err(Error::InvalidConfig("saddle folds have codimension 1".into()));
            }
            if s < 2 || s % 2 == 1 {
                // The chain form t1 t2 + ... + t_{s-1} t_s is degenerate for odd s.
                return Err(Error::InvalidConfig(format!("saddle fold needs even s >= 2, got {s}")));
            }
            let mut q = DMatrix::zeros(s, s);
            for i in 0..s - 1 {
                q[(i, i + 1)] = 0.5;
                q[(i + 1, i)] = 0.5;
            }
            Ok(vec![q])
        }
        FoldKind::Mixed => {
            if c == 0 || c > s {
                return Err(Error::InvalidConfig(format!("mixed fold needs 1 <= c_T <= s, got c_T = {c}, s = {s}")));
            }
            let k = c * s;
            let mut forms = vec![DMatrix::zeros(k, k); c];
            for (l, q) in forms.iter_mut().enumerate().take(c - 1) {
                q[(l, l)] = 1.0;
            }
            for j in c - 1..k {
                forms[c - 1][(j, j)] = 1.0;
            }
            // Couple every free coordinate t_p (p >= s) to one cone coordinate
            // so that each row of A(E^s) picks a distinct column.
            let mut free = s..k;
            let mut couple = |q: &mut DMatrix<f64>, i: usize| {
                let p = free.next().expect("exactly k - s free coordinates");
                q[(i, p)] += 0.5;
                q[(p, i)] += 0.5;
            };
            for l in 0..c - 1 {
                for i in (0..s).filter(|&i| i != l) {
                    couple(&mut forms[l], i);
                }
            }
            for i in 0..c - 1 {
                couple(&mut forms[c - 1], i);
            }
            debug_assert!(free.next().is_none());
            Ok(forms)
        }
    }
}

impl FoldingManifold {
    pub fn new(kind: FoldKind, s: usize, c_t: usize, chart: FoldChart) -> Result<Self> {
        if s == 0 {
            return Err(Error::InvalidDimension("fold needs s >= 1".into()));
        }
        let forms = normal_forms(kind, s, c_t)?;
        let k = forms[0].nrows();
        if chart.dim() != k + c_t {
            return Err(Error::DimensionMismatch { expected: k + c_t, found: chart.dim() });
        }
        Ok(Self { kind, s, c_t, k, forms, chart, perturbation: None })
    }

    pub fn with_perturbation(&self, p: FoldPerturbation) -> Result<Self> {
        let d = self.dim();
        if p.terms.iter().any(|m| m.component >= d || m.exponents.len() != self.k) {
            return Err(Error::InvalidConfig("fold perturbation term has the wrong shape".into()));
        }
        Ok(Self { perturbation: Some(p), ..self.clone() })
    }

    pub fn with_chart(&self, chart: FoldChart) -> Result<Self> {
        if chart.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: chart.dim() });
        }
        Ok(Self { chart, ..self.clone() })
    }

    pub fn kind(&self) -> FoldKind {
        self.kind
    }

    pub fn s(&self) -> usize {
        self.s
    }

    pub fn c_t(&self) -> usize {
        self.c_t
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.k + self.c_t
    }

    pub fn chart(&self) -> &FoldChart {
        &self.chart
    }

    pub fn forms(&self) -> &[DMatrix<f64>] {
        &self.forms
    }

    pub fn perturbation(&self) -> Option<&FoldPerturbation> {
        self.perturbation.as_ref()
    }

    /// Image of the model cone center `ℝ^s × {0}`.
    pub fn center_plane(&self) -> Subspace {
        Subspace::from_orthonormal(self.chart.frame.columns(0, self.s).into_owned())
    }

    pub fn cone(&self, alpha: f64) -> Result<ConeField> {
        ConeField::new(self.center_plane(), alpha)
    }

    /// Model point `(t, q(t)) + P(t)`.
    pub fn model_point(&self, t: &[f64]) -> DVector<f64> {
        let tv = DVector::from_column_slice(t);
        let mut p = DVector::zeros(self.dim());
        p.rows_mut(0, self.k).copy_from(&tv);
        for (m, q) in self.forms.iter().enumerate() {
            p[self.k + m] = tv.dot(&(q * &tv));
        }
        if let Some(pert) = &self.perturbation {
            pert.value(t, &mut p);
        }
        p
    }

    /// `d × k` Jacobian of [`model_point`](Self::model_point).
    pub fn model_jacobian(&self, t: &[f64]) -> DMatrix<f64> {
        let tv = DVector::from_column_slice(t);
        let mut j = DMatrix::zeros(self.dim(), self.k);
        j.view_mut((0, 0), (self.k, self.k)).fill_with_identity();
        for (m, q) in self.forms.iter().enumerate() {
            let g = q * &tv * 2.0;
            j.row_mut(self.k + m).copy_from(&g.transpose());
        }
        if let Some(pert) = &self.perturbation {
            pert.jacobian(t, &mut j);
        }
        j
    }

    /// Orthonormal basis of the model normal space at `t`, obtained by
    /// projecting the last `c_T` coordinate axes off the tangent space.
    fn model_normal(&self, t: &[f64]) -> DMatrix<f64> {
        let tan = gram_schmidt_fast(&self.model_jacobian(t));
        let mut raw = DMatrix::zeros(self.dim(), self.c_t);
        for m in 0..self.c_t {
            raw[(self.k + m, m)] = 1.0;
        }
        let raw = &raw - &tan * (tan.transpose() * &raw);
        gram_schmidt_fast(&raw)
    }

    fn check_domain(&self, t: &[f64]) -> Result<()> {
        if t.len() != self.k {
            return Err(Error::DimensionMismatch { expected: self.k, found: t.len() });
        }
        if t.iter().any(|x| !(x.abs() <= 1.0)) {
            return Err(Error::OutOfDomain);
        }
        Ok(())
    }
}

pub fn embed(fold: &FoldingManifold, t: &[f64]) -> Result<AmbientPoint> {
    fold.check_domain(t)?;
    Ok(fold.chart.map(&fold.model_point(t)))
}

pub fn tangent_frame(fold: &FoldingManifold, t: &[f64]) -> Result<Subspace> {
    fold.check_domain(t)?;
    orthonormalize(&(&fold.chart.frame * fold.model_jacobian(t)))
}

/// `d × c_T` orthonormal basis of the normal space at `t`, smooth in `t`.
pub fn normal_frame(fold: &FoldingManifold, t: &[f64]) -> Result<DMatrix<f64>> {
    fold.check_domain(t)?;
    Ok(&fold.chart.frame * fold.model_normal(t))
}

/// The square system `A t = b` of the tangency conditions.
#[derive(Clone, Debug, PartialEq)]
pub struct FoldSystem {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

/// Basis `v_i = (e_i, ·)` of `E` in model coordinates.
fn model_graph_basis(fold: &FoldingManifold, e: &Subspace) -> Result<DMatrix<f64>> {
    if e.dim() != fold.s || e.ambient_dim() != fold.dim() {
        return Err(Error::DimensionMismatch { expected: fold.s, found: e.dim() });
    }
    let em = fold.chart.frame.transpose() * e.frame();
    let x = em.rows(0, fold.s).into_owned();
    if sigma_min(&x) < 1e-12 {
        return Err(Error::NotAGraph);
    }
    Ok(em * x.try_inverse().ok_or(Error::NotAGraph)?)
}

/// Substitutes `v_i = (u_i, w_i)` into the tangent map: row `(m, i)` reads
/// `2 (Q_m u_i)ᵀ t = w_{m,i}`.
pub fn fold_linear_system(fold: &FoldingManifold, e: &Subspace) -> Result<FoldSystem> {
    let v = model_graph_basis(fold, e)?;
    let (k, s) = (fold.k, fold.s);
    let mut a = DMatrix::zeros(fold.c_t * s, k);
    let mut b = DVector::zeros(fold.c_t * s);
    for (m, q) in fold.forms.iter().enumerate() {
        for i in 0..s {
            let u = v.view((0, i), (k, 1));
            let row = q * u * 2.0;
            a.row_mut(m * s + i).copy_from(&row.transpose());
            b[m * s + i] = v[(k + m, i)];
        }
    }
    Ok(FoldSystem { a, b })
}

/// Norm of the part of the orthonormal frame of `e` normal to the fold at `t`.
pub fn containment_residual(fold: &FoldingManifold, t: &[f64], e: &Subspace) -> f64 {
    let n = &fold.chart.frame * fold.model_normal(t);
    (n.transpose() * e.frame()).norm()
}

/// `vec(N(t)ᵀ V)` in model coordinates; zero iff `E ⊆ T_t`.
fn model_containment(fold: &FoldingManifold, t: &[f64], v: &DMatrix<f64>) -> DVector<f64> {
    let r = fold.model_normal(t).transpose() * v;
    DVector::from_column_slice(r.as_slice())
}

/// Damped Newton on the containment conditions, finite-difference Jacobian.
fn refine_containment(fold: &FoldingManifold, v: &DMatrix<f64>, start: DVector<f64>) -> Option<DVector<f64>> {
    let k = fold.k;
    let mut t = start;
    let mut r = model_containment(fold, t.as_slice(), v);
    for _ in 0..40 {
        if r.norm() < 1e-14 {
            return Some(t);
        }
        let h = 1e-7;
        let mut jac = DMatrix::zeros(r.len(), k);
        for j in 0..k {
            let mut tp = t.clone();
            let mut tm = t.clone();
            tp[j] += h;
            tm[j] -= h;
            let col =
                (model_containment(fold, tp.as_slice(), v) - model_containment(fold, tm.as_slice(), v)) / (2.0 * h);
            jac.set_column(j, &col);
        }
        let step = jac.lu().solve(&(-&r))?;
        let mut lambda = 1.0;
        loop {
            let cand = &t + &step * lambda;
            let rc = model_containment(fold, cand.as_slice(), v);
            if rc.norm() < r.norm() || lambda < 1e-3 {
                t = cand;
                r = rc;
                break;
            }
            lambda *= 0.5;
        }
        if step.norm() * lambda < 1e-16 {
            break;
        }
    }
    (r.norm() < 1e-12).then_some(t)
}

/// Linear solve, refined by Newton when the fold carries a perturbation.
fn solve_unchecked(fold: &FoldingManifold, e: &Subspace) -> Result<DVector<f64>> {
    let sys = fold_linear_system(fold, e)?;
    let det = sys.a.determinant();
    if !(det.abs() >= 1e-12) {
        return Err(Error::SingularSystem(det.abs()));
    }
    let t = sys.a.lu().solve(&sys.b).ok_or(Error::SingularSystem(det.abs()))?;
    if fold.perturbation.is_none() {
        return Ok(t);
    }
    let v = model_graph_basis(fold, e)?;
    refine_containment(fold, &v, t.clone()).ok_or(Error::NoConvergence { iterations: 40, residual: f64::NAN })
}

/// The fold parameter whose tangent plane contains `e`.
pub fn solve_fold_point(fold: &FoldingManifold, e: &Subspace) -> Result<DVector<f64>> {
    let t = solve_unchecked(fold, e)?;
    fold.check_domain(t.as_slice())?;
    let res = containment_residual(fold, t.as_slice(), e);
    if !(res < RECONSTRUCTION_TOL) {
        return Err(Error::Reconstruction(res));
    }
    Ok(t)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldingCertificate {
    pub kind: FoldKind,
    pub k: usize,
    pub s: usize,
    #[serde(rename = "c_T")]
    pub c_t: usize,
    pub alpha: f64,
    /// Grid points per axis.
    pub grid: usize,
    /// Number of cone planes actually checked.
    pub planes: usize,
    pub sampled: bool,
    pub max_residual: f64,
    pub unique: bool,
    pub continuity_modulus: f64,
    pub out_of_domain: usize,
    pub singular: usize,
    pub pass: bool,
}

struct PlaneOutcome {
    t: Option<DVector<f64>>,
    residual: f64,
    unique: bool,
    out_of_domain: bool,
    singular: bool,
    continuity: f64,
}

/// Sweeps graph maps `L = α M / max(1, ‖M‖)` with the entries of `M` on a
/// uniform grid in `[-1, 1]`, solving and verifying each cone plane.
///
/// When the full grid would exceed [`FULL_GRID_LIMIT`] points a seeded sample
/// of [`SAMPLED_PLANES`] grid points is used instead, together with the
/// one-entry extremes. Each checked plane is compared with its grid neighbour
/// along every axis for the continuity modulus.
pub fn verify_folding(fold: &FoldingManifold, cone: &ConeField, grid_per_axis: usize) -> FoldingCertificate {
    let g = grid_per_axis.max(2);
    let rows = cone.complement().ncols();
    let cols = cone.center().dim();
    let entries = rows * cols;
    let full = (g as f64).powi(entries as i32) <= FULL_GRID_LIMIT as f64;
    let points: Vec<Vec<usize>> = if full {
        let total = g.pow(entries as u32);
        (0..total)
            .map(|mut idx| {
                (0..entries)
                    .map(|_| {
                        let r = idx % g;
                        idx /= g;
                        r
                    })
                    .collect()
            })
            .collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(CERTIFICATE_SEED);
        let mid = g / 2;
        let mut pts = Vec::with_capacity(SAMPLED_PLANES + 2 * entries);
        for a in 0..entries {
            for end in [0, g - 1] {
                let mut p = vec![mid; entries];
                p[a] = end;
                pts.push(p);
            }
        }
        while pts.len() < SAMPLED_PLANES + 2 * entries {
            pts.push((0..entries).map(|_| rng.random_range(0..g)).collect());
        }
        pts
    };

    let alpha = cone.aperture();
    let plane_at = |idx: &[usize]| -> Result<Subspace> {
        let m = DMatrix::from_fn(rows, cols, |i, j| -1.0 + 2.0 * idx[j * rows + i] as f64 / (g - 1) as f64);
        let norm = linalg::op_norm(&m).max(1.0);
        cone.plane_from_graph(&(m * (alpha / norm)))
    };
    let point_of = |idx: &[usize]| -> Option<AmbientPoint> {
        let e = plane_at(idx).ok()?;
        let t = solve_unchecked(fold, &e).ok()?;
        Some(fold.chart.map(&fold.model_point(t.as_slice())))
    };

    let outcomes = par_map(points.into_iter().enumerate().collect(), |(n, idx): (usize, Vec<usize>)| {
        let mut out = PlaneOutcome {
            t: None,
            residual: 0.0,
            unique: true,
            out_of_domain: false,
            singular: false,
            continuity: 0.0,
        };
        let Ok(e) = plane_at(&idx) else {
            out.singular = true;
            return out;
        };
        let t = match solve_unchecked(fold, &e) {
            Ok(t) => t,
            Err(Error::SingularSystem(_)) | Err(Error::NotAGraph) => {
                out.singular = true;
                return out;
            }
            Err(_) => {
                out.unique = false;
                return out;
            }
        };
        out.out_of_domain = t.iter().any(|x| x.abs() > 1.0);
        out.residual = containment_residual(fold, t.as_slice(), &e);
        if let Ok(v) = model_graph_basis(fold, &e) {
            let mut rng = ChaCha8Rng::seed_from_u64(CERTIFICATE_SEED ^ (n as u64).wrapping_mul(0x9e37_79b9));
            for _ in 0..UNIQUENESS_STARTS {
                let start = DVector::from_fn(fold.k, |_, _| rng.random_range(-0.25..0.25));
                match refine_containment(fold, &v, start) {
                    Some(tn) if (&tn - &t).amax() < UNIQUENESS_TOL => {}
                    _ => out.unique = false,
                }
            }
        }
        let here = fold.chart.map(&fold.model_point(t.as_slice()));
        for a in 0..idx.len() {
            if idx[a] + 1 < g {
                let mut nb = idx.clone();
                nb[a] += 1;
                if let Some(p) = point_of(&nb) {
                    out.continuity = out.continuity.max(here.distance(&p));
                }
            }
        }
        out.t = Some(t);
        out
    });

    let planes = outcomes.len();
    let max_residual = outcomes.iter().map(|o| o.residual).fold(0.0, f64::max);
    let unique = outcomes.iter().all(|o| o.unique);
    let continuity_modulus = outcomes.iter().map(|o| o.continuity).fold(0.0, f64::max);
    let out_of_domain = outcomes.iter().filter(|o| o.out_of_domain).count();
    let singular = outcomes.iter().filter(|o| o.singular).count();
    let pass = max_residual < 1e-9 && unique && out_of_domain == 0 && singular == 0;
    FoldingCertificate {
        kind: fold.kind,
        k: fold.k,
        s: fold.s,
        c_t: fold.c_t,
        alpha,
        grid: g,
        planes,
        sampled: !full,
        max_residual,
        unique,
        continuity_modulus,
        out_of_domain,
        singular,
        pass,
    }
}
