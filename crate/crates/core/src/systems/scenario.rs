use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::bump::BumpPerturbation;
use super::da::DASystem;
use super::toral::ToralAutomorphism;
use super::{newton_inverse, Diffeomorphism};
use crate::ambient::{AmbientPoint, ConeField, Subspace};
use crate::error::{Error, Result};
use crate::folding::{FoldChart, FoldKind, FoldingManifold};
use crate::formats::Header;
use crate::linalg;

pub const DEFAULT_CONTRACTION: f64 = 0.5;
pub const DEFAULT_EPSILON: f64 = 0.5;
pub const DEFAULT_FOLD_SCALE: f64 = 0.02;
/// Stable eigencoordinate of the fold center on the DA stable line through 0.
pub const DA_FOLD_OFFSET: f64 = 0.3;

#[derive(Clone, Debug, PartialEq)]
pub enum Base {
    Da(DASystem),
    Linear(ToralAutomorphism),
}

impl Base {
    pub fn dim(&self) -> usize {
        match self {
            Base::Da(_) => 2,
            Base::Linear(a) => a.dim(),
        }
    }

    /// The underlying automorphism (the unsurgered map for DA).
    pub fn automorphism(&self) -> &ToralAutomorphism {
        match self {
            Base::Da(da) => da.base(),
            Base::Linear(a) => a,
        }
    }

    fn apply(&self, theta: &[f64]) -> Vec<f64> {
        match self {
            Base::Da(da) => da.apply(theta),
            Base::Linear(a) => a.apply(theta),
        }
    }

    fn differential(&self, theta: &[f64]) -> DMatrix<f64> {
        match self {
            Base::Da(da) => {
                let m = da.differential(theta);
                DMatrix::from_fn(2, 2, |i, j| m[(i, j)])
            }
            Base::Linear(a) => a.real().clone(),
        }
    }

    /// Unit direction of the invariant stable line.
    pub fn stable_vector(&self) -> DVector<f64> {
        match self {
            Base::Da(da) => DVector::from_column_slice(&da.stable_vector()),
            Base::Linear(a) => a.stable_vector().expect("one real stable eigenvalue"),
        }
    }

    /// For 2-torus bases, the covector `w` with `w·e_s = 0` and the vector
    /// `e` with `w·e = 1` spanning the unstable direction.
    pub fn unstable_pair(&self) -> Option<(DVector<f64>, DVector<f64>)> {
        if self.dim() != 2 {
            return None;
        }
        let a = self.automorphism();
        let w = a.unstable_covector()?;
        let ls = a.stable_eigenvalue()?;
        let lu = a.real().trace() - ls;
        let m = a.real() - DMatrix::identity(2, 2) * lu;
        let (p, q) = if m.row(0).norm() >= m.row(1).norm() { (m[(0, 0)], m[(0, 1)]) } else { (m[(1, 0)], m[(1, 1)]) };
        let e = DVector::from_vec(vec![-q, p]);
        let e = &e / w.dot(&e);
        Some((w, e))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Surgery {
    pub rho: f64,
    pub mu: f64,
}

/// `f = g × h` on `[-ε,ε]^m × T^n` with `g(t) = λ⊙t`, plus bump perturbations.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioSystem {
    contraction: Vec<f64>,
    base: Base,
    epsilon: f64,
    alpha: f64,
    seed: u64,
    fold: Option<FoldingManifold>,
    perturbations: Vec<BumpPerturbation>,
    mask: Vec<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrappingReport {
    pub grid_per_axis: usize,
    pub points: usize,
    /// Smallest distance of a sampled image from the box boundary; absent
    /// when there are no box coordinates.
    pub min_margin: Option<f64>,
    pub pass: bool,
}

impl ScenarioSystem {
    pub fn new(contraction: Vec<f64>, base: Base, epsilon: f64) -> Result<Self> {
        if contraction.iter().any(|&l| !(l > 0.0 && l < 1.0)) {
            return Err(Error::InvalidConfig("contraction rates must lie in (0, 1)".into()));
        }
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidConfig(format!("epsilon = {epsilon}")));
        }
        let m = contraction.len();
        let mut mask = vec![false; m];
        mask.extend(std::iter::repeat_n(true, base.dim()));
        Ok(Self { contraction, base, epsilon, alpha: 0.1, seed: 0, fold: None, perturbations: Vec::new(), mask })
    }

    pub fn with_fold(mut self, fold: FoldingManifold) -> Result<Self> {
        if fold.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: fold.dim() });
        }
        if fold.s() != self.stable_dim() {
            return Err(Error::InvalidConfig(format!(
                "fold has s = {} but the system's stable dimension is {}",
                fold.s(),
                self.stable_dim()
            )));
        }
        self.fold = Some(fold);
        Ok(self)
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Copy of the system with one more bump.
    pub fn with_perturbation(&self, bump: BumpPerturbation) -> Result<Self> {
        if bump.center().dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: bump.center().dim() });
        }
        let mut out = self.clone();
        out.perturbations.push(bump);
        Ok(out)
    }

    pub fn without_perturbations(&self) -> Self {
        Self { perturbations: Vec::new(), ..self.clone() }
    }

    pub fn box_dim(&self) -> usize {
        self.contraction.len()
    }

    pub fn torus_dim(&self) -> usize {
        self.base.dim()
    }

    /// `s = (d - n) + 1`.
    pub fn stable_dim(&self) -> usize {
        self.box_dim() + self.base.automorphism().stable_dim()
    }

    pub fn contraction(&self) -> &[f64] {
        &self.contraction
    }

    pub fn base(&self) -> &Base {
        &self.base
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn fold(&self) -> Option<&FoldingManifold> {
        self.fold.as_ref()
    }

    pub fn perturbations(&self) -> &[BumpPerturbation] {
        &self.perturbations
    }

    pub fn c_t(&self) -> Option<usize> {
        self.fold.as_ref().map(FoldingManifold::c_t)
    }

    /// Box directions together with the stable line of the base. This is the
    /// exact stable bundle of every unperturbed scenario.
    pub fn nominal_stable_frame(&self) -> Subspace {
        let (m, d) = (self.box_dim(), self.dim());
        let es = self.base.stable_vector();
        let mut f = DMatrix::zeros(d, m + 1);
        for i in 0..m {
            f[(i, i)] = 1.0;
        }
        f.view_mut((m, m), (es.len(), 1)).copy_from(&es);
        Subspace::from_orthonormal(f)
    }

    /// Cone of the scenario's aperture around the fold's center plane, or
    /// around the nominal stable frame when no fold is attached.
    pub fn cone(&self) -> Result<ConeField> {
        let center = self.fold.as_ref().map_or_else(|| self.nominal_stable_frame(), FoldingManifold::center_plane);
        ConeField::new(center, self.alpha)
    }

    /// Point with box coordinates `box_part` and torus coordinates `torus`.
    pub fn point(&self, box_part: &[f64], torus: &[f64]) -> Result<AmbientPoint> {
        let mut c = box_part.to_vec();
        c.extend_from_slice(torus);
        AmbientPoint::new(c, self.mask.clone())
    }

    fn active_bumps(&self) -> impl Iterator<Item = &BumpPerturbation> {
        self.perturbations.iter().filter(|b| !b.is_zero())
    }

    fn linear_guess(&self, y: &AmbientPoint) -> AmbientPoint {
        let m = self.box_dim();
        let c = y.coords();
        let mut x: Vec<f64> = c[..m].iter().zip(&self.contraction).map(|(v, l)| v / l).collect();
        x.extend(self.base.automorphism().apply_inverse(&c[m..]));
        AmbientPoint::new(x, self.mask.clone()).expect("finite")
    }

    pub fn verify_trapping(&self, grid_per_axis: usize) -> TrappingReport {
        let g = grid_per_axis.max(2);
        let (m, d) = (self.box_dim(), self.dim());
        let total = g.pow(d as u32);
        let mut min_margin: Option<f64> = None;
        for mut idx in 0..total {
            let coords: Vec<f64> = (0..d)
                .map(|i| {
                    let r = idx % g;
                    idx /= g;
                    if i < m {
                        -self.epsilon + 2.0 * self.epsilon * r as f64 / (g - 1) as f64
                    } else {
                        r as f64 / g as f64
                    }
                })
                .collect();
            let x = AmbientPoint::new(coords, self.mask.clone()).expect("finite");
            let y = self.apply(&x);
            for &v in &y.coords()[..m] {
                let margin = self.epsilon - v.abs();
                min_margin = Some(min_margin.map_or(margin, |mm| mm.min(margin)));
            }
        }
        TrappingReport { grid_per_axis: g, points: total, min_margin, pass: min_margin.is_none_or(|mm| mm > 0.0) }
    }

    /// Serializable description; the fold and perturbations are carried verbatim.
    pub fn to_document(&self, header: Option<Header>) -> ScenarioDocument {
        let surgery = match &self.base {
            Base::Da(da) => Some(Surgery { rho: da.rho(), mu: da.mu() }),
            Base::Linear(_) => None,
        };
        ScenarioDocument {
            header,
            d: self.dim(),
            n: self.torus_dim(),
            c_t: self.c_t(),
            s: self.stable_dim(),
            lambda: self.contraction.clone(),
            epsilon: self.epsilon,
            base_matrix: self.base.automorphism().matrix().to_vec(),
            surgery,
            fold: self.fold.clone(),
            perturbations: self.perturbations.clone(),
            alpha: self.alpha,
            seed: self.seed,
        }
    }

    pub fn from_document(doc: &ScenarioDocument) -> Result<Self> {
        let auto = ToralAutomorphism::new(doc.base_matrix.clone())?;
        let base = match doc.surgery {
            Some(Surgery { rho, mu }) => Base::Da(DASystem::new(auto, rho, mu)?),
            None => Base::Linear(auto),
        };
        let mut sys = ScenarioSystem::new(doc.lambda.clone(), base, doc.epsilon)?;
        if !(doc.alpha > 0.0) {
            return Err(Error::InvalidConfig(format!("alpha = {}", doc.alpha)));
        }
        sys.alpha = doc.alpha;
        sys.seed = doc.seed;
        if let Some(f) = &doc.fold {
            sys = sys.with_fold(f.clone())?;
        }
        for b in &doc.perturbations {
            sys = sys.with_perturbation(b.clone())?;
        }
        let checks = [("d", doc.d, sys.dim()), ("n", doc.n, sys.torus_dim()), ("s", doc.s, sys.stable_dim())];
        for (name, stated, actual) in checks {
            if stated != actual {
                return Err(Error::InvalidConfig(format!("{name} = {stated} but the system has {actual}")));
            }
        }
        if doc.c_t != sys.c_t() {
            return Err(Error::InvalidConfig("c_T does not match the attached fold".into()));
        }
        Ok(sys)
    }
}

impl Diffeomorphism for ScenarioSystem {
    fn dim(&self) -> usize {
        self.mask.len()
    }

    fn periodic_mask(&self) -> &[bool] {
        &self.mask
    }

    fn apply(&self, x: &AmbientPoint) -> AmbientPoint {
        let m = self.box_dim();
        let c = x.coords();
        let mut out: Vec<f64> = c[..m].iter().zip(&self.contraction).map(|(v, l)| l * v).collect();
        out.extend(self.base.apply(&c[m..]));
        for b in self.active_bumps() {
            for (o, v) in out.iter_mut().zip(b.displacement(x).iter()) {
                *o += v;
            }
        }
        AmbientPoint::new(out, self.mask.clone()).expect("finite image")
    }

    fn differential(&self, x: &AmbientPoint) -> DMatrix<f64> {
        let (m, d) = (self.box_dim(), self.dim());
        let mut j = DMatrix::zeros(d, d);
        for (i, l) in self.contraction.iter().enumerate() {
            j[(i, i)] = *l;
        }
        j.view_mut((m, m), (d - m, d - m)).copy_from(&self.base.differential(&x.coords()[m..]));
        for b in self.active_bumps() {
            j += b.differential(x);
        }
        j
    }

    fn inverse_apply(&self, y: &AmbientPoint, guess: Option<&AmbientPoint>) -> Result<AmbientPoint> {
        let lin = self.linear_guess(y);
        let x = if self.active_bumps().next().is_none() && matches!(self.base, Base::Linear(_)) {
            lin
        } else {
            newton_inverse(self, y, guess.cloned().unwrap_or(lin))?
        };
        if !self.in_domain(&x) {
            return Err(Error::OutOfDomain);
        }
        Ok(x)
    }

    fn sample_domain(&self, rng: &mut dyn RngCore) -> AmbientPoint {
        let m = self.box_dim();
        let c = (0..self.dim())
            .map(|i| if i < m { rng.random_range(-self.epsilon..=self.epsilon) } else { rng.random_range(0.0..1.0) })
            .collect();
        AmbientPoint::new(c, self.mask.clone()).expect("finite")
    }

    fn in_domain(&self, x: &AmbientPoint) -> bool {
        x.coords()[..self.box_dim()].iter().all(|v| v.abs() <= self.epsilon * (1.0 + 1e-12))
    }
}

/// Parameters of [`build_scenario`]; unset options take the defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(rename = "c_T")]
    pub c_t: usize,
    pub s: usize,
    pub kind: FoldKind,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn new(c_t: usize, s: usize, kind: FoldKind) -> Self {
        Self { c_t, s, kind, alpha: None, seed: 0 }
    }

    pub fn default_alpha(c_t: usize) -> f64 {
        if c_t == 1 {
            0.1
        } else {
            0.05
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (c, s) = (self.c_t, self.s);
        if c == 0 || s == 0 {
            return Err(Error::InvalidConfig("c_T and s must be positive".into()));
        }
        if c >= 2 && s <= c {
            return Err(Error::InvalidConfig(format!("c_T = {c} requires s > c_T, got s = {s}")));
        }
        if c >= 2 && self.kind != FoldKind::Mixed {
            return Err(Error::InvalidConfig(format!("c_T = {c} requires the mixed fold")));
        }
        if let Some(a) = self.alpha {
            if !(a > 0.0 && a < 1.0) {
                return Err(Error::InvalidConfig(format!("alpha = {a} outside (0, 1)")));
            }
        }
        Ok(())
    }

    /// Ambient dimension `d = c_T (s + 1)`.
    pub fn d(&self) -> usize {
        self.c_t * (self.s + 1)
    }

    /// Torus dimension: 2 for `c_T = 1`, `d - s + 1` otherwise.
    pub fn n(&self) -> usize {
        if self.c_t == 1 {
            2
        } else {
            self.d() - self.s + 1
        }
    }

    /// Fold dimension `k = d - c_T`.
    pub fn k(&self) -> usize {
        self.d() - self.c_t
    }

    pub fn build(&self) -> Result<ScenarioSystem> {
        self.validate()?;
        let (c, s) = (self.c_t, self.s);
        let (n, d) = (self.n(), self.d());
        let m = d - n;
        let base = if c == 1 {
            Base::Da(DASystem::standard())
        } else {
            Base::Linear(ToralAutomorphism::search(n, DEFAULT_CONTRACTION)?)
        };
        let sys = ScenarioSystem::new(vec![DEFAULT_CONTRACTION; m], base, DEFAULT_EPSILON)?;

        let torus_center = match &sys.base {
            Base::Da(da) => da.from_eigencoords(0.0, DA_FOLD_OFFSET),
            Base::Linear(_) => vec![0.3; n],
        };
        let mut center = vec![0.0; m];
        center.extend(torus_center);

        let es = sys.nominal_stable_frame();
        let mut comp = linalg::orthogonal_complement(es.frame());
        if let Some((w, _)) = sys.base.unstable_pair() {
            // Orient the fold's normal so that it bulges towards increasing
            // unstable coordinate.
            let tail = comp.view((m, 0), (2, 1)).into_owned();
            if w.dot(&tail.column(0)) < 0.0 {
                comp.column_mut(0).neg_mut();
            }
        }
        let frame = DMatrix::from_columns(&es.frame().column_iter().chain(comp.column_iter()).collect::<Vec<_>>());
        let chart = FoldChart::new(center, frame, DEFAULT_FOLD_SCALE, sys.mask.clone())?;
        let fold = FoldingManifold::new(self.kind, s, c, chart)?;
        Ok(sys.with_fold(fold)?.with_alpha(self.alpha.unwrap_or(Self::default_alpha(c))).with_seed(self.seed))
    }
}

/// Builds the default scenario of codimension `c_t` and stable dimension `s`.
pub fn build_scenario(c_t: usize, s: usize, kind: FoldKind) -> Result<ScenarioSystem> {
    ScenarioConfig::new(c_t, s, kind).build()
}

/// JSON form of a scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDocument {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub header: Option<Header>,
    pub d: usize,
    pub n: usize,
    #[serde(rename = "c_T")]
    pub c_t: Option<usize>,
    pub s: usize,
    pub lambda: Vec<f64>,
    pub epsilon: f64,
    pub base_matrix: Vec<Vec<i64>>,
    pub surgery: Option<Surgery>,
    pub fold: Option<FoldingManifold>,
    pub perturbations: Vec<BumpPerturbation>,
    pub alpha: f64,
    pub seed: u64,
}
