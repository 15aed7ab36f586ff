use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::classify::{classify, Classification, TangencyClass, DEFAULT_ANGLE_TOL};
use super::{Detector, TangencyReport};
use crate::ambient::{principal_angles, AmbientPoint, Subspace};
use crate::error::{Error, Result};
use crate::folding::{embed, tangent_frame, FoldKind, FoldingManifold};
use crate::linalg;
use crate::systems::{Diffeomorphism, ScenarioSystem};

/// Orbit lengths of the successive shooting corrections.
const SHOOTING_ROUNDS: [usize; 5] = [2, 4, 8, 16, 32];
/// Steps and per-step factor of the same-leaf contraction test.
const SAME_LEAF_STEPS: usize = 30;
const SAME_LEAF_FACTOR: f64 = 0.9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LeafMode {
    /// Level sets of the linear unstable coordinate (exact for unperturbed scenarios).
    Chart,
    /// Leaf located by matching forward orbits against a transversal.
    Shooting,
}

/// Stable leaves through the transversal `γ(τ) = reference + τ e`, labelled by `τ`.
#[derive(Clone, Debug, PartialEq)]
pub struct LeafFamily {
    reference: AmbientPoint,
    covector: DVector<f64>,
    direction: DVector<f64>,
    half_width: f64,
    mode: LeafMode,
}

impl LeafFamily {
    /// `covector` and `direction` are full `d`-vectors with `covector · direction = 1`.
    pub fn new(
        reference: AmbientPoint,
        covector: DVector<f64>,
        direction: DVector<f64>,
        half_width: f64,
        mode: LeafMode,
    ) -> Result<Self> {
        let d = reference.dim();
        if covector.len() != d || direction.len() != d {
            return Err(Error::DimensionMismatch { expected: d, found: covector.len() });
        }
        if (covector.dot(&direction) - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidConfig("leaf covector and transversal are not dual".into()));
        }
        if !(half_width > 0.0) {
            return Err(Error::InvalidConfig(format!("half width {half_width}")));
        }
        Ok(Self { reference, covector, direction, half_width, mode })
    }

    /// Leaves of a 2-torus-based scenario around its fold center, half width
    /// half the fold scale. Shooting is selected when the system carries a
    /// nonzero perturbation.
    pub fn for_scenario(sys: &ScenarioSystem) -> Result<Self> {
        let fold = sys.fold().ok_or_else(|| Error::InvalidConfig("scenario has no fold".into()))?;
        let (w, e) = sys.base().unstable_pair().ok_or(Error::NotElliptic)?;
        let (m, d) = (sys.box_dim(), sys.dim());
        let mut covector = DVector::zeros(d);
        let mut direction = DVector::zeros(d);
        covector.rows_mut(m, 2).copy_from(&w);
        direction.rows_mut(m, 2).copy_from(&e);
        let perturbed = sys.perturbations().iter().any(|b| !b.is_zero());
        let mode = if perturbed { LeafMode::Shooting } else { LeafMode::Chart };
        Self::new(fold.chart().center_point(), covector, direction, 0.5 * fold.chart().scale(), mode)
    }

    pub fn with_mode(self, mode: LeafMode) -> Self {
        Self { mode, ..self }
    }

    pub fn with_half_width(self, half_width: f64) -> Self {
        Self { half_width, ..self }
    }

    pub fn mode(&self) -> LeafMode {
        self.mode
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn reference(&self) -> &AmbientPoint {
        &self.reference
    }

    pub fn transversal_point(&self, tau: f64) -> AmbientPoint {
        self.reference.translated((&self.direction * tau).as_slice())
    }

    /// Linear unstable coordinate of `x` relative to the reference.
    pub fn chart_parameter(&self, x: &AmbientPoint) -> f64 {
        self.covector.dot(&self.reference.displacement_to(x))
    }

    /// Leaf label of `x` and its gradient with respect to `x`.
    pub fn evaluate<S: Diffeomorphism + ?Sized>(&self, sys: &S, x: &AmbientPoint) -> (f64, DVector<f64>) {
        match self.mode {
            LeafMode::Chart => (self.chart_parameter(x), self.covector.clone()),
            LeafMode::Shooting => self.shoot(sys, x),
        }
    }

    pub fn leaf_parameter<S: Diffeomorphism + ?Sized>(&self, sys: &S, x: &AmbientPoint) -> f64 {
        self.evaluate(sys, x).0
    }

    /// Finds `τ` with `f^N(γ(τ))` matching `f^N(x)` along the unstable
    /// covector, for increasing `N`. Each round is one Newton correction
    /// using the tangent of the transversal pushed forward.
    fn shoot<S: Diffeomorphism + ?Sized>(&self, sys: &S, x: &AmbientPoint) -> (f64, DVector<f64>) {
        let d = x.dim();
        let last = *SHOOTING_ROUNDS.last().expect("nonempty");
        let mut a = x.clone();
        let mut jac = DMatrix::<f64>::identity(d, d);
        let mut targets = Vec::with_capacity(SHOOTING_ROUNDS.len());
        for j in 1..=last {
            jac = sys.differential(&a) * jac;
            a = sys.apply(&a);
            if SHOOTING_ROUNDS.contains(&j) {
                targets.push(a.clone());
            }
        }
        let mut tau = self.chart_parameter(x);
        let mut gain = 1.0;
        for (&n, target) in SHOOTING_ROUNDS.iter().zip(&targets) {
            let mut b = self.transversal_point(tau);
            let mut xi = self.direction.clone();
            for _ in 0..n {
                xi = sys.differential(&b) * xi;
                b = sys.apply(&b);
            }
            gain = self.covector.dot(&xi);
            tau += self.covector.dot(&b.displacement_to(target)) / gain;
        }
        let grad = (self.covector.transpose() * jac).transpose() / gain;
        (tau, grad)
    }

    /// Whether the forward orbits of `a` and `b` approach each other at a
    /// rate of at least `0.9` per step over 30 steps.
    pub fn same_leaf<S: Diffeomorphism + ?Sized>(&self, sys: &S, a: &AmbientPoint, b: &AmbientPoint) -> bool {
        let sep0 = a.distance(b);
        let (mut p, mut q) = (a.clone(), b.clone());
        for _ in 0..SAME_LEAF_STEPS {
            p = sys.apply(&p);
            q = sys.apply(&q);
        }
        p.distance(&q) <= SAME_LEAF_FACTOR.powi(SAME_LEAF_STEPS as i32) * sep0 + 1e-12
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepOptions {
    /// Final bracket width in leaf-parameter units.
    pub bisection_tol: f64,
    /// Coarse start grid per fold axis.
    pub coarse_grid: usize,
    pub newton_max: usize,
    /// `|ℓ(embed(t)) - τ|` accepted as an intersection.
    pub level_tol: f64,
    pub angle_tol: f64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self { bisection_tol: 1e-13, coarse_grid: 5, newton_max: 40, level_tol: 4e-15, angle_tol: DEFAULT_ANGLE_TOL }
    }
}

/// The predicate "the fold patch meets leaf `τ`" with cached start points.
pub struct FoldLeafIntersection<'a, S: Diffeomorphism + ?Sized> {
    sys: &'a S,
    fold: &'a FoldingManifold,
    leaves: &'a LeafFamily,
    opts: SweepOptions,
    coarse: Vec<(DVector<f64>, f64)>,
    /// `scale · frame`, mapping model tangent vectors to ambient ones.
    push: DMatrix<f64>,
}

impl<'a, S: Diffeomorphism + ?Sized> FoldLeafIntersection<'a, S> {
    pub fn new(sys: &'a S, fold: &'a FoldingManifold, leaves: &'a LeafFamily, opts: SweepOptions) -> Result<Self> {
        if fold.kind() != FoldKind::Elliptic || fold.c_t() != 1 {
            return Err(Error::NotElliptic);
        }
        let push = fold.chart().frame() * fold.chart().scale();
        let mut me = Self { sys, fold, leaves, opts, coarse: Vec::new(), push };
        let (k, g) = (fold.k(), me.opts.coarse_grid.max(2));
        for mut idx in 0..g.pow(k as u32) {
            let t = DVector::from_fn(k, |_, _| {
                let r = idx % g;
                idx /= g;
                -1.0 + 2.0 * r as f64 / (g - 1) as f64
            });
            let (v, _) = me.value(&t)?;
            me.coarse.push((t, v));
        }
        Ok(me)
    }

    /// `ℓ(embed(t))` and its gradient in `t`.
    fn value(&self, t: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        let x = embed(self.fold, t.as_slice())?;
        let (v, gx) = self.leaves.evaluate(self.sys, &x);
        let jt = &self.push * self.fold.model_jacobian(t.as_slice());
        Ok((v, jt.transpose() * gx))
    }

    /// Newton (minimum-norm steps) on `ℓ(embed(t)) = τ`, from `warm` and
    /// the two coarse points closest to the level.
    pub fn solve_level(&self, tau: f64, warm: Option<&DVector<f64>>) -> Option<DVector<f64>> {
        let mut order: Vec<usize> = (0..self.coarse.len()).collect();
        order.sort_by(|&a, &b| (self.coarse[a].1 - tau).abs().total_cmp(&(self.coarse[b].1 - tau).abs()));
        let starts = warm.into_iter().cloned().chain(order.iter().take(2).map(|&i| self.coarse[i].0.clone()));
        for start in starts {
            if let Some(t) = self.newton_level(tau, start) {
                return Some(t);
            }
        }
        None
    }

    fn newton_level(&self, tau: f64, mut t: DVector<f64>) -> Option<DVector<f64>> {
        let mut best = f64::INFINITY;
        let mut stall = 0;
        for _ in 0..self.opts.newton_max {
            let (v, g) = self.value(&t).ok()?;
            let res = v - tau;
            if res.abs() <= self.opts.level_tol {
                return Some(t);
            }
            if res.abs() > 0.9 * best {
                stall += 1;
                if stall >= 3 {
                    return None;
                }
            } else {
                stall = 0;
            }
            best = best.min(res.abs());
            let gg = g.norm_squared();
            if !(gg > 1e-300) {
                return None;
            }
            t -= &g * (res / gg);
            t.apply(|x| *x = x.clamp(-1.0, 1.0));
        }
        None
    }

    pub fn meets(&self, tau: f64) -> bool {
        self.solve_level(tau, None).is_some()
    }

    /// Critical point of `ℓ ∘ embed` near `t`, by Newton with a
    /// finite-difference Hessian of the gradient.
    fn critical_point(&self, mut t: DVector<f64>) -> Option<DVector<f64>> {
        let k = t.len();
        let h = 1e-6;
        for _ in 0..8 {
            let (_, g) = self.value(&t).ok()?;
            let mut hess = DMatrix::zeros(k, k);
            for j in 0..k {
                let mut tp = t.clone();
                let mut tm = t.clone();
                tp[j] += h;
                tm[j] -= h;
                let col = (self.value(&tp).ok()?.1 - self.value(&tm).ok()?.1) / (2.0 * h);
                hess.set_column(j, &col);
            }
            let step = hess.lu().solve(&(-g))?;
            t += &step;
            if t.amax() > 1.0 {
                return None;
            }
            if step.amax() < 1e-14 {
                break;
            }
        }
        Some(t)
    }
}

/// Bisection on the lower boundary of `{τ : the fold meets leaf τ}`.
pub fn find_tangency_sweep<S: Diffeomorphism + ?Sized>(
    sys: &S,
    fold: &FoldingManifold,
    leaves: &LeafFamily,
    opts: &SweepOptions,
) -> Result<TangencyReport> {
    let problem = FoldLeafIntersection::new(sys, fold, leaves, opts.clone())?;
    let (mut lo, mut hi) = (-leaves.half_width, leaves.half_width);
    let mut hit = problem.solve_level(hi, None).ok_or(Error::EmptyIntersection)?;
    if problem.meets(lo) {
        return Err(Error::LeftDomain);
    }
    let mut iterations = 0;
    while hi - lo > opts.bisection_tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        match problem.solve_level(mid, Some(&hit)) {
            Some(t) => {
                hi = mid;
                hit = t;
            }
            None => lo = mid,
        }
        iterations += 1;
    }
    let t_bar = 0.5 * (lo + hi);
    let width = hi - lo;

    // At the infimum the intersection degenerates to the critical point.
    let t_star = problem
        .critical_point(hit.clone())
        .filter(|t| problem.value(t).is_ok_and(|(v, _)| (v - t_bar).abs() <= width + opts.bisection_tol))
        .unwrap_or(hit);
    let point = embed(fold, t_star.as_slice())?;
    let (leaf_value, grad) = leaves.evaluate(sys, &point);
    let _ = leaf_value;
    let normal = grad.normalize();
    let plane = Subspace::from_orthonormal(linalg::orthogonal_complement(&DMatrix::from_column_slice(
        normal.len(),
        1,
        normal.as_slice(),
    )));
    let tu = tangent_frame(fold, t_star.as_slice())?;
    let angles = principal_angles(&tu, &plane)?.angles().to_vec();
    let class = match classify(&tu, &plane, sys.dim(), opts.angle_tol)? {
        Classification::Tangency(c) => c,
        Classification::Transverse => {
            let d_t = angles.iter().filter(|&&a| a < opts.angle_tol).count() as i64;
            let k_t = (tu.dim() + plane.dim()) as i64 - sys.dim() as i64;
            TangencyClass { c_t: d_t - k_t, d_t, k_t }
        }
    };
    Ok(TangencyReport {
        detector: Detector::Sweep,
        t_star: t_star.as_slice().to_vec(),
        point,
        plane,
        class,
        residual_norm: width,
        principal_angles: angles,
        iterations,
        leaf_parameter: Some(t_bar),
    })
}
