//! Seeded C¹ perturbations and persistence experiments.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::ambient::AmbientPoint;
use crate::error::{Error, Result};
use crate::folding::{verify_folding, FoldPerturbation, FoldingManifold};
use crate::linalg;
use crate::systems::{BumpPerturbation, Diffeomorphism, ScenarioSystem};
use crate::tangency::{
    find_tangency_newton, find_tangency_sweep, Detector, LeafFamily, NewtonOptions, SweepOptions, TangencyReport,
};
use crate::{mix_seed, par_map};

pub const DEFAULT_LADDER: [f64; 5] = [1e-2, 3e-3, 1e-3, 3e-4, 1e-4];
pub const DEFAULT_BUMP_RADIUS: f64 = 0.1;
/// Points sampled to estimate `min σ_min(Df)` over a placement region.
pub const CAP_SAMPLES: usize = 64;
pub const CAP_FACTOR: f64 = 0.1;
/// Multiple of the fitted slope allowed for any single displacement.
pub const ENVELOPE_FACTOR: f64 = 3.0;

/// Strictly decreasing positive perturbation sizes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct MagnitudeLadder {
    magnitudes: Vec<f64>,
}

impl MagnitudeLadder {
    pub fn new(magnitudes: Vec<f64>) -> Result<Self> {
        if magnitudes.is_empty() {
            return Err(Error::InvalidConfig("empty magnitude ladder".into()));
        }
        if magnitudes.iter().any(|m| !(m.is_finite() && *m > 0.0)) {
            return Err(Error::InvalidConfig("ladder magnitudes must be positive".into()));
        }
        if magnitudes.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidConfig("ladder must be strictly decreasing".into()));
        }
        Ok(Self { magnitudes })
    }

    pub fn magnitudes(&self) -> &[f64] {
        &self.magnitudes
    }
}

impl Default for MagnitudeLadder {
    fn default() -> Self {
        Self { magnitudes: DEFAULT_LADDER.to_vec() }
    }
}

impl TryFrom<Vec<f64>> for MagnitudeLadder {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<MagnitudeLadder> for Vec<f64> {
    fn from(l: MagnitudeLadder) -> Self {
        l.magnitudes
    }
}

impl std::str::FromStr for MagnitudeLadder {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let v = s
            .split(',')
            .map(|x| x.trim().parse::<f64>().map_err(|e| Error::InvalidConfig(format!("ladder entry {x:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        Self::new(v)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Placement {
    /// Bump support contains the fold center.
    Overlap,
    /// Bump support stays clear of the fold patch.
    Away,
}

/// Where bumps go and how large they may be.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationRegion {
    pub anchor: AmbientPoint,
    pub radius: f64,
    pub placement: Placement,
    /// Upper bound on the C¹ size, `0.1 · min σ_min(Df)` near the anchor.
    pub cap: f64,
}

impl PerturbationRegion {
    /// Region anchored at the fold center of `sys`.
    pub fn around_fold(sys: &ScenarioSystem, placement: Placement) -> Result<Self> {
        let fold = sys.fold().ok_or_else(|| Error::InvalidConfig("scenario has no fold".into()))?;
        let anchor = fold.chart().center_point();
        let radius = DEFAULT_BUMP_RADIUS;
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(sys.seed(), 0xca9));
        let reach = 3.0 * radius;
        let mut smin = f64::INFINITY;
        for _ in 0..CAP_SAMPLES {
            let v = random_unit(sys.dim(), &mut rng) * (reach * rng.random::<f64>());
            let x = anchor.translated(v.as_slice());
            if sys.in_domain(&x) {
                smin = smin.min(linalg::sigma_min(&sys.without_perturbations().differential(&x)));
            }
        }
        Ok(Self { anchor, radius, placement, cap: CAP_FACTOR * smin })
    }
}

fn random_unit(d: usize, rng: &mut impl Rng) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let n = v.norm();
        if n > 1e-8 {
            return v / n;
        }
    }
}

/// Random bump in `region` with C¹ size `min(magnitude, region.cap)`.
///
/// Magnitude zero gives an inert bump.
pub fn random_perturbation(region: &PerturbationRegion, magnitude: f64, seed: u64) -> Result<BumpPerturbation> {
    if !(magnitude >= 0.0 && magnitude.is_finite()) {
        return Err(Error::InvalidConfig(format!("perturbation magnitude {magnitude}")));
    }
    let d = region.anchor.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = region.radius;
    let offset = match region.placement {
        Placement::Overlap => rng.random_range(0.3 * r..=0.6 * r),
        Placement::Away => rng.random_range(r + 0.1..=r + 0.2),
    };
    let center = region.anchor.translated((random_unit(d, &mut rng) * offset).as_slice());
    let direction = random_unit(d, &mut rng).as_slice().to_vec();
    if magnitude == 0.0 {
        return BumpPerturbation::new(center, r, direction, 0.0);
    }
    BumpPerturbation::with_c1_bound(center, r, direction, magnitude.min(region.cap))
}

/// Knobs shared by both experiments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentOptions {
    pub placement: Placement,
    pub newton: NewtonOptions,
    pub sweep: SweepOptions,
    /// Run the sweep detector too, where it applies.
    pub cross_check: bool,
    /// Grid per axis of the folding certificate in the fold experiment.
    pub certificate_grid: usize,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        Self {
            placement: Placement::Overlap,
            newton: NewtonOptions::default(),
            sweep: SweepOptions::default(),
            cross_check: true,
            certificate_grid: 5,
        }
    }
}

/// One CSV row: one trial seen by one detector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub magnitude: f64,
    pub trial: usize,
    pub seed: u64,
    pub detector: Detector,
    pub success: bool,
    pub residual: Option<f64>,
    /// `‖t_star(g) − t_star(f)‖` in fold parameters.
    pub displacement: Option<f64>,
    /// Ambient distance between the two detectors' points, when both converged.
    pub detector_agreement: Option<f64>,
    /// Folding certificate outcome (fold experiment only).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub certified: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PersistenceStats {
    pub magnitude: f64,
    pub trials: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub max_residual: f64,
    /// One entry per successful Newton trial, in trial order.
    pub displacement: Vec<f64>,
    pub mean_displacement: f64,
    pub max_displacement: f64,
    /// Least-squares slope through the origin over the whole ladder.
    pub displacement_slope: Option<f64>,
    pub sweep_successes: Option<usize>,
    pub max_agreement: Option<f64>,
    /// Trials whose fold failed its certificate (fold experiment only).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub certificate_failures: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PersistenceSummary {
    pub experiment: String,
    pub placement: Placement,
    pub reference_t_star: Vec<f64>,
    pub stats: Vec<PersistenceStats>,
    pub displacement_slope: Option<f64>,
    /// Success rate never rises with magnitude.
    pub monotone: bool,
    /// Mean displacement strictly decreases down the ladder.
    pub displacement_decreasing: bool,
    /// Successful trials with displacement above `3 · slope · magnitude`.
    pub envelope_violations: usize,
    /// Detector failures on folds that passed their certificate.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub uncertified_failures: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub records: Vec<TrialRecord>,
    pub summary: PersistenceSummary,
}

/// Seed of trial `trial` at magnitude `magnitude`.
pub fn trial_seed(seed: u64, magnitude: f64, trial: usize) -> u64 {
    mix_seed(mix_seed(seed, magnitude.to_bits()), trial as u64)
}

fn reference_detection(sys: &ScenarioSystem, opts: &ExperimentOptions) -> Result<(FoldingManifold, TangencyReport)> {
    let fold = sys.fold().ok_or_else(|| Error::InvalidConfig("scenario has no fold".into()))?.clone();
    let base = sys.without_perturbations();
    let report = find_tangency_newton(&base, &fold, &vec![0.0; fold.k()], &opts.newton)?;
    if report.residual_norm >= 1e-10 {
        return Err(Error::NoConvergence { iterations: report.iterations, residual: report.residual_norm });
    }
    Ok((fold, report))
}

fn sweep_applies(sys: &ScenarioSystem, opts: &ExperimentOptions) -> bool {
    opts.cross_check
        && sys.fold().is_some_and(|f| f.kind() == crate::folding::FoldKind::Elliptic && f.c_t() == 1)
        && sys.torus_dim() == 2
}

/// Both detectors on one (system, fold) pair, as CSV rows.
fn run_detectors(
    sys: &ScenarioSystem,
    fold: &FoldingManifold,
    reference: &TangencyReport,
    with_sweep: bool,
    opts: &ExperimentOptions,
    (magnitude, trial, seed): (f64, usize, u64),
    certified: Option<bool>,
) -> Vec<TrialRecord> {
    let newton = find_tangency_newton(sys, fold, &reference.t_star, &opts.newton);
    let sweep = with_sweep
        .then(|| LeafFamily::for_scenario(sys).and_then(|leaves| find_tangency_sweep(sys, fold, &leaves, &opts.sweep)));
    let agreement = match (&newton, &sweep) {
        (Ok(a), Some(Ok(b))) => Some(a.point.distance(&b.point)),
        _ => None,
    };
    let row = |detector, r: &Result<TangencyReport>| {
        let displacement = r
            .as_ref()
            .ok()
            .map(|rep| rep.t_star.iter().zip(&reference.t_star).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt());
        let residual = match r {
            Ok(rep) => Some(rep.residual_norm),
            Err(Error::NoConvergence { residual, .. }) => Some(*residual),
            Err(_) => None,
        };
        TrialRecord {
            magnitude,
            trial,
            seed,
            detector,
            success: r.is_ok(),
            residual,
            displacement,
            detector_agreement: agreement,
            certified,
        }
    };
    let mut rows = vec![row(Detector::Newton, &newton)];
    if let Some(s) = &sweep {
        rows.push(row(Detector::Sweep, s));
    }
    rows
}

/// Trials at a single magnitude (zero allowed); rows keyed by trial index.
pub fn persistence_trials(
    sys: &ScenarioSystem,
    magnitude: f64,
    trials: usize,
    seed: u64,
    opts: &ExperimentOptions,
) -> Result<Vec<TrialRecord>> {
    let (fold, reference) = reference_detection(sys, opts)?;
    let region = PerturbationRegion::around_fold(sys, opts.placement)?;
    let base = sys.without_perturbations();
    let with_sweep = sweep_applies(sys, opts);
    let rows = par_map((0..trials).collect(), |trial| {
        let tseed = trial_seed(seed, magnitude, trial);
        let bump = random_perturbation(&region, magnitude, tseed)?;
        let g = base.with_perturbation(bump)?;
        Ok(run_detectors(&g, &fold, &reference, with_sweep, opts, (magnitude, trial, tseed), None))
    });
    Ok(rows.into_iter().collect::<Result<Vec<_>>>()?.into_iter().flatten().collect())
}

/// Perturb the system with seeded bumps and rerun detection down the ladder.
pub fn persistence_experiment(
    sys: &ScenarioSystem,
    ladder: &MagnitudeLadder,
    trials: usize,
    seed: u64,
    opts: &ExperimentOptions,
) -> Result<ExperimentOutput> {
    let (_, reference) = reference_detection(sys, opts)?;
    let mut records = Vec::new();
    for &m in ladder.magnitudes() {
        records.extend(persistence_trials(sys, m, trials, seed, opts)?);
    }
    let summary = summarize("system", opts.placement, &reference.t_star, ladder.magnitudes(), trials, &records);
    Ok(ExperimentOutput { records, summary })
}

/// Perturb the fold embedding instead of the system.
///
/// Each trial records whether the perturbed fold still passes its folding
/// certificate, so that detector failures can be checked against it.
pub fn fold_perturbation_experiment(
    sys: &ScenarioSystem,
    ladder: &MagnitudeLadder,
    trials: usize,
    seed: u64,
    opts: &ExperimentOptions,
) -> Result<ExperimentOutput> {
    let (fold, reference) = reference_detection(sys, opts)?;
    let base = sys.without_perturbations();
    let cone = sys.cone()?;
    let with_sweep = sweep_applies(sys, opts);
    let mut records = Vec::new();
    for &m in ladder.magnitudes() {
        let rows = par_map((0..trials).collect(), |trial| {
            let tseed = trial_seed(seed, m, trial);
            let p = FoldPerturbation::random(fold.k(), fold.dim(), m, tseed);
            let g_fold = fold.with_perturbation(p)?;
            let certified = verify_folding(&g_fold, &cone, opts.certificate_grid).pass;
            let g = base.clone().with_fold(g_fold.clone())?;
            Ok(run_detectors(&g, &g_fold, &reference, with_sweep, opts, (m, trial, tseed), Some(certified)))
        });
        records.extend(rows.into_iter().collect::<Result<Vec<_>>>()?.into_iter().flatten());
    }
    let mut summary = summarize("fold", opts.placement, &reference.t_star, ladder.magnitudes(), trials, &records);
    let newton = records.iter().filter(|r| r.detector == Detector::Newton);
    summary.uncertified_failures = Some(newton.filter(|r| !r.success && r.certified == Some(true)).count());
    Ok(ExperimentOutput { records, summary })
}

/// Least-squares slope through the origin of `y` against `x`.
pub fn slope_through_origin(points: &[(f64, f64)]) -> Option<f64> {
    let sxx: f64 = points.iter().map(|(x, _)| x * x).sum();
    let sxy: f64 = points.iter().map(|(x, y)| x * y).sum();
    (sxx > 0.0).then(|| sxy / sxx).filter(|s| s.is_finite())
}

/// Aggregate rows into per-magnitude stats; `magnitudes` fixes the order.
pub fn summarize(
    experiment: &str,
    placement: Placement,
    reference: &[f64],
    magnitudes: &[f64],
    trials: usize,
    records: &[TrialRecord],
) -> PersistenceSummary {
    let newton: Vec<&TrialRecord> = records.iter().filter(|r| r.detector == Detector::Newton).collect();
    let points: Vec<(f64, f64)> = newton.iter().filter_map(|r| r.displacement.map(|d| (r.magnitude, d))).collect();
    let slope = slope_through_origin(&points);

    let stats: Vec<PersistenceStats> = magnitudes
        .iter()
        .map(|&m| {
            let here: Vec<&&TrialRecord> = newton.iter().filter(|r| r.magnitude == m).collect();
            let displacement: Vec<f64> = here.iter().filter_map(|r| r.displacement).collect();
            let successes = displacement.len();
            let sweeps: Vec<&TrialRecord> =
                records.iter().filter(|r| r.detector == Detector::Sweep && r.magnitude == m).collect();
            let certs: Vec<bool> = here.iter().filter_map(|r| r.certified).collect();
            PersistenceStats {
                magnitude: m,
                trials,
                successes,
                success_rate: if trials == 0 { 1.0 } else { successes as f64 / trials as f64 },
                max_residual: here.iter().filter(|r| r.success).filter_map(|r| r.residual).fold(0.0, f64::max),
                mean_displacement: if successes == 0 {
                    0.0
                } else {
                    displacement.iter().sum::<f64>() / successes as f64
                },
                max_displacement: displacement.iter().copied().fold(0.0, f64::max),
                displacement,
                displacement_slope: slope,
                sweep_successes: (!sweeps.is_empty()).then(|| sweeps.iter().filter(|r| r.success).count()),
                max_agreement: here.iter().filter_map(|r| r.detector_agreement).reduce(f64::max),
                certificate_failures: (!certs.is_empty()).then(|| certs.iter().filter(|c| !**c).count()),
            }
        })
        .collect();

    let monotone = stats.windows(2).all(|w| w[0].success_rate <= w[1].success_rate);
    let displacement_decreasing = stats.windows(2).all(|w| w[1].mean_displacement < w[0].mean_displacement);
    let envelope_violations = match slope {
        Some(s) => points.iter().filter(|(m, d)| *d > ENVELOPE_FACTOR * s * m).count(),
        None => 0,
    };
    PersistenceSummary {
        experiment: experiment.into(),
        placement,
        reference_t_star: reference.to_vec(),
        stats,
        displacement_slope: slope,
        monotone,
        displacement_decreasing,
        envelope_violations,
        uncertified_failures: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::folding::FoldKind;
    use crate::systems::build_scenario;

    #[test]
    fn ladder_rules() {
        assert!(MagnitudeLadder::new(vec![1e-2, 1e-3]).is_ok());
        assert!(MagnitudeLadder::new(vec![1e-3, 1e-2]).is_err());
        assert!(MagnitudeLadder::new(vec![1e-3, 1e-3]).is_err());
        assert!(MagnitudeLadder::new(vec![1e-3, 0.0]).is_err());
        assert!(MagnitudeLadder::new(vec![]).is_err());
        let l: MagnitudeLadder = "1e-2, 1e-3".parse().unwrap();
        assert_eq!(l.magnitudes(), &[1e-2, 1e-3]);
        assert_eq!(MagnitudeLadder::default().magnitudes(), &DEFAULT_LADDER);
    }

    #[test]
    fn slope_fit() {
        assert_eq!(slope_through_origin(&[(1.0, 2.0), (2.0, 4.0)]), Some(2.0));
        assert_eq!(slope_through_origin(&[]), None);
    }

    #[test]
    fn placement_modes() {
        let sys = build_scenario(1, 2, FoldKind::Elliptic).unwrap();
        let over = PerturbationRegion::around_fold(&sys, Placement::Overlap).unwrap();
        let away = PerturbationRegion { placement: Placement::Away, ..over.clone() };
        assert!(over.cap > 1e-2);
        for seed in 0..50 {
            let b = random_perturbation(&over, 1e-3, seed).unwrap();
            assert!(b.center().distance(&over.anchor) < 0.6 * over.radius + 1e-12);
            let b = random_perturbation(&away, 1e-3, seed).unwrap();
            assert!(b.center().distance(&away.anchor) >= away.radius + 0.1 - 1e-12);
        }
    }
}
