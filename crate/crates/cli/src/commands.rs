use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use tangency_core::cocycle::{verify_cone_invariance, ConeCertificate};
use tangency_core::folding::{verify_folding, FoldKind, FoldingCertificate};
use tangency_core::formats::{from_json_slice, sha256_hex, to_csv_bytes, write_atomic, write_json_atomic, Header};
use tangency_core::robustness::{
    persistence_experiment, ExperimentOptions, MagnitudeLadder, PersistenceSummary, Placement,
};
use tangency_core::systems::{Diffeomorphism, ScenarioConfig, ScenarioDocument, ScenarioSystem, TrappingReport};
use tangency_core::tangency::{
    find_tangency_newton, find_tangency_sweep, LeafFamily, NewtonOptions, SweepOptions, TangencyReport,
};
use tangency_core::Error;

/// Largest number of trapping grid points per verification.
const TRAPPING_BUDGET: usize = 100_000;
/// Agreement distance below which the two detectors count as agreeing.
const AGREEMENT_TOL: f64 = 1e-6;

#[derive(Parser, Debug)]
#[command(name = "tangency", version, about = "Robust heteroclinic tangencies: build, certify, detect, perturb")]
pub struct Cli {
    /// Cap on worker threads.
    #[arg(long, env = "TANGENCY_THREADS", global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Build a scenario and write scenario.json.
    Build(BuildArgs),
    /// Check trapping, cone invariance and folding; write certificates.json.
    Verify(VerifyArgs),
    /// Detect the tangency; write report_<detector>.json.
    Find(FindArgs),
    /// Persistence under random bumps; write robustness.csv and robustness_summary.json.
    Robustness(RobustnessArgs),
}

#[derive(Args, Debug)]
pub struct BuildArgs {
    #[arg(long = "cT")]
    c_t: Option<usize>,
    #[arg(long)]
    s: Option<usize>,
    #[arg(long, value_enum)]
    kind: Option<KindArg>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// JSON file with the same fields; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    scenario: PathBuf,
    #[arg(long)]
    cone_samples: Option<usize>,
    #[arg(long)]
    folding_grid: Option<usize>,
    #[arg(long)]
    trapping_grid: Option<usize>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args, Debug)]
pub struct FindArgs {
    scenario: PathBuf,
    #[arg(long, value_enum)]
    detector: Option<DetectorArg>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args, Debug)]
pub struct RobustnessArgs {
    scenario: PathBuf,
    /// Comma-separated, strictly decreasing magnitudes.
    #[arg(long)]
    ladder: Option<String>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    placement: Option<PlacementArg>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum KindArg {
    Elliptic,
    Saddle,
    Mixed,
}

impl From<KindArg> for FoldKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Elliptic => FoldKind::Elliptic,
            KindArg::Saddle => FoldKind::Saddle,
            KindArg::Mixed => FoldKind::Mixed,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum DetectorArg {
    Newton,
    Sweep,
    Both,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum PlacementArg {
    Overlap,
    Away,
}

impl From<PlacementArg> for Placement {
    fn from(p: PlacementArg) -> Self {
        match p {
            PlacementArg::Overlap => Placement::Overlap,
            PlacementArg::Away => Placement::Away,
        }
    }
}

/// Exit status classes: mathematical failure (1) or usage/config/I-O (2).
#[derive(Debug)]
pub enum Failure {
    Math(anyhow::Error),
    Usage(anyhow::Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidConfig(_)
            | Error::InvalidDimension(_)
            | Error::DimensionMismatch { .. }
            | Error::NoSuchAutomorphism(_)
            | Error::NotElliptic
            | Error::Io(_)
            | Error::Json(_)
            | Error::Csv(_) => Failure::Usage(e.into()),
            _ => Failure::Math(e.into()),
        }
    }
}

fn usage(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Usage(e.into())
}

type CliResult<T> = std::result::Result<T, Failure>;

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Build(a) => build(a),
        Command::Verify(a) => verify(a),
        Command::Find(a) => find(a),
        Command::Robustness(a) => robustness(a),
    }
}

fn read_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> CliResult<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let bytes = std::fs::read(p).with_context(|| format!("reading {}", p.display())).map_err(usage)?;
            from_json_slice(&bytes).with_context(|| format!("parsing {}", p.display())).map_err(usage)
        }
    }
}

/// Parsed scenario plus the digest of its file bytes.
struct Input {
    path: PathBuf,
    system: ScenarioSystem,
    digest: String,
}

fn load_scenario(path: &Path) -> CliResult<Input> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display())).map_err(usage)?;
    let doc: ScenarioDocument =
        from_json_slice(&bytes).with_context(|| format!("parsing {}", path.display())).map_err(usage)?;
    let system = ScenarioSystem::from_document(&doc)
        .with_context(|| format!("invalid scenario {}", path.display()))
        .map_err(usage)?;
    Ok(Input { path: path.to_path_buf(), system, digest: sha256_hex(&bytes) })
}

/// Output path inside `out`, refusing to overwrite the input file.
fn output(out: &Path, name: &str, input: Option<&Path>) -> CliResult<PathBuf> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display())).map_err(usage)?;
    let path = out.join(name);
    if let (Some(input), Ok(target)) = (input, path.canonicalize()) {
        if input.canonicalize().is_ok_and(|i| i == target) {
            return Err(usage(anyhow!("refusing to overwrite input {}", input.display())));
        }
    }
    Ok(path)
}

/// What the config hash of a derived artifact covers.
#[derive(Serialize)]
struct Provenance<'a, T: Serialize> {
    command: &'static str,
    scenario_sha256: &'a str,
    settings: &'a T,
}

fn header<T: Serialize>(command: &'static str, input: &Input, seed: u64, settings: &T) -> CliResult<Header> {
    Ok(Header::new(seed, &Provenance { command, scenario_sha256: &input.digest, settings })?)
}

#[derive(Serialize, Deserialize, Default, Debug)]
#[serde(deny_unknown_fields)]
struct BuildFile {
    #[serde(rename = "c_T")]
    c_t: Option<usize>,
    s: Option<usize>,
    kind: Option<FoldKind>,
    alpha: Option<f64>,
    seed: Option<u64>,
}

fn build(a: BuildArgs) -> CliResult<()> {
    let file: BuildFile = read_config(a.config.as_deref())?;
    let c_t = a.c_t.or(file.c_t).ok_or_else(|| usage(anyhow!("--cT is required")))?;
    let s = a.s.or(file.s).ok_or_else(|| usage(anyhow!("--s is required")))?;
    let kind =
        a.kind.map(FoldKind::from).or(file.kind).unwrap_or(if c_t == 1 { FoldKind::Elliptic } else { FoldKind::Mixed });
    let config =
        ScenarioConfig { c_t, s, kind, alpha: a.alpha.or(file.alpha), seed: a.seed.or(file.seed).unwrap_or(0) };
    config.validate()?;
    let sys = config.build()?;
    let doc = sys.to_document(Some(Header::new(config.seed, &config)?));
    let path = output(&a.out, "scenario.json", None)?;
    write_json_atomic(&path, &doc)?;
    println!(
        "d={} n={} k={} s={} c_T={} alpha={} -> {}",
        config.d(),
        config.n(),
        config.k(),
        s,
        c_t,
        sys.alpha(),
        path.display()
    );
    Ok(())
}

#[derive(Serialize, Deserialize, Debug)]
#[serde(deny_unknown_fields, default)]
struct VerifySettings {
    cone_samples: usize,
    folding_grid: usize,
    /// Defaults to the finest grid within the point budget.
    trapping_grid: Option<usize>,
}

impl Default for VerifySettings {
    fn default() -> Self {
        Self { cone_samples: 10_000, folding_grid: 21, trapping_grid: None }
    }
}

#[derive(Serialize, Debug)]
struct Certificates {
    header: Header,
    trapping: TrappingReport,
    cone: ConeCertificate,
    folding: Option<FoldingCertificate>,
    pass: bool,
}

fn default_trapping_grid(d: usize) -> usize {
    (2..=11).rev().find(|g: &usize| g.checked_pow(d as u32).is_some_and(|p| p <= TRAPPING_BUDGET)).unwrap_or(2)
}

fn verify(a: VerifyArgs) -> CliResult<()> {
    let mut settings: VerifySettings = read_config(a.config.as_deref())?;
    settings.cone_samples = a.cone_samples.unwrap_or(settings.cone_samples);
    settings.folding_grid = a.folding_grid.unwrap_or(settings.folding_grid);
    settings.trapping_grid = a.trapping_grid.or(settings.trapping_grid);
    if settings.cone_samples == 0 || settings.folding_grid < 2 || settings.trapping_grid.is_some_and(|g| g < 2) {
        return Err(usage(anyhow!("sample counts and grids must be at least 2")));
    }
    let input = load_scenario(&a.scenario)?;
    let sys = &input.system;
    let path = output(&a.out, "certificates.json", Some(&input.path))?;

    let trapping = sys.verify_trapping(settings.trapping_grid.unwrap_or_else(|| default_trapping_grid(sys.dim())));
    let cone_field = sys.cone()?;
    let cone = verify_cone_invariance(sys, &cone_field, settings.cone_samples, sys.seed());
    let folding = sys.fold().map(|f| verify_folding(f, &cone_field, settings.folding_grid));
    let mut failed = Vec::new();
    if !trapping.pass {
        failed.push("trapping");
    }
    if !cone.pass {
        failed.push("cone");
    }
    if folding.as_ref().is_some_and(|f| !f.pass) {
        failed.push("folding");
    }
    let header = header("verify", &input, sys.seed(), &settings)?;
    let certs = Certificates { header, trapping, cone, folding, pass: failed.is_empty() };
    write_json_atomic(&path, &certs)?;
    println!(
        "trapping {} | cone {} (max ratio {:.3e}) | folding {} -> {}",
        verdict(certs.trapping.pass),
        verdict(certs.cone.pass),
        certs.cone.max_ratio,
        certs.folding.as_ref().map_or("absent", |f| verdict(f.pass)),
        path.display()
    );
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Math(anyhow!("certificate failed: {}", failed.join(", "))))
    }
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "pass"
    } else {
        "FAIL"
    }
}

#[derive(Serialize, Deserialize, Debug)]
#[serde(deny_unknown_fields, default)]
struct FindSettings {
    detector: DetectorArg,
    newton: NewtonOptions,
    sweep: SweepOptions,
}

impl Default for FindSettings {
    fn default() -> Self {
        Self { detector: DetectorArg::Both, newton: NewtonOptions::default(), sweep: SweepOptions::default() }
    }
}

#[derive(Serialize)]
struct ReportFile<'a> {
    header: &'a Header,
    #[serde(flatten)]
    report: &'a TangencyReport,
}

#[derive(Serialize)]
struct Agreement<'a> {
    header: &'a Header,
    distance: f64,
    tolerance: f64,
    newton_t_star: &'a [f64],
    sweep_t_star: &'a [f64],
    leaf_parameter: Option<f64>,
    pass: bool,
}

fn find(a: FindArgs) -> CliResult<()> {
    let mut settings: FindSettings = read_config(a.config.as_deref())?;
    settings.detector = a.detector.unwrap_or(settings.detector);
    let input = load_scenario(&a.scenario)?;
    let sys = &input.system;
    let fold = sys.fold().ok_or_else(|| usage(anyhow!("scenario has no fold")))?;
    let header = header("find", &input, sys.seed(), &settings)?;
    let (run_newton, run_sweep) = match settings.detector {
        DetectorArg::Newton => (true, false),
        DetectorArg::Sweep => (false, true),
        DetectorArg::Both => (true, true),
    };
    let leaves = if run_sweep {
        // Guard before any work so an inapplicable sweep is a usage error.
        if fold.kind() != FoldKind::Elliptic || fold.c_t() != 1 {
            return Err(Error::NotElliptic.into());
        }
        Some(LeafFamily::for_scenario(sys)?)
    } else {
        None
    };

    let newton = if run_newton {
        let r = find_tangency_newton(sys, fold, &vec![0.0; fold.k()], &settings.newton)?;
        let path = output(&a.out, "report_newton.json", Some(&input.path))?;
        write_json_atomic(&path, &ReportFile { header: &header, report: &r })?;
        println!(
            "newton: t* = {:?}, residual {:.3e}, class {} -> {}",
            r.t_star,
            r.residual_norm,
            r.class,
            path.display()
        );
        Some(r)
    } else {
        None
    };
    let sweep = match &leaves {
        Some(l) => {
            let r = find_tangency_sweep(sys, fold, l, &settings.sweep)?;
            let path = output(&a.out, "report_sweep.json", Some(&input.path))?;
            write_json_atomic(&path, &ReportFile { header: &header, report: &r })?;
            println!(
                "sweep: t* = {:?}, leaf {:?}, class {} -> {}",
                r.t_star,
                r.leaf_parameter,
                r.class,
                path.display()
            );
            Some(r)
        }
        None => None,
    };
    if let (Some(n), Some(s)) = (&newton, &sweep) {
        let distance = n.point.distance(&s.point);
        let record = Agreement {
            header: &header,
            distance,
            tolerance: AGREEMENT_TOL,
            newton_t_star: &n.t_star,
            sweep_t_star: &s.t_star,
            leaf_parameter: s.leaf_parameter,
            pass: distance < AGREEMENT_TOL,
        };
        let path = output(&a.out, "agreement.json", Some(&input.path))?;
        write_json_atomic(&path, &record)?;
        println!("agreement: distance {distance:.3e} -> {}", path.display());
        if !record.pass {
            return Err(Failure::Math(anyhow!("detectors disagree by {distance:.3e}")));
        }
    }
    Ok(())
}

#[derive(Serialize, Deserialize, Debug)]
#[serde(deny_unknown_fields, default)]
struct RobustnessSettings {
    ladder: MagnitudeLadder,
    trials: usize,
    /// Defaults to the scenario seed.
    seed: Option<u64>,
    experiment: ExperimentOptions,
}

impl Default for RobustnessSettings {
    fn default() -> Self {
        Self { ladder: MagnitudeLadder::default(), trials: 100, seed: None, experiment: ExperimentOptions::default() }
    }
}

#[derive(Serialize)]
struct SummaryFile<'a> {
    header: &'a Header,
    ladder: &'a MagnitudeLadder,
    trials: usize,
    /// Digest of the CSV written next to this file.
    csv_sha256: String,
    #[serde(flatten)]
    summary: &'a PersistenceSummary,
}

fn robustness(a: RobustnessArgs) -> CliResult<()> {
    let mut settings: RobustnessSettings = read_config(a.config.as_deref())?;
    if let Some(l) = &a.ladder {
        settings.ladder = l.parse()?;
    }
    settings.trials = a.trials.unwrap_or(settings.trials);
    settings.seed = a.seed.or(settings.seed);
    if let Some(p) = a.placement {
        settings.experiment.placement = p.into();
    }
    let input = load_scenario(&a.scenario)?;
    let sys = &input.system;
    if sys.fold().is_none() {
        return Err(usage(anyhow!("scenario has no fold")));
    }
    let seed = settings.seed.unwrap_or(sys.seed());
    settings.seed = Some(seed);
    let csv_path = output(&a.out, "robustness.csv", Some(&input.path))?;
    let json_path = output(&a.out, "robustness_summary.json", Some(&input.path))?;

    let out = persistence_experiment(sys, &settings.ladder, settings.trials, seed, &settings.experiment)?;
    let header = header("robustness", &input, seed, &settings)?;
    let csv = to_csv_bytes(&out.records)?;
    write_atomic(&csv_path, &csv)?;
    let file = SummaryFile {
        header: &header,
        ladder: &settings.ladder,
        trials: settings.trials,
        csv_sha256: sha256_hex(&csv),
        summary: &out.summary,
    };
    write_json_atomic(&json_path, &file)?;
    for st in &out.summary.stats {
        println!(
            "magnitude {:.1e}: {}/{} converged, mean displacement {:.3e}",
            st.magnitude, st.successes, st.trials, st.mean_displacement
        );
    }
    println!(
        "slope {:?}, monotone {}, envelope violations {} -> {}, {}",
        out.summary.displacement_slope,
        out.summary.monotone,
        out.summary.envelope_violations,
        csv_path.display(),
        json_path.display()
    );
    Ok(())
}
