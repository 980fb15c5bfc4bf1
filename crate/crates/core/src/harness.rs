//! Interval evaluation: martingale-posterior runs from a source, the
//! bootstrap baseline, the analytic spline baseline and coverage studies.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{optimal_ci, SplineFit, SplineModelSpec};
use crate::dataset::{ColumnScale, Dataset};
use crate::engine::{equal_tailed, run_posterior, EngineConfig, Estimator, FunctionalPosterior, PosteriorResult};
use crate::error::{Error, Result};
use crate::grid::{empirical_from_samples, FunctionalSpec, Functionals, GridDistribution};
use crate::normal::{phi, CopulaBandwidth};
use crate::rng::{derive_seed, stream_rng};
use crate::schedule::ScheduleSpec;
use crate::simgen::{funnel_quantile, gen_gamma_iid, Generator, Simulated, Truth};
use crate::sources::{PpdSource, SourceSpec};
use crate::tuner::{tune_rho, TuneResult, TunerOptions};

/// Bandwidth: fixed, or tuned per predictive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RhoSetting {
    Auto,
    Fixed(CopulaBandwidth),
}

impl std::str::FromStr for RhoSetting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(RhoSetting::Auto);
        }
        let r: f64 =
            s.parse().map_err(|_| Error::parse(format!("rho must be `auto` or a number in (0, 1), got `{s}`")))?;
        Ok(RhoSetting::Fixed(CopulaBandwidth::new(r)?))
    }
}

impl std::fmt::Display for RhoSetting {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RhoSetting::Auto => f.write_str("auto"),
            RhoSetting::Fixed(r) => write!(f, "{}", r.get()),
        }
    }
}

impl Serialize for RhoSetting {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            RhoSetting::Auto => s.serialize_str("auto"),
            RhoSetting::Fixed(r) => s.serialize_f64(r.get()),
        }
    }
}

impl<'de> Deserialize<'de> for RhoSetting {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Str(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(r) => CopulaBandwidth::new(r).map(RhoSetting::Fixed).map_err(serde::de::Error::custom),
            Repr::Str(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Martingale-posterior settings shared by the CLI and coverage runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MpSettings {
    pub chains: usize,
    pub steps: usize,
    /// `default | type1 | type2 | custom:C=<r>,beta=<r>`; type1/type2 use the
    /// data's feature count.
    pub schedule: String,
    pub rho: RhoSetting,
    pub estimator: Estimator,
    pub tuner: TunerOptions,
}

impl Default for MpSettings {
    fn default() -> Self {
        MpSettings {
            chains: crate::engine::DEFAULT_CHAINS,
            steps: crate::engine::DEFAULT_STEPS,
            schedule: "default".into(),
            rho: RhoSetting::Auto,
            estimator: Estimator::Empirical,
            tuner: TunerOptions::default(),
        }
    }
}

/// A credible or confidence interval in original label units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub functional: FunctionalSpec,
    pub lower: f64,
    pub upper: f64,
    /// Point estimate (posterior mean or functional of the predictive).
    pub center: f64,
}

impl Interval {
    pub fn length(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }
}

#[derive(Debug, Clone)]
pub struct MpOutcome {
    /// Posterior in original label units.
    pub posterior: PosteriorResult,
    /// Intervals in original label units, one per requested functional.
    pub intervals: Vec<Interval>,
    pub tune: Option<TuneResult>,
}

/// Run the martingale posterior from `p0` (standardized units).
///
/// `functionals` are in original units; `scale` maps between the two.
#[allow(clippy::too_many_arguments)]
pub fn mp_from_ppd(
    p0: &GridDistribution,
    n_train: usize,
    dim: usize,
    functionals: &[FunctionalSpec],
    scale: ColumnScale,
    settings: &MpSettings,
    level: f64,
    seed: u64,
) -> Result<MpOutcome> {
    let schedule = ScheduleSpec::parse_with_dim(&settings.schedule, dim.max(1))?;
    let (rho, tune) = match settings.rho {
        RhoSetting::Fixed(r) => (r, None),
        RhoSetting::Auto => {
            let t = tune_rho(p0, &schedule, &settings.tuner, derive_seed(seed, 0x7475_6e65))?;
            (t.rho, Some(t))
        }
    };
    let std_f: Vec<FunctionalSpec> = functionals.iter().map(|&f| scale.functional_forward(f)).collect();
    let mut cfg = EngineConfig::new(rho, n_train, std_f);
    cfg.chains = settings.chains;
    cfg.steps = settings.steps;
    cfg.schedule = schedule;
    cfg.estimator = settings.estimator;
    cfg.level = level;
    cfg.seed = seed;
    let posterior = posterior_in_units(run_posterior(p0, &cfg)?, functionals, scale)?;
    let intervals = posterior
        .functionals
        .iter()
        .map(|post| Interval { functional: post.functional, lower: post.lower, upper: post.upper, center: post.mean })
        .collect();
    Ok(MpOutcome { posterior, intervals, tune })
}

/// Map a posterior computed in standardized units back to original units.
///
/// Every functional transform is increasing, so sorted draws stay sorted and
/// the equal-tailed interval maps endpoint to endpoint.
pub fn posterior_in_units(
    mut post: PosteriorResult,
    functionals: &[FunctionalSpec],
    scale: ColumnScale,
) -> Result<PosteriorResult> {
    if scale == ColumnScale::IDENTITY {
        return Ok(post);
    }
    post.functionals = post
        .functionals
        .into_iter()
        .zip(functionals)
        .map(|(fp, &f)| {
            let draws = fp.draws.iter().map(|&v| scale.value_inverse(f, v)).collect();
            FunctionalPosterior::from_draws(f, draws, fp.level)
        })
        .collect::<Result<_>>()?;
    post.config.functionals = functionals.to_vec();
    Ok(post)
}

/// Martingale posterior at raw features `x` from a fitted source.
pub fn mp_interval(
    source: &dyn PpdSource,
    data: &Dataset,
    x: &[f64],
    functionals: &[FunctionalSpec],
    settings: &MpSettings,
    level: f64,
    seed: u64,
) -> Result<MpOutcome> {
    let p0 = source.ppd_at(x)?;
    mp_from_ppd(&p0, data.n(), data.d(), functionals, source.y_scale(), settings, level, seed)
}

/// Functional of a predictive, in original units.
fn point_estimate(p: &GridDistribution, f: FunctionalSpec, scale: ColumnScale) -> Result<f64> {
    Ok(scale.value_inverse(f, p.evaluate(&scale.functional_forward(f))?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapOutcome {
    /// `intervals[probe][functional]`.
    pub intervals: Vec<Vec<Interval>>,
    pub resamples: usize,
}

/// Bootstrap intervals at several probes: refit on `resamples` resamples of
/// `data` drawn with replacement, evaluate each functional at each probe and
/// take equal-tailed empirical quantiles of the estimates.
pub fn bootstrap_intervals(
    source: &dyn PpdSource,
    data: &Dataset,
    xs: &[Vec<f64>],
    functionals: &[FunctionalSpec],
    resamples: usize,
    level: f64,
    seed: u64,
) -> Result<BootstrapOutcome> {
    if resamples == 0 {
        return Err(Error::domain("bootstrap needs at least one resample"));
    }
    let n = data.n();
    // estimates[r][probe][functional]
    let estimates: Vec<Vec<Vec<f64>>> = (0..resamples)
        .into_par_iter()
        .map(|r| -> Result<Vec<Vec<f64>>> {
            let mut rng = stream_rng(seed, r as u64);
            let idx: Vec<usize> = (0..n).map(|_| rand::Rng::random_range(&mut rng, 0..n)).collect();
            let fitted = source.refit_on(&data.subset(&idx)?, r)?;
            let scale = fitted.y_scale();
            xs.iter()
                .map(|x| {
                    let p = fitted.ppd_at(x)?;
                    functionals.iter().map(|&f| point_estimate(&p, f, scale)).collect()
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let intervals = (0..xs.len())
        .map(|pi| {
            functionals
                .iter()
                .enumerate()
                .map(|(fi, &f)| {
                    let mut e: Vec<f64> = estimates.iter().map(|r| r[pi][fi]).collect();
                    e.sort_by(f64::total_cmp);
                    let (lower, upper) = equal_tailed(&e, level);
                    Interval { functional: f, lower, upper, center: e.iter().sum::<f64>() / e.len() as f64 }
                })
                .collect()
        })
        .collect();
    Ok(BootstrapOutcome { intervals, resamples })
}

/// Single-probe, single-functional bootstrap interval.
pub fn bootstrap_interval(
    source: &dyn PpdSource,
    data: &Dataset,
    x: &[f64],
    functional: FunctionalSpec,
    resamples: usize,
    level: f64,
    seed: u64,
) -> Result<Interval> {
    let out = bootstrap_intervals(source, data, &[x.to_vec()], &[functional], resamples, level, seed)?;
    Ok(out.intervals[0][0])
}

/// Ground-truth value of a functional at raw features `x`.
///
/// Closed form where the generator allows it, otherwise a fixed-seed Monte
/// Carlo estimate from `10^6` draws.
pub fn quantile_truth(truth: &Truth, x: &[f64], level: f64) -> Result<f64> {
    functional_truth(truth, x, FunctionalSpec::quantile(level)?)
}

pub fn functional_truth(truth: &Truth, x: &[f64], f: FunctionalSpec) -> Result<f64> {
    match truth {
        Truth::Funnel => {
            let x = x[0];
            let (m, sd) = ((3.0 * x).sin(), x);
            Ok(match f {
                FunctionalSpec::Mean => m,
                FunctionalSpec::Variance => sd * sd,
                FunctionalSpec::Quantile(l) => funnel_quantile(x, l)?,
                FunctionalSpec::CdfAt(y) => {
                    if sd > 0.0 {
                        phi((y - m) / sd)
                    } else if y >= m {
                        1.0
                    } else {
                        0.0
                    }
                }
            })
        }
        Truth::Spline(s) => {
            let m = s.mean_at(x);
            let sd = s.sigma2.sqrt();
            Ok(match f {
                FunctionalSpec::Mean => m,
                FunctionalSpec::Variance => s.sigma2,
                FunctionalSpec::Quantile(l) => m + sd * crate::normal::std_normal_quantile(l)?,
                FunctionalSpec::CdfAt(y) => phi((y - m) / sd),
            })
        }
        Truth::Diffusion(s) => match f {
            FunctionalSpec::Quantile(l) => s.quantile(x[0], l),
            FunctionalSpec::CdfAt(y) => Ok(s.cdf(x[0], y)),
            _ => monte_carlo_truth(|u| s.quantile(x[0], u), f),
        },
        Truth::Gamma { shape, scale } => match f {
            FunctionalSpec::Mean => Ok(shape * scale),
            FunctionalSpec::Variance => Ok(shape * scale * scale),
            _ => {
                let draws = gen_gamma_iid(1_000_000, *shape, *scale, 0x7472_7574)?;
                empirical_from_samples(&draws)?.evaluate(&f)
            }
        },
    }
}

fn monte_carlo_truth(q: impl Fn(f64) -> Result<f64>, f: FunctionalSpec) -> Result<f64> {
    // quantile-function quadrature on a midpoint lattice
    let m = 20_000;
    let ys: Vec<f64> = (0..m).map(|i| q((i as f64 + 0.5) / m as f64)).collect::<Result<_>>()?;
    empirical_from_samples(&ys)?.evaluate(&f)
}

/// What a coverage study evaluates on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSpec {
    Generator(Generator),
    /// A labelled CSV split into training rows and a holdout used for truth.
    Csv {
        path: PathBuf,
        #[serde(default = "default_knn")]
        truth_k: usize,
    },
}

fn default_knn() -> usize {
    50
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Mp,
    Bootstrap,
    Optimal,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Mp => "mp",
            Method::Bootstrap => "bootstrap",
            Method::Optimal => "optimal",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BootstrapSettings {
    pub resamples: usize,
    /// Shrink the resample count until the bootstrap takes no longer than
    /// the martingale-posterior run of the same replication.
    pub equal_time: bool,
}

impl Default for BootstrapSettings {
    fn default() -> Self {
        BootstrapSettings { resamples: 20, equal_time: false }
    }
}

/// Coverage study configuration, as read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageConfig {
    pub methods: Vec<Method>,
    pub data: DataSpec,
    /// Training rows per replication.
    pub n: usize,
    pub replications: usize,
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default = "default_functionals")]
    pub functionals: Vec<FunctionalSpec>,
    /// Raw feature vectors to evaluate at; chosen per data kind when absent.
    #[serde(default)]
    pub probes: Option<Vec<Vec<f64>>>,
    /// Cap on the number of holdout rows used as probes for CSV data.
    #[serde(default)]
    pub max_probes: Option<usize>,
    #[serde(default = "default_source")]
    pub source: String,
    #[serde(default)]
    pub mp: MpSettings,
    #[serde(default)]
    pub bootstrap: BootstrapSettings,
    #[serde(default)]
    pub seed: u64,
    /// Feature index whose additive component the optimal baseline targets.
    #[serde(default)]
    pub component: usize,
}

fn default_level() -> f64 {
    0.9
}
fn default_functionals() -> Vec<FunctionalSpec> {
    vec![FunctionalSpec::Mean]
}
fn default_source() -> String {
    "gaussian".into()
}

impl CoverageConfig {
    pub fn new(methods: Vec<Method>, data: DataSpec, n: usize, replications: usize) -> Self {
        CoverageConfig {
            methods,
            data,
            n,
            replications,
            level: default_level(),
            functionals: default_functionals(),
            probes: None,
            max_probes: None,
            source: default_source(),
            mp: MpSettings::default(),
            bootstrap: BootstrapSettings::default(),
            seed: 0,
            component: 0,
        }
    }
}

/// One aggregated cell of a coverage report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub method: String,
    pub dataset: String,
    /// Probe label, or `aggregate` for the average over probes.
    pub x: String,
    pub functional: String,
    pub level: f64,
    pub coverage: f64,
    pub mean_length: f64,
    pub miscoverage: f64,
    /// Mean wall time per replication in seconds.
    pub wall_time: f64,
    pub cells: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub replications: usize,
    pub rows: Vec<CoverageRow>,
    /// Cells that failed, with the error.
    pub failures: Vec<String>,
}

impl CoverageReport {
    pub const CSV_HEADER: &'static str =
        "method,dataset,x,functional,level,coverage,mean_length,miscoverage,wall_time,cells";

    pub fn to_csv(&self) -> String {
        let mut s = format!("{}\n", Self::CSV_HEADER);
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},\"{}\",{},{},{},{},{},{},{}\n",
                r.method,
                r.dataset,
                r.x,
                r.functional,
                r.level,
                r.coverage,
                r.mean_length,
                r.miscoverage,
                r.wall_time,
                r.cells
            ));
        }
        s
    }

    pub fn aggregate(&self, method: Method, functional: &FunctionalSpec) -> Option<&CoverageRow> {
        let (m, f) = (method.to_string(), functional.to_string());
        self.rows.iter().find(|r| r.method == m && r.functional == f && r.x == "aggregate")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// One scored interval.
#[derive(Debug, Clone, Copy)]
struct Cell {
    method: Method,
    probe: usize,
    functional: usize,
    covered: bool,
    length: f64,
}

struct Replicate {
    data: Dataset,
    truth: TruthKind,
}

enum TruthKind {
    Generated(Truth),
    Holdout { holdout: Dataset, k: usize },
}

impl TruthKind {
    fn value(&self, x: &[f64], f: FunctionalSpec) -> Result<f64> {
        match self {
            TruthKind::Generated(t) => functional_truth(t, x, f),
            TruthKind::Holdout { holdout, k } => knn_truth(holdout, x, f, *k),
        }
    }
}

/// Functional of the `k` holdout labels nearest to `x` in standardized
/// features.
pub fn knn_truth(holdout: &Dataset, x: &[f64], f: FunctionalSpec, k: usize) -> Result<f64> {
    let xs = holdout.scale().x_forward(x);
    let mut d: Vec<(f64, usize)> = holdout
        .x_std()
        .iter()
        .enumerate()
        .map(|(i, r)| (r.iter().zip(&xs).map(|(a, b)| (a - b) * (a - b)).sum(), i))
        .collect();
    d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let ys: Vec<f64> = d.iter().take(k.max(1)).map(|&(_, i)| holdout.y()[i]).collect();
    empirical_from_samples(&ys)?.evaluate(&f)
}

fn default_probes(data: &DataSpec, d: usize) -> Vec<Vec<f64>> {
    let lin = |lo: f64, hi: f64| (0..10).map(move |i| lo + (hi - lo) * i as f64 / 9.0);
    match data {
        DataSpec::Generator(Generator::Spline { features, .. }) => lin(-2.5, 2.5)
            .map(|v| {
                let mut x = vec![0.0; *features];
                x[0] = v;
                x
            })
            .collect(),
        DataSpec::Generator(Generator::Funnel) => lin(0.05, 0.95).map(|v| vec![v]).collect(),
        DataSpec::Generator(Generator::Diffusion) => lin(-2.4, 2.4).map(|v| vec![v]).collect(),
        DataSpec::Generator(Generator::Gamma { .. }) => vec![vec![0.0]],
        DataSpec::Csv { .. } => vec![vec![0.0; d]],
    }
}

fn dataset_label(data: &DataSpec) -> String {
    match data {
        DataSpec::Generator(Generator::Spline { signal, .. }) => format!("spline_phi{signal}"),
        DataSpec::Generator(Generator::Funnel) => "funnel".into(),
        DataSpec::Generator(Generator::Diffusion) => "diffusion".into(),
        DataSpec::Generator(Generator::Gamma { .. }) => "gamma".into(),
        DataSpec::Csv { path, .. } => {
            path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "csv".into())
        }
    }
}

fn probe_label(x: &[f64]) -> String {
    let parts: Vec<String> = x.iter().take(3).map(|v| format!("{v:.4}")).collect();
    if x.len() > 3 {
        format!("{}, ...", parts.join(", "))
    } else {
        parts.join(", ")
    }
}

/// Draw replication `r`: a generated dataset, or a random split of the CSV.
fn replicate(cfg: &CoverageConfig, csv: Option<&Dataset>, r: usize) -> Result<Replicate> {
    let seed = derive_seed(cfg.seed, r as u64);
    match (&cfg.data, csv) {
        (DataSpec::Generator(g), _) => {
            let Simulated { data, truth } = g.generate(cfg.n, seed)?;
            Ok(Replicate { data, truth: TruthKind::Generated(truth) })
        }
        (DataSpec::Csv { truth_k, .. }, Some(full)) => {
            if full.n() < cfg.n + 2 {
                return Err(Error::domain(format!(
                    "CSV has {} rows; need more than n = {} for a holdout",
                    full.n(),
                    cfg.n
                )));
            }
            let mut idx: Vec<usize> = (0..full.n()).collect();
            rand::seq::SliceRandom::shuffle(idx.as_mut_slice(), &mut stream_rng(seed, 0));
            let train = full.subset(&idx[..cfg.n])?.restandardized();
            let holdout = full.subset(&idx[cfg.n..])?.restandardized();
            Ok(Replicate { data: train, truth: TruthKind::Holdout { holdout, k: *truth_k } })
        }
        (DataSpec::Csv { .. }, None) => unreachable!("csv loaded before replication"),
    }
}

/// Run a coverage study.
///
/// Failed cells are recorded in the report and skipped; the study continues.
pub fn coverage_run(cfg: &CoverageConfig) -> Result<CoverageReport> {
    if cfg.replications == 0 {
        return Err(Error::domain("coverage study needs at least one replication"));
    }
    if cfg.methods.is_empty() {
        return Err(Error::domain("coverage study needs at least one method"));
    }
    if cfg.methods.contains(&Method::Optimal) && !matches!(cfg.data, DataSpec::Generator(Generator::Spline { .. })) {
        return Err(Error::domain("the optimal baseline is defined for spline data only"));
    }
    let source_spec: SourceSpec = cfg.source.parse()?;
    let csv = match &cfg.data {
        DataSpec::Csv { path, .. } => Some(Dataset::read_csv(path)?),
        _ => None,
    };
    let level = cfg.level;

    // per replication: scored cells, failures, wall time per method
    type RepOut = (Vec<Cell>, Vec<String>, BTreeMap<Method, f64>);
    let reps: Vec<RepOut> = (0..cfg.replications)
        .into_par_iter()
        .map(|r| -> RepOut {
            let mut cells = Vec::new();
            let mut fails = Vec::new();
            let mut times = BTreeMap::new();
            let rep = match replicate(cfg, csv.as_ref(), r) {
                Ok(rep) => rep,
                Err(e) => {
                    fails.push(format!("replication {r}: {e}"));
                    return (cells, fails, times);
                }
            };
            let probes: Vec<Vec<f64>> = match (&cfg.probes, &rep.truth) {
                (Some(p), _) => p.clone(),
                (None, TruthKind::Holdout { holdout, .. }) => {
                    let m = cfg.max_probes.unwrap_or(holdout.n()).min(holdout.n());
                    holdout.x()[..m].to_vec()
                }
                (None, _) => default_probes(&cfg.data, rep.data.d()),
            };
            let rseed = derive_seed(cfg.seed ^ 0x6d70, r as u64);
            let mut mp_time = None;
            for &method in &cfg.methods {
                let start = Instant::now();
                let res = run_method(method, cfg, &source_spec, &rep, &probes, rseed, mp_time);
                let t = start.elapsed().as_secs_f64();
                if method == Method::Mp {
                    mp_time = Some(t);
                }
                times.insert(method, t);
                match res {
                    Ok(ivs) => {
                        for (pi, (x, row)) in probes.iter().zip(ivs).enumerate() {
                            for (fi, iv) in row.into_iter().enumerate() {
                                let target = if method == Method::Optimal {
                                    component_truth(&rep, cfg.component, x)
                                } else {
                                    rep.truth.value(x, iv.functional)
                                };
                                match target {
                                    Ok(t) => cells.push(Cell {
                                        method,
                                        probe: pi,
                                        functional: fi,
                                        covered: iv.contains(t),
                                        length: iv.length(),
                                    }),
                                    Err(e) => fails.push(format!("replication {r} {method} probe {pi}: truth: {e}")),
                                }
                            }
                        }
                    }
                    Err(e) => fails.push(format!("replication {r} {method}: {e}")),
                }
            }
            (cells, fails, times)
        })
        .collect();

    let probes_for_labels =
        cfg.probes.clone().unwrap_or_else(|| default_probes(&cfg.data, csv.as_ref().map_or(1, |d| d.d())));
    let dataset = dataset_label(&cfg.data);
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (_, f, _) in &reps {
        failures.extend(f.iter().cloned());
    }
    for &method in &cfg.methods {
        let wall = reps.iter().filter_map(|(_, _, t)| t.get(&method)).sum::<f64>() / cfg.replications as f64;
        let nfun = if method == Method::Optimal { 1 } else { cfg.functionals.len() };
        for fi in 0..nfun {
            let fname = if method == Method::Optimal {
                format!("component:{}", cfg.component + 1)
            } else {
                cfg.functionals[fi].to_string()
            };
            let all: Vec<&Cell> = reps
                .iter()
                .flat_map(|(c, _, _)| c.iter())
                .filter(|c| c.method == method && c.functional == fi)
                .collect();
            let mut by_probe: BTreeMap<usize, Vec<&Cell>> = BTreeMap::new();
            for c in &all {
                by_probe.entry(c.probe).or_default().push(c);
            }
            let mk = |x: String, cells: &[&Cell]| {
                let n = cells.len().max(1) as f64;
                let cov = cells.iter().filter(|c| c.covered).count() as f64 / n;
                CoverageRow {
                    method: method.to_string(),
                    dataset: dataset.clone(),
                    x,
                    functional: fname.clone(),
                    level,
                    coverage: cov,
                    mean_length: cells.iter().map(|c| c.length).sum::<f64>() / n,
                    miscoverage: (cov - level).abs(),
                    wall_time: wall,
                    cells: cells.len(),
                }
            };
            for (pi, cells) in &by_probe {
                let label = probes_for_labels.get(*pi).map(|p| probe_label(p)).unwrap_or_else(|| format!("row {pi}"));
                rows.push(mk(label, cells));
            }
            if !all.is_empty() {
                rows.push(mk("aggregate".into(), &all));
            }
        }
    }
    Ok(CoverageReport { replications: cfg.replications, rows, failures })
}

fn component_truth(rep: &Replicate, j: usize, x: &[f64]) -> Result<f64> {
    match &rep.truth {
        TruthKind::Generated(Truth::Spline(s)) => {
            if j >= s.theta.len() {
                return Err(Error::domain(format!("component {j} out of range")));
            }
            Ok(s.component(j, x[j]))
        }
        _ => Err(Error::domain("component truth needs spline data")),
    }
}

fn run_method(
    method: Method,
    cfg: &CoverageConfig,
    source_spec: &SourceSpec,
    rep: &Replicate,
    probes: &[Vec<f64>],
    seed: u64,
    mp_time: Option<f64>,
) -> Result<Vec<Vec<Interval>>> {
    match method {
        Method::Optimal => {
            let spec = match &cfg.data {
                DataSpec::Generator(Generator::Spline { features, .. }) => {
                    SplineModelSpec::new(*features, crate::simgen::SPLINE_X_RANGE.0, crate::simgen::SPLINE_X_RANGE.1)?
                }
                _ => SplineModelSpec::from_data(&rep.data)?,
            };
            let spec = match &cfg.data {
                DataSpec::Generator(Generator::Spline { sigma2, .. }) => SplineModelSpec { sigma2: *sigma2, ..spec },
                _ => spec,
            };
            let fit = SplineFit::fit(spec, &rep.data)?;
            probes
                .iter()
                .map(|x| {
                    let (lower, upper) = optimal_ci(&fit, cfg.component, x[cfg.component], cfg.level)?;
                    let center = fit.component_moments(cfg.component, x[cfg.component])?.0;
                    Ok(vec![Interval { functional: FunctionalSpec::Mean, lower, upper, center }])
                })
                .collect()
        }
        Method::Mp => {
            let mut source = source_spec.build()?;
            source.fit(&rep.data)?;
            probes
                .iter()
                .enumerate()
                .map(|(pi, x)| {
                    let out = mp_interval(
                        source.as_ref(),
                        &rep.data,
                        x,
                        &cfg.functionals,
                        &cfg.mp,
                        cfg.level,
                        derive_seed(seed, pi as u64),
                    )?;
                    Ok(out.intervals)
                })
                .collect()
        }
        Method::Bootstrap => {
            let mut source = source_spec.build()?;
            source.fit(&rep.data)?;
            let mut resamples = cfg.bootstrap.resamples;
            if cfg.bootstrap.equal_time {
                if let Some(budget) = mp_time {
                    let start = Instant::now();
                    source.refit_on(&rep.data, 0)?;
                    let per = start.elapsed().as_secs_f64().max(1e-9);
                    resamples = ((budget / per).floor() as usize).clamp(1, resamples);
                }
            }
            let out =
                bootstrap_intervals(source.as_ref(), &rep.data, probes, &cfg.functionals, resamples, cfg.level, seed)?;
            Ok(out.intervals)
        }
    }
}
