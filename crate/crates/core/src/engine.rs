//! Predictive resampling with Gaussian-copula updates.
//!
//! A chain starts from the initial predictive `P_0` and, for `k = 1..N`,
//! draws `y_{n+k} ~ P_{k-1}` by inverse CDF and revises the predictive as
//!
//! ```text
//! P_k(y) = (1 - a) P_{k-1}(y) + a H_rho(P_{k-1}(y), P_{k-1}(y_{n+k})),   a = alpha_{n+k}
//! ```
//!
//! at every grid node. The functional of the chain's limit is estimated from
//! the empirical distribution of its forward samples (or from `P_N`), and the
//! draws over `B` independent chains form the martingale posterior.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{clamp_unit, empirical_from_samples, FunctionalSpec, Functionals, GridDistribution};
use crate::normal::{phi_inv, CopulaBandwidth, CopulaKernel};
use crate::rng::{open_uniform, stream_rng};
use crate::schedule::ScheduleSpec;

/// Which distribution the per-chain functional is computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// Empirical CDF of the forward samples `y_{n+1..n+N}`.
    #[default]
    Empirical,
    /// The last updated predictive `P_N`.
    FinalGrid,
}

impl std::str::FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "empirical" => Ok(Estimator::Empirical),
            "final_grid" | "final-grid" => Ok(Estimator::FinalGrid),
            _ => Err(Error::parse(format!("unknown estimator `{s}` (expected empirical | final_grid)"))),
        }
    }
}

pub const DEFAULT_CHAINS: usize = 100;
pub const DEFAULT_STEPS: usize = 250;
pub const DEFAULT_LEVEL: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    /// Number of chains `B`.
    pub chains: usize,
    /// Forward steps per chain `N`.
    pub steps: usize,
    pub schedule: ScheduleSpec,
    pub rho: CopulaBandwidth,
    pub seed: u64,
    /// Training-set size `n`; chain step `k` uses `alpha_{n+k}`.
    pub n_train: usize,
    pub functionals: Vec<FunctionalSpec>,
    #[serde(default)]
    pub estimator: Estimator,
    /// Credible level of the reported equal-tailed intervals.
    pub level: f64,
    /// Steps at which traces are recorded; `None` disables tracing.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoints: Option<Vec<usize>>,
    /// Label values at which traces snapshot the current CDF.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trace_probes: Vec<f64>,
}

impl EngineConfig {
    pub fn new(rho: CopulaBandwidth, n_train: usize, functionals: Vec<FunctionalSpec>) -> Self {
        EngineConfig {
            chains: DEFAULT_CHAINS,
            steps: DEFAULT_STEPS,
            schedule: ScheduleSpec::default_schedule(),
            rho,
            seed: 0,
            n_train,
            functionals,
            estimator: Estimator::Empirical,
            level: DEFAULT_LEVEL,
            checkpoints: None,
            trace_probes: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.chains < 1 {
            return Err(Error::domain("chain count B must be at least 1"));
        }
        if self.steps < 1 {
            return Err(Error::domain("steps per chain N must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.level) {
            return Err(Error::domain(format!("credible level {} must lie in [0, 1)", self.level)));
        }
        if let Some(cp) = &self.checkpoints {
            if let Some(bad) = cp.iter().find(|&&c| c < 1 || c > self.steps) {
                return Err(Error::domain(format!("checkpoint {bad} is outside [1, {}]", self.steps)));
            }
        }
        Ok(())
    }
}

/// Log-spaced checkpoints `1, 2, 5, 10, 20, 50, ...` capped by `n`, with `n`
/// itself always included.
pub fn log_checkpoints(n: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut base = 1usize;
    'outer: loop {
        for m in [1, 2, 5] {
            let c = base * m;
            if c >= n {
                break 'outer;
            }
            out.push(c);
        }
        base *= 10;
    }
    out.push(n);
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub step: usize,
    /// Mean of the forward samples drawn so far.
    pub running_mean: f64,
    /// Mean of the current predictive `P_k`.
    pub ppd_mean: f64,
    /// `P_k` evaluated at the configured probe values.
    pub cdf_probes: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainResult {
    pub chain_id: usize,
    pub samples: Vec<f64>,
    pub functional_values: Vec<(FunctionalSpec, f64)>,
    pub trace: Option<Vec<TracePoint>>,
}

/// One copula update of every grid node, in place.
///
/// `v` is the (unclamped) CDF value of the new observation under `dist`.
pub(crate) fn update_in_place(dist: &mut GridDistribution, v: f64, alpha: f64, rho: CopulaBandwidth) {
    let kernel = CopulaKernel::new(clamp_unit(v), rho);
    let keep = 1.0 - alpha;
    let (_, cdf, pdf) = dist.parts_mut();
    match pdf {
        Some(pdf) => {
            for (c, p) in cdf.iter_mut().zip(pdf.iter_mut()) {
                if *c <= 0.0 || *c >= 1.0 {
                    *p *= keep;
                    continue;
                }
                let z = phi_inv(clamp_unit(*c));
                *c = keep * *c + alpha * kernel.h_from_score(z);
                *p *= keep + alpha * kernel.density_from_score(z);
            }
        }
        None => {
            for c in cdf.iter_mut().filter(|c| **c > 0.0 && **c < 1.0) {
                let z = phi_inv(clamp_unit(*c));
                *c = keep * *c + alpha * kernel.h_from_score(z);
            }
        }
    }
}

/// Monotonicity is preserved exactly in real arithmetic; this removes
/// rounding-level inversions and reports anything larger.
fn settle(dist: &mut GridDistribution) -> Result<()> {
    let cdf = dist.cdf_mut();
    for j in 1..cdf.len() {
        if cdf[j] < cdf[j - 1] {
            if cdf[j - 1] - cdf[j] > 1e-12 {
                return Err(Error::invariant(format!(
                    "copula update produced a decreasing cdf at node {j} ({} > {})",
                    cdf[j - 1],
                    cdf[j]
                )));
            }
            cdf[j] = cdf[j - 1];
        }
    }
    for c in cdf.iter_mut() {
        *c = c.clamp(0.0, 1.0);
    }
    dist.validate().map_err(|e| Error::invariant(format!("after copula update: {e}")))
}

/// Apply one predictive update with observation `y_new` and rate `alpha_k`.
pub fn copula_update(
    prev: &GridDistribution,
    y_new: f64,
    alpha_k: f64,
    rho: CopulaBandwidth,
) -> Result<GridDistribution> {
    if !(alpha_k > 0.0 && alpha_k < 1.0) {
        return Err(Error::domain(format!("learning rate {alpha_k} must lie in (0, 1)")));
    }
    let v = prev.cdf_at(y_new)?;
    let mut next = prev.clone();
    update_in_place(&mut next, v, alpha_k, rho);
    settle(&mut next)?;
    Ok(next)
}

fn evaluate_all<F: Functionals>(d: &F, specs: &[FunctionalSpec]) -> Result<Vec<(FunctionalSpec, f64)>> {
    specs.iter().map(|s| Ok((*s, d.evaluate(s)?))).collect()
}

/// Run chain `chain_id` of the configuration from `p0`.
pub fn run_chain(p0: &GridDistribution, config: &EngineConfig, chain_id: usize) -> Result<ChainResult> {
    config.validate()?;
    let mut rng = stream_rng(config.seed, chain_id as u64);
    let mut p = p0.clone().without_pdf();
    let mut samples = Vec::with_capacity(config.steps);
    let mut sum = 0.0;
    let mut trace = config.checkpoints.as_ref().map(|_| Vec::new());
    let mut next_cp = 0usize;

    for k in 1..=config.steps {
        let u = open_uniform(&mut rng);
        let y = p.quantile_unchecked(u);
        let v = p.cdf_unchecked(y);
        let alpha = config.schedule.alpha(config.n_train + k)?;
        update_in_place(&mut p, v, alpha, config.rho);
        settle(&mut p)?;
        samples.push(y);
        sum += y;

        if let (Some(cps), Some(tr)) = (&config.checkpoints, trace.as_mut()) {
            while next_cp < cps.len() && cps[next_cp] < k {
                next_cp += 1;
            }
            if next_cp < cps.len() && cps[next_cp] == k {
                tr.push(TracePoint {
                    step: k,
                    running_mean: sum / k as f64,
                    ppd_mean: p.mean(),
                    cdf_probes: config.trace_probes.iter().map(|&y| p.cdf_unchecked(y)).collect(),
                });
                next_cp += 1;
            }
        }
    }

    let functional_values = match config.estimator {
        Estimator::Empirical => evaluate_all(&empirical_from_samples(&samples)?, &config.functionals)?,
        Estimator::FinalGrid => evaluate_all(&p, &config.functionals)?,
    };
    Ok(ChainResult { chain_id, samples, functional_values, trace })
}

/// Posterior draws and summaries for one functional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalPosterior {
    pub functional: FunctionalSpec,
    /// Per-chain draws, sorted ascending.
    pub draws: Vec<f64>,
    pub mean: f64,
    pub sd: f64,
    pub level: f64,
    pub lower: f64,
    pub upper: f64,
}

impl FunctionalPosterior {
    pub fn from_draws(functional: FunctionalSpec, mut draws: Vec<f64>, level: f64) -> Result<Self> {
        if draws.is_empty() {
            return Err(Error::domain("posterior summary needs at least one draw"));
        }
        draws.sort_by(f64::total_cmp);
        let b = draws.len() as f64;
        let mean = draws.iter().sum::<f64>() / b;
        let sd = if draws.len() > 1 {
            (draws.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (b - 1.0)).sqrt()
        } else {
            0.0
        };
        let (lower, upper) = equal_tailed(&draws, level);
        Ok(FunctionalPosterior { functional, draws, mean, sd, level, lower, upper })
    }

    pub fn length(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }
}

/// Empirical `p`-quantile of sorted draws: the `ceil(p B)`-th smallest.
pub fn order_statistic(sorted: &[f64], p: f64) -> f64 {
    let b = sorted.len();
    let k = ((p * b as f64 - 1e-9).ceil() as usize).clamp(1, b);
    sorted[k - 1]
}

/// Equal-tailed interval at credible level `level` from sorted draws.
pub fn equal_tailed(sorted: &[f64], level: f64) -> (f64, f64) {
    let tail = 0.5 * (1.0 - level);
    (order_statistic(sorted, tail), order_statistic(sorted, 1.0 - tail))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorResult {
    pub functionals: Vec<FunctionalPosterior>,
    pub config: EngineConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_secs: Option<f64>,
}

impl PosteriorResult {
    pub fn get(&self, spec: &FunctionalSpec) -> Option<&FunctionalPosterior> {
        self.functionals.iter().find(|f| &f.functional == spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("posterior serializes")
    }
}

/// Run all `B` chains (in parallel on the current rayon pool) and summarize.
///
/// Chains are collected in chain-id order, so the result does not depend on
/// scheduling or thread count.
pub fn run_posterior(p0: &GridDistribution, config: &EngineConfig) -> Result<PosteriorResult> {
    Ok(run_posterior_with_chains(p0, config)?.0)
}

/// As [`run_posterior`], also returning the individual chains.
pub fn run_posterior_with_chains(
    p0: &GridDistribution,
    config: &EngineConfig,
) -> Result<(PosteriorResult, Vec<ChainResult>)> {
    config.validate()?;
    p0.validate()?;
    let chains: Vec<ChainResult> =
        (0..config.chains).into_par_iter().map(|b| run_chain(p0, config, b)).collect::<Result<_>>()?;
    let functionals = config
        .functionals
        .iter()
        .enumerate()
        .map(|(i, spec)| {
            let draws = chains.iter().map(|c| c.functional_values[i].1).collect();
            FunctionalPosterior::from_draws(*spec, draws, config.level)
        })
        .collect::<Result<_>>()?;
    Ok((PosteriorResult { functionals, config: config.clone(), wall_time_secs: None }, chains))
}

/// Write chain traces as CSV with columns `chain_id,step,running_mean,ppd_mean`.
pub fn write_trace_csv<W: Write>(mut out: W, chains: &[ChainResult]) -> std::io::Result<()> {
    writeln!(out, "chain_id,step,running_mean,ppd_mean")?;
    for c in chains {
        for t in c.trace.iter().flatten() {
            writeln!(out, "{},{},{},{}", c.chain_id, t.step, t.running_mean, t.ppd_mean)?;
        }
    }
    Ok(())
}

/// Mean absolute deviation `|P_N(y) - P_M(y)|` at each checkpoint `N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionTable {
    pub n_train: usize,
    pub m_max: usize,
    pub repeats: usize,
    pub probe_ys: Vec<f64>,
    pub rows: Vec<ContractionRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionRow {
    pub steps: usize,
    /// Mean over repeats, per probe value.
    pub per_probe: Vec<f64>,
    /// Mean over repeats and probes.
    pub mean_abs_dev: f64,
}

impl ContractionTable {
    /// Least-squares slope of `log(mean_abs_dev)` against `log(n + N)` over
    /// rows with `N < M` and positive deviation.
    pub fn loglog_slope(&self) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self
            .rows
            .iter()
            .filter(|r| r.steps < self.m_max && r.mean_abs_dev > 0.0)
            .map(|r| (((self.n_train + r.steps) as f64).ln(), r.mean_abs_dev.ln()))
            .collect();
        if pts.len() < 2 {
            return None;
        }
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
        Some(sxy / sxx)
    }
}

/// Measure how fast `P_N(y)` approaches its long-run value at probe labels.
///
/// Each repeat runs one chain for `m_max` steps and records `P_N(y)` at the
/// checkpoints. The chain is followed only at the probe values, which is
/// exact because the CDF value of an inverse-CDF draw is its uniform draw;
/// no grid is needed.
pub fn contraction_probe(
    p0: &GridDistribution,
    config: &EngineConfig,
    probe_ys: &[f64],
    m_max: usize,
    checkpoints: &[usize],
    repeats: usize,
) -> Result<ContractionTable> {
    let beta = config.schedule.beta();
    if beta <= 0.5 {
        return Err(Error::domain(format!(
            "contraction probe needs beta > 1/2 (got {beta}); for beta <= 1/2 the deviation bound is vacuous"
        )));
    }
    if repeats == 0 || m_max == 0 {
        return Err(Error::domain("contraction probe needs at least one repeat and one step"));
    }
    if let Some(bad) = checkpoints.iter().find(|&&c| c > m_max) {
        return Err(Error::domain(format!("checkpoint {bad} exceeds M = {m_max}")));
    }
    let mut cps = checkpoints.to_vec();
    cps.sort_unstable();
    cps.dedup();
    let u0: Vec<f64> = probe_ys.iter().map(|&y| p0.cdf_at(y)).collect::<Result<_>>()?;
    let (lo, hi) = (p0.cdf()[0], p0.cdf()[p0.len() - 1]);

    let per_repeat: Vec<Vec<Vec<f64>>> = (0..repeats)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(config.seed, r as u64);
            let mut u = u0.clone();
            let mut at_cp: Vec<Vec<f64>> = Vec::with_capacity(cps.len());
            let mut next = 0usize;
            if next < cps.len() && cps[next] == 0 {
                at_cp.push(u.clone());
                next += 1;
            }
            for k in 1..=m_max {
                let draw = open_uniform(&mut rng).clamp(lo, hi);
                let alpha = config.schedule.alpha_unchecked(config.n_train + k);
                let kernel = CopulaKernel::new(clamp_unit(draw), config.rho);
                for ui in u.iter_mut() {
                    let z = phi_inv(clamp_unit(*ui));
                    *ui = (1.0 - alpha) * *ui + alpha * kernel.h_from_score(z);
                }
                if next < cps.len() && cps[next] == k {
                    at_cp.push(u.clone());
                    next += 1;
                }
            }
            at_cp.into_iter().map(|snap| snap.iter().zip(&u).map(|(a, b)| (a - b).abs()).collect()).collect()
        })
        .collect();

    let np = probe_ys.len();
    let rows = cps
        .iter()
        .enumerate()
        .map(|(ci, &steps)| {
            let per_probe: Vec<f64> =
                (0..np).map(|p| per_repeat.iter().map(|r| r[ci][p]).sum::<f64>() / repeats as f64).collect();
            let mean_abs_dev = per_probe.iter().sum::<f64>() / np.max(1) as f64;
            ContractionRow { steps, per_probe, mean_abs_dev }
        })
        .collect();
    Ok(ContractionTable { n_train: config.n_train, m_max, repeats, probe_ys: probe_ys.to_vec(), rows })
}
