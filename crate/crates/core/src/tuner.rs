//! Copula bandwidth selection by prequential log score.
//!
//! The tuning sample is drawn from the initial predictive. The recursion that
//! scores it starts from a normal reference fitted to the sample's mean and
//! sd, the way the recursion on standardized data starts from `N(0, 1)`.
//! Starting from `P_0` itself would score data against the law that
//! generated them, where any update only adds noise.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::update_in_place;
use crate::error::{Error, Result};
use crate::grid::{clamp_unit, linspace, DistMeta, Functionals, GridDistribution, DEFAULT_GRID};
use crate::normal::{phi, phi_inv, std_normal_pdf, CopulaBandwidth, CopulaKernel};
use crate::rng::{open_uniform, stream_rng};
use crate::schedule::ScheduleSpec;

const SCORE_FLOOR: f64 = 1e-300;

pub const RHO_MIN: f64 = 0.01;
pub const RHO_MAX: f64 = 0.99;

fn repair(dist: &mut GridDistribution) {
    let cdf = dist.cdf_mut();
    for j in 1..cdf.len() {
        if cdf[j] < cdf[j - 1] {
            cdf[j] = cdf[j - 1];
        }
    }
}

/// `sum_i log p_{i-1}(y_i)`, updating with `y_i` and `alpha(n_train + i)`
/// after each term.
pub fn prequential_log_score(
    p0: &GridDistribution,
    ys: &[f64],
    rho: CopulaBandwidth,
    schedule: &ScheduleSpec,
    n_train: usize,
) -> Result<f64> {
    if p0.pdf().is_none() {
        return Err(Error::domain("prequential score needs densities: supply a pdf or call with_derived_pdf() first"));
    }
    if ys.is_empty() {
        return Err(Error::domain("prequential score needs at least one observation"));
    }
    if let Some(bad) = ys.iter().find(|y| !y.is_finite()) {
        return Err(Error::domain(format!("observation {bad} is not finite")));
    }
    let mut p = p0.clone();
    let mut score = 0.0;
    for (i, &y) in ys.iter().enumerate() {
        let dens = p.pdf_at(y).unwrap_or(0.0);
        score += dens.max(SCORE_FLOOR).ln();
        if i + 1 == ys.len() {
            break;
        }
        let v = p.cdf_unchecked(y);
        update_in_place(&mut p, v, schedule.alpha(n_train + i + 1)?, rho);
        repair(&mut p);
    }
    Ok(score)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TunerOptions {
    pub tuning_size: usize,
    /// Number of random orderings the score is averaged over.
    pub shuffles: usize,
    pub grid_size: usize,
    pub tol: f64,
    /// Offset added to the step index of the scoring recursion.
    pub score_offset: usize,
}

impl Default for TunerOptions {
    fn default() -> Self {
        TunerOptions { tuning_size: 1000, shuffles: 5, grid_size: DEFAULT_GRID, tol: 1e-3, score_offset: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub rho: CopulaBandwidth,
    /// Shuffle-averaged score at `rho`.
    pub score: f64,
    /// Set when the score cannot depend on rho (a single tuning point).
    pub uninformative: bool,
    /// Every evaluated `(rho, score)`, sorted by rho.
    pub curve: Vec<(f64, f64)>,
}

impl TuneResult {
    pub fn curve_csv(&self) -> String {
        let mut s = String::from("rho,score\n");
        for (r, v) in &self.curve {
            s.push_str(&format!("{r},{v}\n"));
        }
        s
    }
}

/// A tuning sample in its scoring orderings, with the reference start.
#[derive(Debug, Clone)]
pub struct TuningProblem {
    reference: GridDistribution,
    mean: f64,
    sd: f64,
    orderings: Vec<Vec<f64>>,
    schedule: ScheduleSpec,
    offset: usize,
}

impl TuningProblem {
    /// Draw the tuning sample from `source` and prepare the orderings.
    pub fn from_source(
        source: &GridDistribution,
        schedule: &ScheduleSpec,
        opts: &TunerOptions,
        seed: u64,
    ) -> Result<Self> {
        if opts.tuning_size == 0 {
            return Err(Error::domain("tuning size must be at least 1"));
        }
        let mut rng = stream_rng(seed, 0);
        let ys: Vec<f64> = (0..opts.tuning_size).map(|_| source.quantile_unchecked(open_uniform(&mut rng))).collect();
        TuningProblem::from_sample(&ys, schedule, opts, seed)
    }

    /// Use an explicit tuning sample.
    pub fn from_sample(ys: &[f64], schedule: &ScheduleSpec, opts: &TunerOptions, seed: u64) -> Result<Self> {
        if ys.is_empty() {
            return Err(Error::domain("tuning sample is empty"));
        }
        if let Some(bad) = ys.iter().find(|y| !y.is_finite()) {
            return Err(Error::domain(format!("observation {bad} is not finite")));
        }
        let emp = crate::grid::empirical_from_samples(ys)?;
        let (mean, sd) = (emp.mean(), reference_sd(emp.variance().sqrt()));
        let reference = normal_reference(mean, sd, ys, opts.grid_size)?;
        let orderings = (0..opts.shuffles.max(1))
            .map(|s| {
                let mut o = ys.to_vec();
                o.shuffle(&mut stream_rng(seed, 1 + s as u64));
                o
            })
            .collect();
        Ok(TuningProblem { reference, mean, sd, orderings, schedule: *schedule, offset: opts.score_offset })
    }

    pub fn reference(&self) -> &GridDistribution {
        &self.reference
    }

    pub fn sample_size(&self) -> usize {
        self.orderings[0].len()
    }

    /// Shuffle-averaged prequential score.
    ///
    /// The recursion is tracked exactly at the sample points, so no grid
    /// interpolation enters the score.
    pub fn score(&self, rho: CopulaBandwidth) -> Result<f64> {
        let total: f64 = self
            .orderings
            .par_iter()
            .map(|o| point_score(o, self.mean, self.sd, rho, &self.schedule, self.offset))
            .collect::<Vec<f64>>()
            .into_iter()
            .sum();
        Ok(total / self.orderings.len() as f64)
    }

    /// Golden-section maximization of the score over `[lo, hi]`.
    pub fn golden(&self, lo: f64, hi: f64, tol: f64) -> Result<TuneResult> {
        let mut curve = Vec::new();
        let mut eval = |r: f64| -> Result<f64> {
            let s = self.score(CopulaBandwidth::new(r)?)?;
            curve.push((r, s));
            Ok(s)
        };
        let g = 0.5 * (5f64.sqrt() - 1.0);
        let (mut a, mut b) = (lo, hi);
        let mut c = b - g * (b - a);
        let mut d = a + g * (b - a);
        let mut fc = eval(c)?;
        let mut fd = eval(d)?;
        while b - a > tol {
            if fc >= fd {
                b = d;
                d = c;
                fd = fc;
                c = b - g * (b - a);
                fc = eval(c)?;
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + g * (b - a);
                fd = eval(d)?;
            }
        }
        let fa = eval(lo)?;
        let fb = eval(hi)?;
        let _ = (fa, fb);
        curve.sort_by(|x, y| x.0.total_cmp(&y.0));
        curve.dedup_by(|x, y| x.0 == y.0);
        let &(rho, score) =
            curve.iter().max_by(|x, y| x.1.total_cmp(&y.1).then(y.0.total_cmp(&x.0))).expect("curve is nonempty");
        Ok(TuneResult { rho: CopulaBandwidth::new(rho)?, score, uninformative: false, curve })
    }

    /// Exhaustive search over an equally spaced rho lattice.
    pub fn grid_search(&self, lo: f64, hi: f64, step: f64) -> Result<TuneResult> {
        let m = ((hi - lo) / step).round() as usize;
        let curve: Vec<(f64, f64)> = (0..=m)
            .map(|k| {
                let r = lo + step * k as f64;
                Ok((r, self.score(CopulaBandwidth::new(r)?)?))
            })
            .collect::<Result<_>>()?;
        let &(rho, score) =
            curve.iter().max_by(|x, y| x.1.total_cmp(&y.1).then(y.0.total_cmp(&x.0))).expect("lattice is nonempty");
        Ok(TuneResult { rho: CopulaBandwidth::new(rho)?, score, uninformative: false, curve })
    }
}

fn reference_sd(sd: f64) -> f64 {
    if sd > 1e-6 {
        sd
    } else {
        1.0
    }
}

/// Prequential score of `ys` from `N(mean, sd^2)`, tracking only the CDF and
/// density at the observations still to come.
fn point_score(ys: &[f64], mean: f64, sd: f64, rho: CopulaBandwidth, schedule: &ScheduleSpec, offset: usize) -> f64 {
    let m = ys.len();
    let mut z: Vec<f64> = ys.iter().map(|&y| (y - mean) / sd).collect();
    let mut u: Vec<f64> = z.iter().map(|&t| phi(t)).collect();
    let mut dens: Vec<f64> = z.iter().map(|&t| std_normal_pdf(t) / sd).collect();
    let mut score = 0.0;
    for i in 0..m {
        score += dens[i].max(SCORE_FLOOR).ln();
        if i + 1 == m {
            break;
        }
        let kernel = CopulaKernel::new(clamp_unit(u[i]), rho);
        let a = schedule.alpha_unchecked(offset + i + 1);
        let keep = 1.0 - a;
        for j in (i + 1)..m {
            let zj = z[j];
            u[j] = keep * u[j] + a * kernel.h_from_score(zj);
            dens[j] *= keep + a * kernel.density_from_score(zj);
            z[j] = phi_inv(clamp_unit(u[j]));
        }
    }
    score
}

/// Normal start for the scoring recursion on a grid that covers both the
/// normal's default span and the tuning sample.
fn normal_reference(mean: f64, sd: f64, ys: &[f64], size: usize) -> Result<GridDistribution> {
    let iqr = 1.3489795003921634 * sd;
    let (ymin, ymax) = ys.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &y| (a.min(y), b.max(y)));
    let lo = (mean - 3.719016485455709 * sd).min(ymin) - 0.5 * iqr;
    let hi = (mean + 3.719016485455709 * sd).max(ymax) + 0.5 * iqr;
    let grid = linspace(lo, hi, size);
    let pdf = move |y: f64| std_normal_pdf((y - mean) / sd) / sd;
    GridDistribution::tabulate_truncated(grid, |y| phi((y - mean) / sd), Some(&pdf), DistMeta::default())
}

/// Tune rho for runs started from `source`.
pub fn tune_rho(
    source: &GridDistribution,
    schedule: &ScheduleSpec,
    opts: &TunerOptions,
    seed: u64,
) -> Result<TuneResult> {
    let problem = TuningProblem::from_source(source, schedule, opts, seed)?;
    if problem.sample_size() == 1 {
        let rho = CopulaBandwidth::new(0.5 * (RHO_MIN + RHO_MAX))?;
        let score = problem.score(rho)?;
        return Ok(TuneResult { rho, score, uninformative: true, curve: vec![(rho.get(), score)] });
    }
    problem.golden(RHO_MIN, RHO_MAX, opts.tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rho(r: f64) -> CopulaBandwidth {
        CopulaBandwidth::new(r).unwrap()
    }

    #[test]
    fn single_observation_is_log_density() {
        let p = GridDistribution::normal(0.0, 1.0, 512, DistMeta::default()).unwrap();
        let s = prequential_log_score(&p, &[0.3], rho(0.5), &ScheduleSpec::default(), 0).unwrap();
        assert!((s - p.pdf_at(0.3).unwrap().ln()).abs() < 1e-14);
        let s2 = prequential_log_score(&p, &[0.3], rho(0.9), &ScheduleSpec::default(), 0).unwrap();
        assert_eq!(s, s2);
    }

    #[test]
    fn point_score_matches_fine_grid_recursion() {
        let ys: Vec<f64> = (0..60).map(|i| ((i * 37 % 60) as f64 / 60.0 - 0.5) * 3.0).collect();
        let emp = crate::grid::empirical_from_samples(&ys).unwrap();
        let (m, sd) = (emp.mean(), emp.variance().sqrt());
        let reference = normal_reference(m, sd, &ys, 8192).unwrap();
        let sched = ScheduleSpec::default();
        for r in [0.2, 0.6, 0.9] {
            let exact = point_score(&ys, m, sd, rho(r), &sched, 0);
            let grid = prequential_log_score(&reference, &ys, rho(r), &sched, 0).unwrap();
            assert!((exact - grid).abs() < 1e-2 * exact.abs().max(1.0), "rho {r}: {exact} vs {grid}");
        }
    }

    #[test]
    fn needs_pdf() {
        let p = GridDistribution::normal(0.0, 1.0, 64, DistMeta::default()).unwrap().without_pdf();
        let e = prequential_log_score(&p, &[0.0], rho(0.5), &ScheduleSpec::default(), 0).unwrap_err();
        assert!(e.to_string().contains("with_derived_pdf"));
    }

    #[test]
    fn order_matters() {
        let p = GridDistribution::normal(0.0, 1.0, 256, DistMeta::default()).unwrap();
        let ys = [-1.5, 0.2, 2.0, 0.7];
        let rev: Vec<f64> = ys.iter().rev().copied().collect();
        let s = ScheduleSpec::default();
        let a = prequential_log_score(&p, &ys, rho(0.8), &s, 0).unwrap();
        let b = prequential_log_score(&p, &rev, rho(0.8), &s, 0).unwrap();
        assert!((a - b).abs() > 1e-6);
    }

    #[test]
    fn out_of_grid_uses_floor() {
        let p = GridDistribution::normal(0.0, 1.0, 64, DistMeta::default()).unwrap();
        let s = prequential_log_score(&p, &[100.0], rho(0.5), &ScheduleSpec::default(), 0).unwrap();
        assert_eq!(s, SCORE_FLOOR.ln());
    }

    #[test]
    fn single_point_is_uninformative() {
        let p = GridDistribution::normal(0.0, 1.0, 128, DistMeta::default()).unwrap();
        let opts = TunerOptions { tuning_size: 1, grid_size: 128, ..Default::default() };
        let r = tune_rho(&p, &ScheduleSpec::default(), &opts, 3).unwrap();
        assert!(r.uninformative);
        assert_eq!(r.rho.get(), 0.5);
    }

    #[test]
    fn deterministic_and_in_range() {
        let p = GridDistribution::normal(1.0, 2.0, 128, DistMeta::default()).unwrap();
        let opts = TunerOptions { tuning_size: 60, shuffles: 2, grid_size: 128, tol: 1e-2, ..Default::default() };
        let a = tune_rho(&p, &ScheduleSpec::default(), &opts, 9).unwrap();
        let b = tune_rho(&p, &ScheduleSpec::default(), &opts, 9).unwrap();
        assert_eq!(a, b);
        assert!((RHO_MIN..=RHO_MAX).contains(&a.rho.get()));
        assert!(a.curve.windows(2).all(|w| w[0].0 < w[1].0));
    }

    #[test]
    fn reference_covers_sample() {
        let ys = [0.0, 0.1, -0.1, 25.0];
        let opts = TunerOptions { grid_size: 64, ..Default::default() };
        let t = TuningProblem::from_sample(&ys, &ScheduleSpec::default(), &opts, 0).unwrap();
        let g = t.reference().grid();
        assert!(g[0] < -0.1 && g[g.len() - 1] > 25.0);
    }
}
