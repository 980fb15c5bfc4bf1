//! Synthetic data generators.
//!
//! Each generator is a pure function of its parameters and seed and also
//! exposes the ground truth needed to score intervals.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::analytic::{bspline_basis, clamped_uniform_knots};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::normal::{phi, std_normal_quantile};
use crate::rng::{stream_rng, ChainRng};

pub const SPLINE_X_RANGE: (f64, f64) = (-2.5, 2.5);
pub const SPLINE_BASIS: usize = 20;
pub const SPLINE_DEGREE: usize = 3;

fn rng(seed: u64) -> ChainRng {
    stream_rng(seed, 0)
}

/// Additive spline data with its true coefficients.
#[derive(Debug, Clone)]
pub struct SplineSim {
    pub data: Dataset,
    /// `theta[j]` has `SPLINE_BASIS` entries; zero for noise features.
    pub theta: Vec<Vec<f64>>,
    pub knots: Vec<f64>,
    pub sigma2: f64,
}

impl SplineSim {
    /// True component `f_j(x)`.
    pub fn component(&self, j: usize, x: f64) -> f64 {
        spline_value(&self.knots, &self.theta[j], x)
    }

    pub fn mean_at(&self, x: &[f64]) -> f64 {
        (0..self.theta.len()).map(|j| self.component(j, x[j])).sum()
    }
}

fn spline_value(knots: &[f64], theta: &[f64], x: f64) -> f64 {
    let b = bspline_basis(x, knots, SPLINE_DEGREE).expect("valid knots");
    b.values.iter().zip(theta).map(|(a, t)| a * t).sum()
}

/// `y | x ~ N(sum_j f_j(x_j), sigma2)` with `f_j = B(x_j)' theta_j`,
/// `theta_j ~ N(0, I)` for the first `signal` features and zero otherwise,
/// and `x_j ~ U(-2.5, 2.5)`.
pub fn gen_additive_spline(n: usize, features: usize, signal: usize, sigma2: f64, seed: u64) -> Result<SplineSim> {
    if signal > features {
        return Err(Error::domain(format!("{signal} signal features out of {features}")));
    }
    if !(sigma2 >= 0.0) {
        return Err(Error::domain("noise variance must be nonnegative"));
    }
    let mut r = rng(seed);
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    let theta: Vec<Vec<f64>> = (0..features)
        .map(|j| (0..SPLINE_BASIS).map(|_| if j < signal { std.sample(&mut r) } else { 0.0 }).collect())
        .collect();
    let knots = clamped_uniform_knots(SPLINE_X_RANGE.0, SPLINE_X_RANGE.1, SPLINE_BASIS, SPLINE_DEGREE)?;
    let ux = Uniform::new_inclusive(SPLINE_X_RANGE.0, SPLINE_X_RANGE.1).expect("range");
    let xs: Vec<Vec<f64>> = (0..n).map(|_| (0..features).map(|_| ux.sample(&mut r)).collect()).collect();
    let sd = sigma2.sqrt();
    let ys: Vec<f64> = xs
        .iter()
        .map(|x| {
            let m: f64 = theta[..signal].iter().zip(x).map(|(t, &xj)| spline_value(&knots, t, xj)).sum();
            m + sd * std.sample(&mut r)
        })
        .collect();
    Ok(SplineSim { data: Dataset::new(ys, xs)?, theta, knots, sigma2 })
}

/// `x ~ U(0, 1)`, `y | x ~ N(sin 3x, x^2)`.
pub fn gen_funnel(n: usize, seed: u64) -> Result<Dataset> {
    let mut r = rng(seed);
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let x: f64 = r.random();
        ys.push((3.0 * x).sin() + x * std.sample(&mut r));
        xs.push(vec![x]);
    }
    Dataset::new(ys, xs)
}

/// Conditional `level`-quantile of the funnel.
pub fn funnel_quantile(x: f64, level: f64) -> Result<f64> {
    Ok((3.0 * x).sin() + x * std_normal_quantile(level)?)
}

/// Three-branch heteroscedastic data on a normalized scale.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiffusionSim {
    #[serde(skip)]
    pub data: Option<Dataset>,
    /// Branch switch point in the original input scale.
    pub m: f64,
    /// `y_norm = (y - y_min) / (y_max - y_min)`.
    pub y_min: f64,
    pub y_max: f64,
}

pub const DIFFUSION_X_RANGE: (f64, f64) = (2.5, 12.5);
const DIFFUSION_X_CENTER: f64 = 7.5;
const DIFFUSION_X_HALF_WIDTH: f64 = 2.0;

impl DiffusionSim {
    fn branch(&self, b: usize, x: f64) -> f64 {
        let f1 = if x < self.m { 0.4 * x } else { (2.0 * x).sin() };
        match b {
            0 => f1,
            1 => -f1,
            _ => {
                if x < self.m {
                    0.5
                } else {
                    0.5 + 0.1 * (8.0 * x).sin()
                }
            }
        }
    }

    fn noise_sd(x: f64) -> f64 {
        0.02 * x * x
    }

    /// Conditional CDF of the normalized label at a centered input.
    pub fn cdf(&self, x_centered: f64, y_norm: f64) -> f64 {
        let x = DIFFUSION_X_CENTER + DIFFUSION_X_HALF_WIDTH * x_centered;
        let y = self.y_min + y_norm * (self.y_max - self.y_min);
        let sd = Self::noise_sd(x);
        (0..3).map(|b| phi((y - self.branch(b, x)) / sd)).sum::<f64>() / 3.0
    }

    /// Conditional quantile of the normalized label, by bisection.
    pub fn quantile(&self, x_centered: f64, level: f64) -> Result<f64> {
        if !(level > 0.0 && level < 1.0) {
            return Err(Error::domain(format!("quantile level {level} must lie in (0, 1)")));
        }
        let span = self.y_max - self.y_min;
        let (mut lo, mut hi) = (-50.0 / span - 1.0, 50.0 / span + 2.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.cdf(x_centered, mid) < level {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

/// Inputs `x ~ U(2.5, 12.5)` switch at `m = median(x) - 2` between branch
/// shapes, and the noise sd grows as `0.02 x^2`. Inputs are then mapped
/// affinely onto `[-2.5, 2.5]` and labels are min-max normalized.
pub fn gen_diffusion(n: usize, seed: u64) -> Result<DiffusionSim> {
    if n < 2 {
        return Err(Error::domain("diffusion generator needs n >= 2"));
    }
    let mut r = rng(seed);
    let ux = Uniform::new_inclusive(DIFFUSION_X_RANGE.0, DIFFUSION_X_RANGE.1).expect("range");
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    let xs: Vec<f64> = (0..n).map(|_| ux.sample(&mut r)).collect();
    let mut sorted = xs.clone();
    sorted.sort_by(f64::total_cmp);
    let median = if n % 2 == 1 { sorted[n / 2] } else { 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]) };
    let mut sim = DiffusionSim { data: None, m: median - 2.0, y_min: 0.0, y_max: 1.0 };
    let ys: Vec<f64> = xs
        .iter()
        .map(|&x| {
            let b = r.random_range(0..3);
            sim.branch(b, x) + DiffusionSim::noise_sd(x) * std.sample(&mut r)
        })
        .collect();
    let (ymin, ymax) = ys.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &y| (a.min(y), b.max(y)));
    sim.y_min = ymin;
    sim.y_max = if ymax > ymin { ymax } else { ymin + 1.0 };
    let yn = ys.iter().map(|y| (y - sim.y_min) / (sim.y_max - sim.y_min)).collect();
    let xc = xs.iter().map(|x| vec![(x - DIFFUSION_X_CENTER) / DIFFUSION_X_HALF_WIDTH]).collect();
    sim.data = Some(Dataset::new(yn, xc)?);
    Ok(sim)
}

/// Independent `Gamma(shape, scale)` draws.
pub fn gen_gamma_iid(n: usize, shape: f64, scale: f64, seed: u64) -> Result<Vec<f64>> {
    let g = Gamma::new(shape, scale).map_err(|e| Error::domain(format!("gamma({shape}, {scale}): {e}")))?;
    let mut r = rng(seed);
    Ok((0..n).map(|_| g.sample(&mut r)).collect())
}

/// Gamma draws as a dataset with one constant feature `x = 0`.
pub fn gamma_dataset(n: usize, shape: f64, scale: f64, seed: u64) -> Result<Dataset> {
    let y = gen_gamma_iid(n, shape, scale, seed)?;
    Dataset::new(y, vec![vec![0.0]; n])
}

/// Generator selector shared by the CLI and the harness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Generator {
    Spline {
        #[serde(default = "default_features")]
        features: usize,
        #[serde(default = "default_signal")]
        signal: usize,
        #[serde(default = "default_sigma2")]
        sigma2: f64,
    },
    Funnel,
    Diffusion,
    Gamma {
        #[serde(default = "default_two")]
        shape: f64,
        #[serde(default = "default_two")]
        scale: f64,
    },
}

fn default_features() -> usize {
    30
}
fn default_signal() -> usize {
    1
}
fn default_sigma2() -> f64 {
    0.5
}
fn default_two() -> f64 {
    2.0
}

impl Generator {
    pub fn parse_kind(kind: &str) -> Result<Generator> {
        Ok(match kind {
            "spline" => {
                Generator::Spline { features: default_features(), signal: default_signal(), sigma2: default_sigma2() }
            }
            "funnel" => Generator::Funnel,
            "diffusion" => Generator::Diffusion,
            "gamma" => Generator::Gamma { shape: 2.0, scale: 2.0 },
            _ => {
                return Err(Error::parse(format!(
                    "unknown generator `{kind}` (expected spline | funnel | diffusion | gamma)"
                )))
            }
        })
    }

    /// Draw a dataset together with its ground truth.
    pub fn generate(&self, n: usize, seed: u64) -> Result<Simulated> {
        Ok(match *self {
            Generator::Spline { features, signal, sigma2 } => {
                let s = gen_additive_spline(n, features, signal, sigma2, seed)?;
                Simulated { data: s.data.clone(), truth: Truth::Spline(Box::new(s)) }
            }
            Generator::Funnel => Simulated { data: gen_funnel(n, seed)?, truth: Truth::Funnel },
            Generator::Diffusion => {
                let mut s = gen_diffusion(n, seed)?;
                let data = s.data.take().expect("generated");
                Simulated { data, truth: Truth::Diffusion(s) }
            }
            Generator::Gamma { shape, scale } => {
                Simulated { data: gamma_dataset(n, shape, scale, seed)?, truth: Truth::Gamma { shape, scale } }
            }
        })
    }
}

#[derive(Debug, Clone)]
pub struct Simulated {
    pub data: Dataset,
    pub truth: Truth,
}

/// Ground truth of a generated dataset.
#[derive(Debug, Clone)]
pub enum Truth {
    Spline(Box<SplineSim>),
    Funnel,
    Diffusion(DiffusionSim),
    Gamma { shape: f64, scale: f64 },
}
