//! One-dimensional distributions tabulated on a grid, plus the empirical
//! (step) distribution of a sample.
//!
//! A [`GridDistribution`] stores CDF values at strictly increasing grid nodes
//! and interpolates linearly between them. It is the representation of the
//! initial predictive and of every updated predictive in a chain.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Clamp constant keeping CDF values away from the `Phi^-1` singularities.
pub const CLAMP_EPS: f64 = 1e-10;

/// Minimum number of grid nodes.
pub const MIN_GRID: usize = 16;

/// Default number of grid nodes for tabulated predictives.
pub const DEFAULT_GRID: usize = 1024;

const EDGE_TOL: f64 = 1e-6;

/// Clamp a probability into `[CLAMP_EPS, 1 - CLAMP_EPS]`.
#[inline]
pub fn clamp_unit(u: f64) -> f64 {
    u.clamp(CLAMP_EPS, 1.0 - CLAMP_EPS)
}

/// A scalar summary `theta(P)` of a one-dimensional distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FunctionalSpec {
    Mean,
    Variance,
    Quantile(f64),
    CdfAt(f64),
}

impl FunctionalSpec {
    pub fn quantile(level: f64) -> Result<Self> {
        if level > 0.0 && level < 1.0 {
            Ok(FunctionalSpec::Quantile(level))
        } else {
            Err(Error::domain(format!("quantile level {level} must lie in (0, 1)")))
        }
    }
}

impl fmt::Display for FunctionalSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FunctionalSpec::Mean => write!(f, "mean"),
            FunctionalSpec::Variance => write!(f, "variance"),
            FunctionalSpec::Quantile(l) => write!(f, "quantile:{l}"),
            FunctionalSpec::CdfAt(y) => write!(f, "cdf:{y}"),
        }
    }
}

impl FromStr for FunctionalSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let num = |v: &str| -> Result<f64> {
            v.parse::<f64>().map_err(|_| Error::parse(format!("functional `{s}`: `{v}` is not a number")))
        };
        match s.split_once(':') {
            None if s == "mean" => Ok(FunctionalSpec::Mean),
            None if s == "variance" => Ok(FunctionalSpec::Variance),
            Some(("quantile", v)) => FunctionalSpec::quantile(num(v)?),
            Some(("cdf", v)) | Some(("cdf_at", v)) => {
                let y = num(v)?;
                if !y.is_finite() {
                    return Err(Error::domain("cdf functional needs a finite y"));
                }
                Ok(FunctionalSpec::CdfAt(y))
            }
            _ => Err(Error::parse(format!(
                "unknown functional `{s}` (expected mean | variance | quantile:<level> | cdf:<y>)"
            ))),
        }
    }
}

impl Serialize for FunctionalSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for FunctionalSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Evaluation of the functionals supported by [`FunctionalSpec`].
pub trait Functionals {
    fn cdf_value(&self, y: f64) -> Result<f64>;
    fn quantile_value(&self, u: f64) -> Result<f64>;
    fn mean(&self) -> f64;
    fn variance(&self) -> f64;

    fn evaluate(&self, spec: &FunctionalSpec) -> Result<f64> {
        match *spec {
            FunctionalSpec::Mean => Ok(self.mean()),
            FunctionalSpec::Variance => Ok(self.variance()),
            FunctionalSpec::Quantile(l) => self.quantile_value(l),
            FunctionalSpec::CdfAt(y) => self.cdf_value(y),
        }
    }
}

/// What a tabulated predictive conditions on.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DistMeta {
    pub n_train: usize,
    pub x: Vec<f64>,
    /// Free-form metadata carried through files untouched.
    pub extra: serde_json::Map<String, serde_json::Value>,
}

impl DistMeta {
    pub fn new(n_train: usize, x: Vec<f64>) -> Self {
        DistMeta { n_train, x, extra: Default::default() }
    }
}

/// Monotone CDF values on a strictly increasing grid, with optional density.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDistribution {
    grid: Vec<f64>,
    cdf: Vec<f64>,
    pdf: Option<Vec<f64>>,
    meta: DistMeta,
}

impl GridDistribution {
    /// Build and validate.
    pub fn new(grid: Vec<f64>, cdf: Vec<f64>, pdf: Option<Vec<f64>>, meta: DistMeta) -> Result<Self> {
        let d = GridDistribution { grid, cdf, pdf, meta };
        d.validate()?;
        Ok(d)
    }

    /// Tabulate a distribution from closed-form CDF and (optional) density.
    pub fn tabulate(
        grid: Vec<f64>,
        cdf: impl Fn(f64) -> f64,
        pdf: Option<&dyn Fn(f64) -> f64>,
        meta: DistMeta,
    ) -> Result<Self> {
        let c = grid.iter().map(|&y| cdf(y)).collect();
        let p = pdf.map(|f| grid.iter().map(|&y| f(y)).collect());
        GridDistribution::new(grid, c, p, meta)
    }

    /// Tabulate the law conditioned on `[grid[0], grid[G-1]]`, so the edge
    /// values are exactly 0 and 1 whatever the tail mass outside the grid.
    pub fn tabulate_truncated(
        grid: Vec<f64>,
        cdf: impl Fn(f64) -> f64,
        pdf: Option<&dyn Fn(f64) -> f64>,
        meta: DistMeta,
    ) -> Result<Self> {
        let g = grid.len();
        if g < MIN_GRID {
            return Err(Error::invariant(format!("grid has {g} nodes, at least {MIN_GRID} required")));
        }
        let (lo, hi) = (cdf(grid[0]), cdf(grid[g - 1]));
        let mass = hi - lo;
        if !(mass > 0.0) {
            return Err(Error::domain("law puts no mass on the grid"));
        }
        let mut c: Vec<f64> = grid.iter().map(|&y| ((cdf(y) - lo) / mass).clamp(0.0, 1.0)).collect();
        c[0] = 0.0;
        c[g - 1] = 1.0;
        let p = pdf.map(|f| grid.iter().map(|&y| f(y) / mass).collect());
        GridDistribution::new(grid, c, p, meta)
    }

    /// Tabulate `N(mean, sd^2)` on the default grid of that law, truncated to
    /// the grid.
    pub fn normal(mean: f64, sd: f64, size: usize, meta: DistMeta) -> Result<Self> {
        if !(sd > 0.0 && sd.is_finite() && mean.is_finite()) {
            return Err(Error::domain(format!("normal tabulation needs finite mean and sd > 0, got ({mean}, {sd})")));
        }
        let grid = default_grid(|u| mean + sd * crate::normal::phi_inv(u), size);
        let pdf = move |y: f64| crate::normal::std_normal_pdf((y - mean) / sd) / sd;
        GridDistribution::tabulate_truncated(grid, |y| crate::normal::phi((y - mean) / sd), Some(&pdf), meta)
    }

    /// Check every type invariant, naming the first that fails.
    pub fn validate(&self) -> Result<()> {
        let g = self.grid.len();
        if g < MIN_GRID {
            return Err(Error::invariant(format!("grid has {g} nodes, at least {MIN_GRID} required")));
        }
        if self.cdf.len() != g {
            return Err(Error::invariant(format!("cdf has {} values but grid has {g} nodes", self.cdf.len())));
        }
        for (i, w) in self.grid.windows(2).enumerate() {
            if !(w[0].is_finite() && w[1].is_finite()) {
                return Err(Error::invariant(format!("grid value at index {} is not finite", i)));
            }
            if w[1] <= w[0] {
                return Err(Error::invariant(format!(
                    "grid not strictly increasing at indices {}..{} ({} >= {})",
                    i,
                    i + 1,
                    w[0],
                    w[1]
                )));
            }
        }
        for (i, &c) in self.cdf.iter().enumerate() {
            if !(0.0..=1.0).contains(&c) {
                return Err(Error::invariant(format!("cdf[{i}] = {c} is outside [0, 1]")));
            }
        }
        for (i, w) in self.cdf.windows(2).enumerate() {
            if w[1] < w[0] {
                return Err(Error::invariant(format!(
                    "cdf decreasing at indices {}..{} ({} > {})",
                    i,
                    i + 1,
                    w[0],
                    w[1]
                )));
            }
        }
        if self.cdf[0] > EDGE_TOL {
            return Err(Error::invariant(format!(
                "cdf[0] = {} exceeds {EDGE_TOL}: grid does not cover the left tail",
                self.cdf[0]
            )));
        }
        if self.cdf[g - 1] < 1.0 - EDGE_TOL {
            return Err(Error::invariant(format!(
                "cdf[{}] = {} is below 1 - {EDGE_TOL}: grid does not cover the right tail",
                g - 1,
                self.cdf[g - 1]
            )));
        }
        if let Some(pdf) = &self.pdf {
            if pdf.len() != g {
                return Err(Error::invariant(format!("pdf has {} values but grid has {g} nodes", pdf.len())));
            }
            if let Some(i) = pdf.iter().position(|p| !(p.is_finite() && *p >= 0.0)) {
                return Err(Error::invariant(format!("pdf[{i}] = {} is negative or not finite", pdf[i])));
            }
            let mass = trapezoid(&self.grid, pdf);
            if !(0.99..=1.01).contains(&mass) {
                return Err(Error::invariant(format!(
                    "pdf integrates to {mass} over the grid, expected within [0.99, 1.01]"
                )));
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn cdf(&self) -> &[f64] {
        &self.cdf
    }

    pub fn pdf(&self) -> Option<&[f64]> {
        self.pdf.as_deref()
    }

    pub fn meta(&self) -> &DistMeta {
        &self.meta
    }

    pub fn meta_mut(&mut self) -> &mut DistMeta {
        &mut self.meta
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub(crate) fn cdf_mut(&mut self) -> &mut [f64] {
        &mut self.cdf
    }

    pub(crate) fn parts_mut(&mut self) -> (&[f64], &mut Vec<f64>, &mut Option<Vec<f64>>) {
        (&self.grid, &mut self.cdf, &mut self.pdf)
    }

    /// A copy carrying a density derived from the CDF by central finite
    /// differences (floored at zero) when none is stored.
    pub fn with_derived_pdf(mut self) -> Self {
        if self.pdf.is_none() {
            self.pdf = Some(derive_pdf(&self.grid, &self.cdf));
        }
        self
    }

    /// Drop the stored density.
    pub fn without_pdf(mut self) -> Self {
        self.pdf = None;
        self
    }

    /// Index `j` such that `grid[j] <= y < grid[j + 1]`; `y` must be inside.
    #[inline]
    fn bracket(&self, y: f64) -> usize {
        // partition_point gives the first index with grid > y
        self.grid.partition_point(|&g| g <= y) - 1
    }

    /// Piecewise-linear CDF, saturating at the edge values outside the grid.
    #[inline]
    pub(crate) fn cdf_unchecked(&self, y: f64) -> f64 {
        let g = self.grid.len();
        if y <= self.grid[0] {
            return self.cdf[0];
        }
        if y >= self.grid[g - 1] {
            return self.cdf[g - 1];
        }
        let j = self.bracket(y);
        let (x0, x1) = (self.grid[j], self.grid[j + 1]);
        let (c0, c1) = (self.cdf[j], self.cdf[j + 1]);
        c0 + (c1 - c0) * (y - x0) / (x1 - x0)
    }

    /// CDF at `y` by linear interpolation.
    pub fn cdf_at(&self, y: f64) -> Result<f64> {
        if !y.is_finite() {
            return Err(Error::domain(format!("cdf_at: y = {y} is not finite")));
        }
        Ok(self.cdf_unchecked(y))
    }

    /// Density at `y` by linear interpolation; zero outside the grid.
    pub fn pdf_at(&self, y: f64) -> Option<f64> {
        let pdf = self.pdf.as_ref()?;
        let g = self.grid.len();
        if !(y >= self.grid[0] && y <= self.grid[g - 1]) {
            return Some(0.0);
        }
        if y == self.grid[g - 1] {
            return Some(pdf[g - 1]);
        }
        let j = self.bracket(y);
        let t = (y - self.grid[j]) / (self.grid[j + 1] - self.grid[j]);
        Some(pdf[j] + t * (pdf[j + 1] - pdf[j]))
    }

    /// Generalized inverse: leftmost `y` with `cdf(y) >= u`, interpolated
    /// linearly inside the bracketing cell.
    #[inline]
    pub(crate) fn quantile_unchecked(&self, u: f64) -> f64 {
        let g = self.grid.len();
        let j = self.cdf.partition_point(|&c| c < u);
        if j == 0 {
            return self.grid[0];
        }
        if j == g {
            return self.grid[g - 1];
        }
        let (c0, c1) = (self.cdf[j - 1], self.cdf[j]);
        let (x0, x1) = (self.grid[j - 1], self.grid[j]);
        // c0 < u <= c1, so the cell has positive mass
        x0 + (u - c0) / (c1 - c0) * (x1 - x0)
    }

    pub fn quantile_at(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::domain(format!("quantile_at: u = {u} must lie in (0, 1)")));
        }
        Ok(self.quantile_unchecked(u))
    }

    /// Inverse-CDF sample for a given uniform draw.
    pub fn sample(&self, uniform_draw: f64) -> Result<f64> {
        self.quantile_at(uniform_draw)
    }

    fn moments(&self) -> (f64, f64) {
        let g = self.grid.len();
        let mut m1 = self.cdf[0] * self.grid[0];
        let mut m2 = self.cdf[0] * self.grid[0] * self.grid[0];
        for j in 1..g {
            let w = self.cdf[j] - self.cdf[j - 1];
            let mid = 0.5 * (self.grid[j] + self.grid[j - 1]);
            m1 += w * mid;
            m2 += w * mid * mid;
        }
        let tail = 1.0 - self.cdf[g - 1];
        m1 += tail * self.grid[g - 1];
        m2 += tail * self.grid[g - 1] * self.grid[g - 1];
        (m1, m2)
    }
}

impl Functionals for GridDistribution {
    fn cdf_value(&self, y: f64) -> Result<f64> {
        self.cdf_at(y)
    }

    fn quantile_value(&self, u: f64) -> Result<f64> {
        self.quantile_at(u)
    }

    fn mean(&self) -> f64 {
        self.moments().0
    }

    fn variance(&self) -> f64 {
        let (m1, m2) = self.moments();
        (m2 - m1 * m1).max(0.0)
    }
}

/// Right-continuous empirical distribution of a sample.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalDistribution {
    sorted: Vec<f64>,
}

impl EmpiricalDistribution {
    pub fn from_samples(samples: &[f64]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::domain("empirical distribution needs at least one sample"));
        }
        if let Some(bad) = samples.iter().find(|s| !s.is_finite()) {
            return Err(Error::domain(format!("sample {bad} is not finite")));
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(EmpiricalDistribution { sorted })
    }

    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }
}

impl Functionals for EmpiricalDistribution {
    fn cdf_value(&self, y: f64) -> Result<f64> {
        if !y.is_finite() {
            return Err(Error::domain(format!("cdf_at: y = {y} is not finite")));
        }
        let k = self.sorted.partition_point(|&s| s <= y);
        Ok(k as f64 / self.sorted.len() as f64)
    }

    fn quantile_value(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::domain(format!("quantile: u = {u} must lie in (0, 1)")));
        }
        let n = self.sorted.len();
        let k = ((u * n as f64).ceil() as usize).clamp(1, n);
        Ok(self.sorted[k - 1])
    }

    fn mean(&self) -> f64 {
        self.sorted.iter().sum::<f64>() / self.sorted.len() as f64
    }

    fn variance(&self) -> f64 {
        let m = self.mean();
        self.sorted.iter().map(|s| (s - m) * (s - m)).sum::<f64>() / self.sorted.len() as f64
    }
}

/// Empirical distribution of the forward samples of a chain.
pub fn empirical_from_samples(samples: &[f64]) -> Result<EmpiricalDistribution> {
    EmpiricalDistribution::from_samples(samples)
}

/// Equally spaced grid of `size` nodes spanning
/// `[q(1e-4) - IQR/2, q(1 - 1e-4) + IQR/2]` of the law with quantile `q`.
pub fn default_grid(q: impl Fn(f64) -> f64, size: usize) -> Vec<f64> {
    let iqr = q(0.75) - q(0.25);
    let lo = q(1e-4) - 0.5 * iqr;
    let hi = q(1.0 - 1e-4) + 0.5 * iqr;
    linspace(lo, hi, size)
}

pub fn linspace(lo: f64, hi: f64, size: usize) -> Vec<f64> {
    let step = (hi - lo) / (size - 1) as f64;
    (0..size).map(|i| if i + 1 == size { hi } else { lo + step * i as f64 }).collect()
}

/// Trapezoid integral of tabulated values.
pub fn trapezoid(x: &[f64], f: &[f64]) -> f64 {
    x.windows(2).zip(f.windows(2)).map(|(xs, fs)| 0.5 * (fs[0] + fs[1]) * (xs[1] - xs[0])).sum()
}

fn derive_pdf(grid: &[f64], cdf: &[f64]) -> Vec<f64> {
    let g = grid.len();
    (0..g)
        .map(|j| {
            let (a, b) = (j.saturating_sub(1), (j + 1).min(g - 1));
            ((cdf[b] - cdf[a]) / (grid[b] - grid[a])).max(0.0)
        })
        .collect()
}

/// On-disk predictive file, schema version 1.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PpdFile {
    pub version: Option<u32>,
    pub x: Vec<f64>,
    pub n_train: usize,
    pub grid: Vec<f64>,
    pub cdf: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pdf: Option<Vec<f64>>,
    #[serde(default)]
    pub meta: serde_json::Map<String, serde_json::Value>,
}

pub const PPD_SCHEMA_VERSION: u32 = 1;

impl PpdFile {
    pub fn from_distribution(d: &GridDistribution) -> Self {
        PpdFile {
            version: Some(PPD_SCHEMA_VERSION),
            x: d.meta.x.clone(),
            n_train: d.meta.n_train,
            grid: d.grid.clone(),
            cdf: d.cdf.clone(),
            pdf: d.pdf.clone(),
            meta: d.meta.extra.clone(),
        }
    }

    pub fn into_distribution(self) -> Result<GridDistribution> {
        match self.version {
            None => return Err(Error::parse("missing required field `version`")),
            Some(PPD_SCHEMA_VERSION) => {}
            Some(v) => return Err(Error::parse(format!("unsupported schema version {v} (expected 1)"))),
        }
        let meta = DistMeta { n_train: self.n_train, x: self.x, extra: self.meta };
        GridDistribution::new(self.grid, self.cdf, self.pdf, meta).map_err(|e| Error::parse(e.to_string()))
    }
}

/// Parse a predictive from schema-v1 JSON text.
pub fn ppd_from_json(text: &str) -> Result<GridDistribution> {
    let file: PpdFile = serde_json::from_str(text).map_err(|e| Error::parse(e.to_string()))?;
    file.into_distribution()
}

pub fn ppd_to_json(d: &GridDistribution) -> String {
    serde_json::to_string_pretty(&PpdFile::from_distribution(d)).expect("ppd serializes")
}

pub fn read_ppd(path: impl AsRef<Path>) -> Result<GridDistribution> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ppd_from_json(&text).map_err(|e| e.at(path))
}

pub fn write_ppd(path: impl AsRef<Path>, d: &GridDistribution) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, ppd_to_json(d)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::normal::{phi, phi_inv};

    fn meta() -> DistMeta {
        DistMeta::new(10, vec![0.0])
    }

    fn uniform01(g: usize) -> GridDistribution {
        let grid = linspace(0.0, 1.0, g);
        let cdf = grid.clone();
        GridDistribution::new(grid, cdf, Some(vec![1.0; g]), meta()).unwrap()
    }

    fn std_normal(g: usize) -> GridDistribution {
        let grid = linspace(-8.0, 8.0, g);
        GridDistribution::tabulate(grid, phi, None, meta()).unwrap()
    }

    #[test]
    fn cdf_at_examples() {
        let d = uniform01(32);
        let j = 7;
        assert_eq!(d.cdf_at(d.grid()[j]).unwrap(), d.cdf()[j]);
        assert_eq!(d.cdf_at(-1.0).unwrap(), d.cdf()[0]);
        assert_eq!(d.cdf_at(2.0).unwrap(), 1.0);
        assert!(d.cdf_at(f64::NAN).is_err());

        let mut grid = linspace(0.0, 1.0, 16);
        grid[0] = -1.0;
        let mut cdf = vec![0.0; 16];
        cdf[1] = 0.2;
        cdf[2] = 0.4;
        for c in cdf.iter_mut().skip(3) {
            *c = 1.0;
        }
        let d = GridDistribution::new(grid.clone(), cdf, None, meta()).unwrap();
        let mid = 0.5 * (grid[1] + grid[2]);
        assert!((d.cdf_at(mid).unwrap() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn quantile_examples() {
        let d = uniform01(101);
        assert!((d.quantile_at(0.25).unwrap() - 0.25).abs() <= 1e-12);
        let j = 40;
        assert_eq!(d.quantile_at(d.cdf()[j]).unwrap(), d.grid()[j]);
        assert!(d.quantile_at(0.0).is_err());
        assert!(d.quantile_at(1.0).is_err());

        let n = std_normal(1024);
        assert!((n.quantile_at(0.9).unwrap() - 1.281551565545).abs() <= 2e-3);
    }

    #[test]
    fn quantile_ties_resolve_left() {
        let grid = linspace(0.0, 15.0, 16);
        let mut cdf: Vec<f64> = vec![0.0; 16];
        for (j, c) in cdf.iter_mut().enumerate() {
            *c = match j {
                0..=3 => 0.0,
                4 => 0.5,
                5..=9 => 0.5,
                _ => 1.0,
            };
        }
        let d = GridDistribution::new(grid, cdf, None, meta()).unwrap();
        // flat stretch at 0.5 over y in [4, 9]: leftmost y with F >= 0.5 is 4
        assert_eq!(d.quantile_at(0.5).unwrap(), 4.0);
    }

    #[test]
    fn sample_examples() {
        let d = GridDistribution::normal(3.0, 1.0, 1023, meta()).unwrap();
        assert!((d.sample(0.5).unwrap() - 3.0).abs() < 1e-2);
        let tiny = d.sample(1e-9).unwrap();
        assert!(tiny.is_finite() && tiny >= d.grid()[0]);
    }

    #[test]
    fn moments_of_tabulated_normal() {
        let grid = linspace(-13.0, 19.0, 2048);
        let d = GridDistribution::tabulate(grid, |y| phi((y - 3.0) / 2.0), None, meta()).unwrap();
        assert!((d.mean() - 3.0).abs() <= 1e-3);
        assert!((d.variance() - 4.0).abs() <= 1e-2);
    }

    #[test]
    fn moments_of_point_mass() {
        let mut grid = linspace(-5.0, 10.0, 40);
        grid.push(2.0 - 1e-10);
        grid.push(2.0 + 1e-10);
        grid.retain(|g| (g - 2.0).abs() > 1e-3 || (g - 2.0).abs() < 1e-9);
        grid.sort_by(f64::total_cmp);
        let cdf = grid.iter().map(|&y| if y > 2.0 { 1.0 } else { 0.0 }).collect();
        let d = GridDistribution::new(grid, cdf, None, meta()).unwrap();
        assert!((d.mean() - 2.0).abs() <= 1e-9);
        assert!(d.variance().abs() <= 1e-9);
    }

    #[test]
    fn symmetric_distribution_mean_is_center() {
        let grid = linspace(-6.0, 10.0, 513);
        let d = GridDistribution::tabulate(grid, |y| phi(y - 2.0), None, meta()).unwrap();
        assert!((d.mean() - 2.0).abs() <= 1e-9);
    }

    #[test]
    fn empirical_examples() {
        let e = empirical_from_samples(&[3.0, 1.0, 2.0]).unwrap();
        assert_eq!(e.quantile_value(0.5).unwrap(), 2.0);
        let e = empirical_from_samples(&[5.0]).unwrap();
        assert_eq!(e.mean(), 5.0);
        let e = empirical_from_samples(&[1.0, 1.0, 1.0, 9.0]).unwrap();
        assert_eq!(e.cdf_value(1.0).unwrap(), 0.75);
        assert!(empirical_from_samples(&[]).is_err());
        assert!(empirical_from_samples(&[1.0, f64::NAN]).is_err());
    }

    #[test]
    fn empirical_moments_are_sample_moments() {
        let s = [0.3, -1.2, 4.5, 2.2, 2.2, 0.0, -7.1];
        let e = empirical_from_samples(&s).unwrap();
        let m = s.iter().sum::<f64>() / 7.0;
        let v = s.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / 7.0;
        assert!((e.mean() - m).abs() <= 1e-12);
        assert!((e.variance() - v).abs() <= 1e-12);
    }

    #[test]
    fn ks_of_inverse_cdf_samples() {
        use rand::{Rng, SeedableRng};
        let d = std_normal(1024);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut s: Vec<f64> = (0..100_000).map(|_| d.sample(rng.random_range(1e-12..1.0)).unwrap()).collect();
        s.sort_by(f64::total_cmp);
        let n = s.len() as f64;
        let ks = s
            .iter()
            .enumerate()
            .map(|(i, &y)| {
                let f = phi(y);
                (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks <= 0.01, "KS = {ks}");
    }

    #[test]
    fn quantile_inverts_cdf_inside_grid() {
        let d = std_normal(1024);
        let h = d.grid()[1] - d.grid()[0];
        for y in [-3.0, -1.1, 0.0, 0.4, 2.7] {
            let back = d.quantile_at(d.cdf_at(y).unwrap()).unwrap();
            assert!((back - y).abs() <= h, "y={y} back={back}");
        }
    }

    #[test]
    fn validate_rejects_violations() {
        let g = linspace(-8.0, 8.0, 32);
        let good: Vec<f64> = g.iter().map(|&y| phi(y)).collect();

        let short = GridDistribution::new(g[..8].to_vec(), good[..8].to_vec(), None, meta());
        assert!(short.unwrap_err().to_string().contains("at least 16"));

        let mut bad_grid = g.clone();
        bad_grid[5] = bad_grid[4];
        let e = GridDistribution::new(bad_grid, good.clone(), None, meta()).unwrap_err();
        assert!(e.to_string().contains("strictly increasing"));

        let mut dec = good.clone();
        dec[20] = dec[19] - 0.01;
        let e = GridDistribution::new(g.clone(), dec, None, meta()).unwrap_err();
        assert!(e.to_string().contains("indices 19..20"), "{e}");

        let left = GridDistribution::new(
            linspace(-1.0, 8.0, 32),
            linspace(-1.0, 8.0, 32).iter().map(|&y| phi(y)).collect(),
            None,
            meta(),
        );
        assert!(left.unwrap_err().to_string().contains("left tail"));

        let e = GridDistribution::new(g.clone(), good.clone(), Some(vec![0.0; 32]), meta()).unwrap_err();
        assert!(e.to_string().contains("integrates"));

        let mut neg = vec![0.0; 32];
        neg[3] = -1.0;
        let e = GridDistribution::new(g, good, Some(neg), meta()).unwrap_err();
        assert!(e.to_string().contains("negative"));
    }

    #[test]
    fn derived_pdf_matches_density() {
        let d = std_normal(1024).with_derived_pdf();
        for y in [-2.0, 0.0, 1.3] {
            let p = d.pdf_at(y).unwrap();
            assert!((p - crate::normal::std_normal_pdf(y)).abs() < 1e-3);
        }
        assert_eq!(d.pdf_at(100.0), Some(0.0));
    }

    #[test]
    fn normal_default_grid_spans_tails() {
        let d = GridDistribution::normal(0.0, 1.0, DEFAULT_GRID, meta()).unwrap();
        let iqr = 2.0 * phi_inv(0.75);
        assert!((d.grid()[0] - (phi_inv(1e-4) - 0.5 * iqr)).abs() < 1e-12);
        assert_eq!(d.len(), DEFAULT_GRID);
    }

    #[test]
    fn functional_spec_parse_and_display() {
        for s in ["mean", "variance", "quantile:0.9", "cdf:1.5"] {
            let f: FunctionalSpec = s.parse().unwrap();
            assert_eq!(f.to_string(), s);
        }
        assert!("quantile:1.0".parse::<FunctionalSpec>().is_err());
        assert!("median".parse::<FunctionalSpec>().is_err());
    }

    #[test]
    fn ppd_file_errors() {
        let e = ppd_from_json(r#"{"x":[0],"n_train":3,"grid":[0,1],"cdf":[0,1]}"#).unwrap_err();
        assert!(e.to_string().contains("version"));

        let g = linspace(-8.0, 8.0, 16);
        let mut c: Vec<f64> = g.iter().map(|&y| phi(y)).collect();
        c[9] = c[8] - 0.1;
        let text = serde_json::json!({"version":1,"x":[0.5],"n_train":3,"grid":g,"cdf":c}).to_string();
        let e = ppd_from_json(&text).unwrap_err();
        assert!(e.to_string().contains("indices 8..9"), "{e}");
    }

    #[test]
    fn ppd_file_round_trip() {
        let mut d = GridDistribution::normal(0.3, 1.7, 64, DistMeta::new(25, vec![0.1, -2.0])).unwrap();
        d.meta_mut().extra.insert("source".into(), "test".into());
        let back = ppd_from_json(&ppd_to_json(&d)).unwrap();
        assert_eq!(back, d);
    }
}
