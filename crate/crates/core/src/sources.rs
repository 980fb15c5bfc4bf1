//! Providers of initial predictive distributions.
//!
//! A source is fitted to a [`Dataset`] and then maps a raw feature vector to
//! a [`GridDistribution`] over the standardized label. Refitting on a
//! resample (used by the bootstrap) and rolling forward with appended
//! samples (used by the martingale diagnostic) are optional capabilities.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{ColumnScale, Dataset};
use crate::engine::update_in_place;
use crate::error::{Error, Result};
use crate::grid::{default_grid, read_ppd, DistMeta, Functionals, GridDistribution, DEFAULT_GRID};
use crate::normal::{phi, phi_inv, std_normal_pdf, CopulaBandwidth, CopulaKernel};
use crate::rng::{open_uniform, stream_rng};
use crate::schedule::ScheduleSpec;

/// A predictive that can absorb its own forward samples one at a time.
pub trait ForwardState: Send {
    fn current(&self) -> &GridDistribution;
    /// Condition on one more observation `y` (standardized units) at the
    /// state's feature vector.
    fn refit(&mut self, y: f64) -> Result<()>;
}

pub trait PpdSource: Send + Sync {
    fn name(&self) -> String;

    fn fit(&mut self, data: &Dataset) -> Result<()>;

    /// Predictive at raw features `x`, over the standardized label.
    fn ppd_at(&self, x: &[f64]) -> Result<GridDistribution>;

    /// Scaling between original and standardized label units.
    fn y_scale(&self) -> ColumnScale {
        ColumnScale::IDENTITY
    }

    /// A copy fitted to `data` (bootstrap replicate `replicate`).
    fn refit_on(&self, data: &Dataset, replicate: usize) -> Result<Box<dyn PpdSource>> {
        let _ = (data, replicate);
        Err(Error::Capability(format!(
            "source `{}` cannot be refitted; the bootstrap needs a refit-capable source",
            self.name()
        )))
    }

    /// Forward process started at the predictive for raw features `x`.
    fn forward_state(&self, x: &[f64]) -> Result<Box<dyn ForwardState>> {
        let _ = x;
        Err(Error::Capability(format!("source `{}` has no forward refit; the diagnostic needs one", self.name())))
    }
}

impl<T: PpdSource + ?Sized> PpdSource for Box<T> {
    fn name(&self) -> String {
        (**self).name()
    }

    fn fit(&mut self, data: &Dataset) -> Result<()> {
        (**self).fit(data)
    }

    fn ppd_at(&self, x: &[f64]) -> Result<GridDistribution> {
        (**self).ppd_at(x)
    }

    fn y_scale(&self) -> ColumnScale {
        (**self).y_scale()
    }

    fn refit_on(&self, data: &Dataset, replicate: usize) -> Result<Box<dyn PpdSource>> {
        (**self).refit_on(data, replicate)
    }

    fn forward_state(&self, x: &[f64]) -> Result<Box<dyn ForwardState>> {
        (**self).forward_state(x)
    }
}

fn require_fitted<T>(v: &Option<T>, name: &str) -> Result<()> {
    if v.is_none() {
        return Err(Error::domain(format!("source `{name}` used before fit")));
    }
    Ok(())
}

fn x_close(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(p, q)| (p - q).abs() <= 1e-9)
}

/// Predictives read from schema files.
///
/// A path may be a single file or a directory of `*.json` files. With a
/// bootstrap directory `boot_<r>/x_<i>.json`, refit replicate `r` serves the
/// files under `boot_<r>`.
#[derive(Debug, Clone)]
pub struct FileSource {
    label: String,
    entries: Vec<GridDistribution>,
    boot_root: Option<PathBuf>,
}

impl FileSource {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Ok(FileSource { label: format!("file:{}", path.display()), entries: load_entries(path)?, boot_root: None })
    }

    pub fn from_distributions(label: impl Into<String>, entries: Vec<GridDistribution>) -> Self {
        FileSource { label: label.into(), entries, boot_root: None }
    }

    pub fn with_bootstrap_dir(mut self, root: impl Into<PathBuf>) -> Self {
        self.boot_root = Some(root.into());
        self
    }

    pub fn entries(&self) -> &[GridDistribution] {
        &self.entries
    }
}

fn load_entries(path: &Path) -> Result<Vec<GridDistribution>> {
    if path.is_dir() {
        let mut files: Vec<PathBuf> = std::fs::read_dir(path)
            .map_err(|e| Error::io(path, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        files.sort();
        if files.is_empty() {
            return Err(Error::Lookup(format!("no .json predictive files in {}", path.display())));
        }
        files.iter().map(read_ppd).collect()
    } else {
        Ok(vec![read_ppd(path)?])
    }
}

impl PpdSource for FileSource {
    fn name(&self) -> String {
        self.label.clone()
    }

    fn fit(&mut self, _data: &Dataset) -> Result<()> {
        Ok(())
    }

    fn ppd_at(&self, x: &[f64]) -> Result<GridDistribution> {
        if let [only] = self.entries.as_slice() {
            if only.meta().x.is_empty() {
                return Ok(only.clone());
            }
        }
        self.entries.iter().find(|d| x_close(&d.meta().x, x)).cloned().ok_or_else(|| {
            let avail: Vec<String> = self.entries.iter().map(|d| format!("{:?}", d.meta().x)).collect();
            Error::Lookup(format!("no stored predictive at x = {x:?}; available: {}", avail.join(", ")))
        })
    }

    fn refit_on(&self, _data: &Dataset, replicate: usize) -> Result<Box<dyn PpdSource>> {
        let root = self.boot_root.as_ref().ok_or_else(|| {
            Error::Capability(format!(
                "source `{}` has no bootstrap directory (expected boot_<r>/x_<i>.json)",
                self.label
            ))
        })?;
        let dir = root.join(format!("boot_{replicate}"));
        Ok(Box::new(FileSource {
            label: format!("file:{}", dir.display()),
            entries: load_entries(&dir)?,
            boot_root: None,
        }))
    }
}

/// Local Gaussian fitted to the `K` nearest rows in standardized features.
#[derive(Debug, Clone)]
pub struct GaussianSource {
    k: Option<usize>,
    grid_size: usize,
    data: Option<Dataset>,
    x_std: Vec<Vec<f64>>,
    y_std: Vec<f64>,
}

pub const GAUSSIAN_DEFAULT_K: usize = 30;
const VARIANCE_FLOOR: f64 = 1e-6;

impl Default for GaussianSource {
    fn default() -> Self {
        GaussianSource::new()
    }
}

impl GaussianSource {
    /// `K = min(n, 30)`.
    pub fn new() -> Self {
        GaussianSource { k: None, grid_size: DEFAULT_GRID, data: None, x_std: Vec::new(), y_std: Vec::new() }
    }

    /// Fixed neighbourhood size, capped at `n`.
    pub fn with_k(mut self, k: usize) -> Self {
        self.k = Some(k.max(1));
        self
    }

    pub fn with_grid_size(mut self, g: usize) -> Self {
        self.grid_size = g;
        self
    }

    fn effective_k(&self) -> usize {
        let n = self.y_std.len();
        self.k.unwrap_or(GAUSSIAN_DEFAULT_K).min(n)
    }

    /// Mean and predictive sd at standardized features.
    fn moments_at(&self, xs: &[f64]) -> (f64, f64) {
        let k = self.effective_k();
        let mut dist: Vec<(f64, usize)> = self
            .x_std
            .iter()
            .enumerate()
            .map(|(i, r)| (r.iter().zip(xs).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(), i))
            .collect();
        dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let ys: Vec<f64> = dist[..k].iter().map(|&(_, i)| self.y_std[i]).collect();
        let m = ys.iter().sum::<f64>() / k as f64;
        let var = if k > 1 { ys.iter().map(|y| (y - m) * (y - m)).sum::<f64>() / (k - 1) as f64 } else { 0.0 };
        let s2 = var.max(VARIANCE_FLOOR) * (1.0 + 1.0 / k as f64);
        (m, s2.sqrt())
    }

    fn tabulate(&self, m: f64, sd: f64, x: &[f64]) -> Result<GridDistribution> {
        let meta = DistMeta::new(self.y_std.len(), x.to_vec());
        GridDistribution::normal(m, sd, self.grid_size, meta)
    }
}

impl PpdSource for GaussianSource {
    fn name(&self) -> String {
        "gaussian".into()
    }

    fn fit(&mut self, data: &Dataset) -> Result<()> {
        self.x_std = data.x_std();
        self.y_std = data.y_std();
        self.data = Some(data.clone());
        Ok(())
    }

    fn ppd_at(&self, x: &[f64]) -> Result<GridDistribution> {
        require_fitted(&self.data, "gaussian")?;
        let data = self.data.as_ref().expect("fitted");
        if x.len() != data.d() {
            return Err(Error::domain(format!("x has {} features, source was fitted with {}", x.len(), data.d())));
        }
        let xs = data.scale().x_forward(x);
        let (m, sd) = self.moments_at(&xs);
        self.tabulate(m, sd, x)
    }

    fn y_scale(&self) -> ColumnScale {
        self.data.as_ref().map(|d| d.scale().y).unwrap_or(ColumnScale::IDENTITY)
    }

    fn refit_on(&self, data: &Dataset, _replicate: usize) -> Result<Box<dyn PpdSource>> {
        let mut s = GaussianSource { data: None, x_std: Vec::new(), y_std: Vec::new(), ..self.clone() };
        s.fit(data)?;
        Ok(Box::new(s))
    }

    fn forward_state(&self, x: &[f64]) -> Result<Box<dyn ForwardState>> {
        let current = self.ppd_at(x)?;
        let data = self.data.as_ref().expect("fitted");
        Ok(Box::new(GaussianForward { source: self.clone(), xs: data.scale().x_forward(x), x: x.to_vec(), current }))
    }
}

struct GaussianForward {
    source: GaussianSource,
    xs: Vec<f64>,
    x: Vec<f64>,
    current: GridDistribution,
}

impl ForwardState for GaussianForward {
    fn current(&self) -> &GridDistribution {
        &self.current
    }

    fn refit(&mut self, y: f64) -> Result<()> {
        self.source.x_std.push(self.xs.clone());
        self.source.y_std.push(y);
        let (m, sd) = self.source.moments_at(&self.xs);
        self.current = self.source.tabulate(m, sd, &self.x)?;
        Ok(())
    }
}

/// Kernel-weighted copula recursion over the training data.
///
/// Observation `i` updates the predictive at `x` with weight
/// `alpha(i) * exp(-|x - x_i|^2 / (2 tau^2))` in standardized features,
/// starting from `N(0, 1)`.
#[derive(Debug, Clone)]
pub struct CopulaRegressionSource {
    params: Option<(f64, CopulaBandwidth)>,
    tau_grid: Vec<f64>,
    rho_grid: Vec<f64>,
    grid_size: usize,
    fitted: Option<CopulaFit>,
}

#[derive(Debug, Clone)]
struct CopulaFit {
    data: Dataset,
    x_std: Vec<Vec<f64>>,
    /// `P_{i-1}(y_i | x_i)` for each training row, clamped.
    vs: Vec<f64>,
    tau: f64,
    rho: CopulaBandwidth,
    score: f64,
}

/// One `(tau, rho)` cell of the tuning lattice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CopulaTuningCell {
    pub tau: f64,
    pub rho: f64,
    pub score: f64,
}

impl Default for CopulaRegressionSource {
    fn default() -> Self {
        CopulaRegressionSource::tuned()
    }
}

impl CopulaRegressionSource {
    /// Tune `(tau, rho)` jointly on the training data over a 10 x 10 lattice.
    pub fn tuned() -> Self {
        CopulaRegressionSource {
            params: None,
            tau_grid: (0..10).map(|k| 0.1 * 10f64.powf(2.0 * k as f64 / 9.0)).collect(),
            rho_grid: (0..10).map(|k| 0.05 + 0.1 * k as f64).collect(),
            grid_size: DEFAULT_GRID,
            fitted: None,
        }
    }

    pub fn with_params(tau: f64, rho: CopulaBandwidth) -> Result<Self> {
        check_tau(tau)?;
        Ok(CopulaRegressionSource { params: Some((tau, rho)), ..CopulaRegressionSource::tuned() })
    }

    pub fn with_grid_size(mut self, g: usize) -> Self {
        self.grid_size = g;
        self
    }

    pub fn tau(&self) -> Option<f64> {
        self.fitted.as_ref().map(|f| f.tau)
    }

    pub fn rho(&self) -> Option<CopulaBandwidth> {
        self.fitted.as_ref().map(|f| f.rho)
    }

    /// Prequential score of the fitted parameters.
    pub fn score(&self) -> Option<f64> {
        self.fitted.as_ref().map(|f| f.score)
    }

    /// Score every cell of the tuning lattice on `data`.
    pub fn tuning_table(&self, data: &Dataset) -> Vec<CopulaTuningCell> {
        let xs = data.x_std();
        let ys = data.y_std();
        let cells: Vec<(f64, f64)> =
            self.tau_grid.iter().flat_map(|&t| self.rho_grid.iter().map(move |&r| (t, r))).collect();
        cells
            .par_iter()
            .map(|&(tau, rho)| CopulaTuningCell {
                tau,
                rho,
                score: training_pass(&xs, &ys, tau, CopulaBandwidth::new(rho).expect("lattice inside (0,1)")).1,
            })
            .collect()
    }

    fn fitted(&self) -> Result<&CopulaFit> {
        self.fitted.as_ref().ok_or_else(|| Error::domain("source `copula-reg` used before fit"))
    }

    fn initial(&self, x: &[f64]) -> Result<GridDistribution> {
        let grid = default_grid(phi_inv, self.grid_size);
        let meta = DistMeta::new(0, x.to_vec());
        GridDistribution::tabulate_truncated(grid, phi, Some(&std_normal_pdf), meta)
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::domain(format!("kernel width tau = {tau} must be positive")));
    }
    Ok(())
}

fn kernel_weight(a: &[f64], b: &[f64], tau: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum();
    (-d2 / (2.0 * tau * tau)).exp()
}

/// Run the recursion over the training rows, tracking each row's own CDF
/// value and log density. Returns the clamped `v_i` and the prequential
/// log score.
fn training_pass(xs: &[Vec<f64>], ys: &[f64], tau: f64, rho: CopulaBandwidth) -> (Vec<f64>, f64) {
    let n = ys.len();
    let schedule = ScheduleSpec::default_schedule();
    let mut z: Vec<f64> = ys.to_vec();
    let mut u: Vec<f64> = ys.iter().map(|&y| phi(y)).collect();
    let mut logp: Vec<f64> = ys.iter().map(|&y| std_normal_pdf(y).max(1e-300).ln()).collect();
    let mut vs = Vec::with_capacity(n);
    let mut score = 0.0;
    for i in 0..n {
        score += logp[i];
        let v = crate::grid::clamp_unit(u[i]);
        vs.push(v);
        let kernel = CopulaKernel::new(v, rho);
        let a = schedule.alpha_unchecked(i + 1);
        for j in (i + 1)..n {
            let w = a * kernel_weight(&xs[j], &xs[i], tau);
            let zj = z[j];
            u[j] = (1.0 - w) * u[j] + w * kernel.h_from_score(zj);
            logp[j] += ((1.0 - w) + w * kernel.density_from_score(zj)).ln();
            z[j] = phi_inv(crate::grid::clamp_unit(u[j]));
        }
    }
    (vs, score)
}

impl PpdSource for CopulaRegressionSource {
    fn name(&self) -> String {
        "copula-reg".into()
    }

    fn fit(&mut self, data: &Dataset) -> Result<()> {
        let xs = data.x_std();
        let ys = data.y_std();
        let (tau, rho) = match self.params {
            Some(p) => p,
            None => {
                let best = self
                    .tuning_table(data)
                    .into_iter()
                    .max_by(|a, b| a.score.total_cmp(&b.score))
                    .expect("tuning lattice is nonempty");
                (best.tau, CopulaBandwidth::new(best.rho)?)
            }
        };
        let (vs, score) = training_pass(&xs, &ys, tau, rho);
        self.fitted = Some(CopulaFit { data: data.clone(), x_std: xs, vs, tau, rho, score });
        Ok(())
    }

    fn ppd_at(&self, x: &[f64]) -> Result<GridDistribution> {
        let f = self.fitted()?;
        if x.len() != f.data.d() {
            return Err(Error::domain(format!("x has {} features, source was fitted with {}", x.len(), f.data.d())));
        }
        let xs = f.data.scale().x_forward(x);
        let schedule = ScheduleSpec::default_schedule();
        let mut p = self.initial(x)?;
        for (i, (&v, xi)) in f.vs.iter().zip(&f.x_std).enumerate() {
            let w = schedule.alpha_unchecked(i + 1) * kernel_weight(&xs, xi, f.tau);
            if w > 1e-16 {
                update_in_place(&mut p, v, w, f.rho);
            }
        }
        monotone(&mut p);
        p.meta_mut().n_train = f.data.n();
        p.validate()?;
        Ok(p)
    }

    fn y_scale(&self) -> ColumnScale {
        self.fitted.as_ref().map(|f| f.data.scale().y).unwrap_or(ColumnScale::IDENTITY)
    }

    fn refit_on(&self, data: &Dataset, _replicate: usize) -> Result<Box<dyn PpdSource>> {
        let mut s = CopulaRegressionSource { fitted: None, ..self.clone() };
        s.fit(data)?;
        Ok(Box::new(s))
    }

    fn forward_state(&self, x: &[f64]) -> Result<Box<dyn ForwardState>> {
        let f = self.fitted()?;
        Ok(Box::new(CopulaForward { current: self.ppd_at(x)?, rho: f.rho, step: f.data.n() }))
    }
}

fn monotone(p: &mut GridDistribution) {
    let cdf = p.cdf_mut();
    for j in 1..cdf.len() {
        if cdf[j] < cdf[j - 1] {
            cdf[j] = cdf[j - 1];
        }
    }
}

/// The copula recursion continued at a fixed `x`. A forward sample drawn at
/// `x` has kernel weight 1, so this is the engine's own update.
struct CopulaForward {
    current: GridDistribution,
    rho: CopulaBandwidth,
    step: usize,
}

impl ForwardState for CopulaForward {
    fn current(&self) -> &GridDistribution {
        &self.current
    }

    fn refit(&mut self, y: f64) -> Result<()> {
        self.step += 1;
        let v = self.current.cdf_at(y)?;
        let a = ScheduleSpec::default_schedule().alpha(self.step)?;
        update_in_place(&mut self.current, v, a, self.rho);
        monotone(&mut self.current);
        Ok(())
    }
}

/// Wraps a source and shifts its forward predictive by `shift` per refit.
/// Not a martingale; a control for the diagnostic.
pub struct DriftingSource<S> {
    inner: S,
    shift: f64,
}

impl<S: PpdSource> DriftingSource<S> {
    pub fn new(inner: S, shift: f64) -> Self {
        DriftingSource { inner, shift }
    }
}

impl<S> fmt::Debug for DriftingSource<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DriftingSource").field("shift", &self.shift).finish()
    }
}

impl<S: PpdSource> PpdSource for DriftingSource<S> {
    fn name(&self) -> String {
        format!("drifting({})", self.inner.name())
    }

    fn fit(&mut self, data: &Dataset) -> Result<()> {
        self.inner.fit(data)
    }

    fn ppd_at(&self, x: &[f64]) -> Result<GridDistribution> {
        self.inner.ppd_at(x)
    }

    fn y_scale(&self) -> ColumnScale {
        self.inner.y_scale()
    }

    fn forward_state(&self, x: &[f64]) -> Result<Box<dyn ForwardState>> {
        Ok(Box::new(DriftingForward {
            inner: self.inner.forward_state(x)?,
            shift: self.shift,
            offset: 0.0,
            shifted: self.inner.ppd_at(x)?,
        }))
    }
}

struct DriftingForward {
    inner: Box<dyn ForwardState>,
    shift: f64,
    offset: f64,
    shifted: GridDistribution,
}

impl ForwardState for DriftingForward {
    fn current(&self) -> &GridDistribution {
        &self.shifted
    }

    fn refit(&mut self, y: f64) -> Result<()> {
        // the inner process sees the sample in its own frame
        self.inner.refit(y - self.offset)?;
        self.offset += self.shift;
        let base = self.inner.current();
        let grid: Vec<f64> = base.grid().iter().map(|g| g + self.offset).collect();
        self.shifted = GridDistribution::new(grid, base.cdf().to_vec(), None, base.meta().clone())?;
        Ok(())
    }
}

/// One row of the quantile-quantile table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QqRow {
    pub k: usize,
    pub initial_u: f64,
    pub mean_refit_u: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QqTable {
    pub replicates: usize,
    pub rows: Vec<QqRow>,
}

impl QqTable {
    /// Largest `|mean_refit_u - initial_u|` at checkpoint `k`.
    pub fn max_deviation_at(&self, k: usize) -> Option<f64> {
        self.rows.iter().filter(|r| r.k == k).map(|r| (r.mean_refit_u - r.initial_u).abs()).reduce(f64::max)
    }

    /// Largest deviation per checkpoint, in checkpoint order.
    pub fn max_deviation_by_k(&self) -> Vec<(usize, f64)> {
        let mut m: BTreeMap<usize, f64> = BTreeMap::new();
        for r in &self.rows {
            let d = (r.mean_refit_u - r.initial_u).abs();
            let e = m.entry(r.k).or_insert(0.0);
            *e = e.max(d);
        }
        m.into_iter().collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("k,initial_u,mean_refit_u\n");
        for r in &self.rows {
            s.push_str(&format!("{},{},{}\n", r.k, r.initial_u, r.mean_refit_u));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticConfig {
    pub n_steps: usize,
    /// Steps at which the refit CDF is recorded; step 0 is always included.
    pub checkpoints: Vec<usize>,
    pub probe_quantiles: Vec<f64>,
    pub replicates: usize,
    pub seed: u64,
}

impl DiagnosticConfig {
    pub fn new(n_steps: usize) -> Self {
        DiagnosticConfig {
            n_steps,
            checkpoints: crate::engine::log_checkpoints(n_steps.max(1)).into_iter().filter(|&k| k <= n_steps).collect(),
            probe_quantiles: (1..10).map(|k| k as f64 / 10.0).collect(),
            replicates: 500,
            seed: 0,
        }
    }
}

/// Roll the source forward on its own samples and compare the average refit
/// CDF with the initial CDF at the initial quantiles.
pub fn forward_diagnostic(source: &dyn PpdSource, x: &[f64], cfg: &DiagnosticConfig) -> Result<QqTable> {
    if cfg.replicates == 0 {
        return Err(Error::domain("diagnostic needs at least one replicate"));
    }
    if let Some(q) = cfg.probe_quantiles.iter().find(|q| !(**q > 0.0 && **q < 1.0)) {
        return Err(Error::domain(format!("probe quantile {q} must lie in (0, 1)")));
    }
    let p0 = source.ppd_at(x)?;
    let probes: Vec<f64> = cfg.probe_quantiles.iter().map(|&q| p0.quantile_at(q)).collect::<Result<_>>()?;
    let initial: Vec<f64> = probes.iter().map(|&y| p0.cdf_value(y)).collect::<Result<_>>()?;
    let mut cps: Vec<usize> = cfg.checkpoints.iter().copied().filter(|&k| k >= 1 && k <= cfg.n_steps).collect();
    cps.sort_unstable();
    cps.dedup();
    if cfg.n_steps > 0 {
        // probe the capability before spawning replicates
        source.forward_state(x)?;
    }

    let per_rep: Vec<Vec<Vec<f64>>> = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| -> Result<Vec<Vec<f64>>> {
            let mut out = Vec::with_capacity(cps.len());
            if cps.is_empty() {
                return Ok(out);
            }
            let mut rng = stream_rng(cfg.seed, r as u64);
            let mut state = source.forward_state(x)?;
            let mut next = 0;
            for k in 1..=cfg.n_steps {
                let y = state.current().quantile_unchecked(open_uniform(&mut rng));
                state.refit(y)?;
                if next < cps.len() && cps[next] == k {
                    out.push(probes.iter().map(|&y| state.current().cdf_unchecked(y)).collect());
                    next += 1;
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let mut rows: Vec<QqRow> = initial.iter().map(|&u| QqRow { k: 0, initial_u: u, mean_refit_u: u }).collect();
    for (ci, &k) in cps.iter().enumerate() {
        for (pi, &u) in initial.iter().enumerate() {
            let mean = per_rep.iter().map(|r| r[ci][pi]).sum::<f64>() / cfg.replicates as f64;
            rows.push(QqRow { k, initial_u: u, mean_refit_u: mean });
        }
    }
    Ok(QqTable { replicates: cfg.replicates, rows })
}

/// Source selector as written on the command line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SourceSpec {
    File(PathBuf),
    Gaussian,
    CopulaReg,
}

impl std::str::FromStr for SourceSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(SourceSpec::Gaussian),
            "copula-reg" => Ok(SourceSpec::CopulaReg),
            _ => match s.strip_prefix("file:") {
                Some(p) if !p.is_empty() => Ok(SourceSpec::File(PathBuf::from(p))),
                _ => Err(Error::parse(format!("unknown source `{s}` (expected file:<path> | gaussian | copula-reg)"))),
            },
        }
    }
}

impl SourceSpec {
    pub fn build(&self) -> Result<Box<dyn PpdSource>> {
        Ok(match self {
            SourceSpec::File(p) => {
                let mut s = FileSource::open(p)?;
                let boot = if p.is_dir() { Some(p.clone()) } else { p.parent().map(Path::to_path_buf) };
                if let Some(b) = boot.filter(|b| b.join("boot_0").is_dir()) {
                    s = s.with_bootstrap_dir(b);
                }
                Box::new(s)
            }
            SourceSpec::Gaussian => Box::new(GaussianSource::new()),
            SourceSpec::CopulaReg => Box::new(CopulaRegressionSource::tuned()),
        })
    }
}
