//! Conjugate Bayesian additive B-spline regression.
//!
//! `y = sum_j B(x_j)' theta_j + e`, `e ~ N(0, sigma2)`, `theta_j ~ N(0, tau2 I)`.
//! With known `sigma2` the coefficient posterior is Gaussian in closed form,
//! so credible intervals for each component `f_j(x) = B(x)' theta_j` are exact.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::normal::std_normal_quantile;

/// Clamped knot vector with equally spaced interior knots on `[lo, hi]`.
pub fn clamped_uniform_knots(lo: f64, hi: f64, basis_size: usize, degree: usize) -> Result<Vec<f64>> {
    if basis_size < degree + 1 {
        return Err(Error::domain(format!("basis size {basis_size} is smaller than degree + 1 = {}", degree + 1)));
    }
    if !(hi > lo) {
        return Err(Error::domain(format!("knot range [{lo}, {hi}] is empty")));
    }
    let interior = basis_size - degree - 1;
    let mut k = vec![lo; degree + 1];
    k.extend((1..=interior).map(|i| lo + (hi - lo) * i as f64 / (interior + 1) as f64));
    k.extend(std::iter::repeat_n(hi, degree + 1));
    Ok(k)
}

/// Basis values at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisEval {
    pub values: Vec<f64>,
    /// Set when `x` was outside the knot range and moved to its boundary.
    pub clamped: bool,
}

/// All `len(knots) - degree - 1` B-spline basis functions at `x` by the
/// Cox-de Boor recursion.
pub fn bspline_basis(x: f64, knots: &[f64], degree: usize) -> Result<BasisEval> {
    if knots.len() < 2 * (degree + 1) {
        return Err(Error::domain(format!("{} knots cannot carry a degree-{degree} basis", knots.len())));
    }
    if knots.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::domain("knot vector must be nondecreasing"));
    }
    if !x.is_finite() {
        return Err(Error::domain(format!("basis evaluated at non-finite x = {x}")));
    }
    let m = knots.len() - degree - 1;
    let (lo, hi) = (knots[degree], knots[m]);
    let clamped = x < lo || x > hi;
    let x = x.clamp(lo, hi);

    // span index s with knots[s] <= x < knots[s+1]; the right end belongs to the last span
    let s = if x >= hi {
        (degree..m).rev().find(|&i| knots[i] < knots[i + 1]).unwrap_or(m - 1)
    } else {
        knots.partition_point(|&k| k <= x) - 1
    };

    let mut n = vec![0.0; degree + 1];
    n[0] = 1.0;
    let mut left = vec![0.0; degree + 1];
    let mut right = vec![0.0; degree + 1];
    for j in 1..=degree {
        left[j] = x - knots[s + 1 - j];
        right[j] = knots[s + j] - x;
        let mut saved = 0.0;
        for r in 0..j {
            let denom = right[r + 1] + left[j - r];
            let temp = if denom > 0.0 { n[r] / denom } else { 0.0 };
            n[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        n[j] = saved;
    }
    let mut values = vec![0.0; m];
    for (r, v) in n.into_iter().enumerate() {
        values[s - degree + r] = v;
    }
    Ok(BasisEval { values, clamped })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineModelSpec {
    /// Number of additive components; one per feature column.
    pub components: usize,
    pub basis_size: usize,
    pub degree: usize,
    pub sigma2: f64,
    /// Prior coefficient variance; the prior covariance is `prior_var * I`.
    pub prior_var: f64,
    /// One knot vector per component.
    pub knots: Vec<Vec<f64>>,
}

impl SplineModelSpec {
    /// Twenty cubic basis functions per component on a shared knot range.
    pub fn new(components: usize, lo: f64, hi: f64) -> Result<Self> {
        let knots = clamped_uniform_knots(lo, hi, 20, 3)?;
        Ok(SplineModelSpec {
            components,
            basis_size: 20,
            degree: 3,
            sigma2: 0.5,
            prior_var: 1.0,
            knots: vec![knots; components],
        })
    }

    /// Knots spanning each feature's observed range.
    pub fn from_data(data: &Dataset) -> Result<Self> {
        let d = data.d();
        let mut spec = SplineModelSpec::new(d, -1.0, 1.0)?;
        for j in 0..d {
            let (lo, hi) =
                data.x().iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), r| (a.min(r[j]), b.max(r[j])));
            let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, hi + 0.5) };
            spec.knots[j] = clamped_uniform_knots(lo, hi, spec.basis_size, spec.degree)?;
        }
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.basis_size < self.degree + 1 {
            return Err(Error::domain("basis size must be at least degree + 1"));
        }
        if !(self.sigma2 > 0.0) {
            return Err(Error::domain(format!("noise variance {} must be positive", self.sigma2)));
        }
        if !(self.prior_var > 0.0) {
            return Err(Error::domain(format!("prior variance {} must be positive", self.prior_var)));
        }
        if self.knots.len() != self.components {
            return Err(Error::domain("need one knot vector per component"));
        }
        if let Some(k) = self.knots.iter().find(|k| k.len() != self.basis_size + self.degree + 1) {
            return Err(Error::domain(format!(
                "knot vector of length {} does not give {} basis functions",
                k.len(),
                self.basis_size
            )));
        }
        Ok(())
    }

    pub fn n_params(&self) -> usize {
        self.components * self.basis_size
    }

    /// Basis of component `j` at `x`.
    pub fn basis(&self, j: usize, x: f64) -> Result<BasisEval> {
        bspline_basis(x, &self.knots[j], self.degree)
    }

    /// Stacked design matrix, one row per feature vector.
    pub fn design(&self, xs: &[Vec<f64>]) -> Result<DMatrix<f64>> {
        let p = self.n_params();
        let mut m = DMatrix::zeros(xs.len(), p);
        for (i, row) in xs.iter().enumerate() {
            if row.len() != self.components {
                return Err(Error::domain(format!(
                    "row {i} has {} features, model has {} components",
                    row.len(),
                    self.components
                )));
            }
            for (j, &x) in row.iter().enumerate() {
                let b = self.basis(j, x)?;
                for (k, v) in b.values.into_iter().enumerate() {
                    m[(i, j * self.basis_size + k)] = v;
                }
            }
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPosterior {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// Posterior of `theta` under prior `N(0, I)`.
pub fn conjugate_posterior(design: &DMatrix<f64>, y: &DVector<f64>, sigma2: f64) -> Result<GaussianPosterior> {
    conjugate_posterior_with_prior(design, y, sigma2, 1.0)
}

/// Posterior of `theta` under prior `N(0, prior_var I)`.
pub fn conjugate_posterior_with_prior(
    design: &DMatrix<f64>,
    y: &DVector<f64>,
    sigma2: f64,
    prior_var: f64,
) -> Result<GaussianPosterior> {
    if design.nrows() != y.len() {
        return Err(Error::domain(format!("design has {} rows but y has {} entries", design.nrows(), y.len())));
    }
    if !(sigma2 > 0.0 && prior_var > 0.0) {
        return Err(Error::domain("noise and prior variances must be positive"));
    }
    if design.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::domain("design and labels must be finite"));
    }
    let p = design.ncols();
    let mut precision = design.transpose() * design / sigma2;
    for i in 0..p {
        precision[(i, i)] += 1.0 / prior_var;
    }
    let chol =
        precision.cholesky().ok_or_else(|| Error::Numerical("posterior precision is not positive definite".into()))?;
    let cov = chol.inverse();
    let cov = (&cov + cov.transpose()) * 0.5;
    let rhs = design.transpose() * y / sigma2;
    let mean = chol.solve(&rhs);
    Ok(GaussianPosterior { mean, cov })
}

/// A fitted additive spline model.
#[derive(Debug, Clone)]
pub struct SplineFit {
    pub spec: SplineModelSpec,
    pub posterior: GaussianPosterior,
}

impl SplineFit {
    /// Fit on raw features and labels.
    pub fn fit(spec: SplineModelSpec, data: &Dataset) -> Result<Self> {
        spec.validate()?;
        let design = spec.design(data.x())?;
        let y = DVector::from_column_slice(data.y());
        let posterior = conjugate_posterior_with_prior(&design, &y, spec.sigma2, spec.prior_var)?;
        Ok(SplineFit { spec, posterior })
    }

    /// The prior as a fit with no data.
    pub fn prior(spec: SplineModelSpec) -> Result<Self> {
        spec.validate()?;
        let p = spec.n_params();
        let posterior = GaussianPosterior { mean: DVector::zeros(p), cov: DMatrix::identity(p, p) * spec.prior_var };
        Ok(SplineFit { spec, posterior })
    }

    /// Posterior mean and sd of `f_j(x)`.
    pub fn component_moments(&self, j: usize, x: f64) -> Result<(f64, f64)> {
        if j >= self.spec.components {
            return Err(Error::domain(format!("component {j} out of range")));
        }
        let b = DVector::from_vec(self.spec.basis(j, x)?.values);
        let k = self.spec.basis_size;
        let m = self.posterior.mean.rows(j * k, k);
        let s = self.posterior.cov.view((j * k, j * k), (k, k));
        let var = (b.transpose() * s * &b)[(0, 0)];
        Ok((b.dot(&m), var.max(0.0).sqrt()))
    }
}

/// Central credible interval for `f_j(x)` at level `level`.
pub fn optimal_ci(fit: &SplineFit, j: usize, x: f64, level: f64) -> Result<(f64, f64)> {
    if !(0.0..1.0).contains(&level) {
        return Err(Error::domain(format!("credible level {level} must lie in [0, 1)")));
    }
    let (m, sd) = fit.component_moments(j, x)?;
    if level == 0.0 {
        return Ok((m, m));
    }
    let z = std_normal_quantile(0.5 * (1.0 + level))?;
    Ok((m - z * sd, m + z * sd))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partition_of_unity() {
        let k = clamped_uniform_knots(-2.5, 2.5, 20, 3).unwrap();
        for i in 0..=1000 {
            let x = -2.5 + 5.0 * i as f64 / 1000.0;
            let b = bspline_basis(x, &k, 3).unwrap();
            assert_eq!(b.values.len(), 20);
            assert!(!b.clamped);
            assert!(b.values.iter().all(|&v| v >= 0.0));
            assert!((b.values.iter().sum::<f64>() - 1.0).abs() <= 1e-12, "x={x}");
        }
    }

    #[test]
    fn boundaries() {
        let k = clamped_uniform_knots(0.0, 1.0, 20, 3).unwrap();
        let b = bspline_basis(0.0, &k, 3).unwrap();
        assert_eq!(b.values[0], 1.0);
        assert!(b.values[1..].iter().all(|&v| v == 0.0));
        let b = bspline_basis(1.0, &k, 3).unwrap();
        assert_eq!(b.values[19], 1.0);
        let b = bspline_basis(1.5, &k, 3).unwrap();
        assert!(b.clamped);
        assert_eq!(b.values[19], 1.0);
    }

    #[test]
    fn degree_zero_indicator() {
        let k: Vec<f64> = (0..=5).map(|i| i as f64).collect();
        let b = bspline_basis(2.5, &k, 0).unwrap();
        assert_eq!(b.values, vec![0.0, 0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn identity_design() {
        let x = DMatrix::<f64>::identity(4, 4);
        let y = DVector::from_element(4, 2.0);
        let post = conjugate_posterior(&x, &y, 1.0).unwrap();
        for i in 0..4 {
            assert!((post.mean[i] - 1.0).abs() < 1e-14);
            for j in 0..4 {
                let want = if i == j { 0.5 } else { 0.0 };
                assert!((post.cov[(i, j)] - want).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn empty_design_is_prior() {
        let x = DMatrix::<f64>::zeros(0, 3);
        let y = DVector::<f64>::zeros(0);
        let post = conjugate_posterior(&x, &y, 0.5).unwrap();
        assert_eq!(post.mean, DVector::zeros(3));
        assert_eq!(post.cov, DMatrix::identity(3, 3));
    }

    #[test]
    fn zero_level_is_point() {
        let spec = SplineModelSpec::new(1, -2.5, 2.5).unwrap();
        let fit = SplineFit::prior(spec).unwrap();
        let (lo, hi) = optimal_ci(&fit, 0, 0.3, 0.0).unwrap();
        assert_eq!(lo, hi);
    }

    #[test]
    fn prior_scaling_doubles_width_squared() {
        let mut spec = SplineModelSpec::new(2, -2.5, 2.5).unwrap();
        let a = optimal_ci(&SplineFit::prior(spec.clone()).unwrap(), 1, 0.7, 0.9).unwrap();
        spec.prior_var = 2.0;
        let b = optimal_ci(&SplineFit::prior(spec).unwrap(), 1, 0.7, 0.9).unwrap();
        let (wa, wb) = (a.1 - a.0, b.1 - b.0);
        assert!((wb * wb / (wa * wa) - 2.0).abs() < 1e-12);
    }
}
