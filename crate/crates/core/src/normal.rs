//! Standard-normal distribution functions and the bivariate Gaussian copula.
//!
//! `H_rho(u, v)` is the conditional distribution function of the Gaussian
//! copula with correlation `rho`,
//!
//! ```text
//! H_rho(u, v) = Phi((Phi^-1(u) - rho * Phi^-1(v)) / sqrt(1 - rho^2))
//! ```
//!
//! and `c_rho(u, v)` its density (the derivative of `H_rho` in `u`). Every
//! predictive update in the crate goes through these two kernels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard-normal CDF, accurate to a few ulps over the whole real line.
///
/// Non-finite input is rejected.
pub fn std_normal_cdf(z: f64) -> Result<f64> {
    if !z.is_finite() {
        return Err(Error::domain(format!("std_normal_cdf: input {z} is not finite")));
    }
    Ok(phi(z))
}

/// Standard-normal quantile for `u` in the open unit interval.
///
/// Callers that may hold CDF values at exactly 0 or 1 must clamp first
/// (see [`crate::grid::clamp_unit`]).
pub fn std_normal_quantile(u: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::domain(format!("std_normal_quantile: {u} is outside the open interval (0, 1)")));
    }
    Ok(phi_inv(u))
}

/// Standard-normal density.
#[inline]
pub fn std_normal_pdf(z: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * z * z).exp()
}

/// Unchecked CDF used on hot paths.
#[inline]
pub(crate) fn phi(z: f64) -> f64 {
    0.5 * libm::erfc(-z * std::f64::consts::FRAC_1_SQRT_2)
}

/// Unchecked quantile used on hot paths; `u` must lie in (0, 1).
///
/// Acklam's rational approximation (relative error below 1.2e-9) followed by
/// one Halley refinement against the erfc-based CDF. The lower half is
/// computed directly and the upper half by reflection, which is exact because
/// `1 - u` is representable for `u >= 0.5`.
#[inline]
pub(crate) fn phi_inv(u: f64) -> f64 {
    if u > 0.5 {
        return -phi_inv_lower(1.0 - u);
    }
    phi_inv_lower(u)
}

#[allow(clippy::excessive_precision)]
fn phi_inv_lower(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00, 3.754408661907416e+00];
    const P_LOW: f64 = 0.02425;

    if p == 0.5 {
        return 0.0;
    }
    let z = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    };
    // Halley step: e = (Phi(z) - p) / phi(z)
    let e = (phi(z) - p) / std_normal_pdf(z);
    z - e / (1.0 + 0.5 * z * e)
}

/// Correlation parameter of the Gaussian copula kernel, strictly inside (0, 1).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct CopulaBandwidth(f64);

impl CopulaBandwidth {
    pub fn new(rho: f64) -> Result<Self> {
        if rho > 0.0 && rho < 1.0 {
            Ok(CopulaBandwidth(rho))
        } else {
            Err(Error::domain(format!("copula bandwidth rho = {rho} must lie in the open interval (0, 1)")))
        }
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for CopulaBandwidth {
    type Error = Error;

    fn try_from(v: f64) -> Result<Self> {
        CopulaBandwidth::new(v)
    }
}

impl From<CopulaBandwidth> for f64 {
    fn from(b: CopulaBandwidth) -> f64 {
        b.0
    }
}

/// Precomputed constants of the copula kernel for a fixed conditioning value
/// `v`. The update loop evaluates the kernel at every grid node for one `v`,
/// so `Phi^-1(v)` and the `rho` terms are hoisted out of the loop.
#[derive(Debug, Clone, Copy)]
pub(crate) struct CopulaKernel {
    rho: f64,
    rho2: f64,
    z_v: f64,
    inv_sd: f64,
    inv_var: f64,
}

impl CopulaKernel {
    /// `v` must already be clamped into (0, 1).
    #[inline]
    pub(crate) fn new(v: f64, rho: CopulaBandwidth) -> Self {
        let rho = rho.get();
        let rho2 = rho * rho;
        let var = 1.0 - rho2;
        CopulaKernel { rho, rho2, z_v: phi_inv(v), inv_sd: 1.0 / var.sqrt(), inv_var: 1.0 / var }
    }

    /// `H_rho(u, v)` given `z_u = Phi^-1(u)`.
    #[inline]
    pub(crate) fn h_from_score(&self, z_u: f64) -> f64 {
        phi((z_u - self.rho * self.z_v) * self.inv_sd)
    }

    /// `c_rho(u, v)` given `z_u = Phi^-1(u)`.
    #[inline]
    pub(crate) fn density_from_score(&self, z_u: f64) -> f64 {
        let q = self.rho2 * (z_u * z_u + self.z_v * self.z_v) - 2.0 * self.rho * z_u * self.z_v;
        self.inv_sd * (-0.5 * q * self.inv_var).exp()
    }
}

fn check_open_unit(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x < 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} = {x} must lie in (0, 1)")))
    }
}

/// Conditional distribution function `H_rho(u, v)` of the Gaussian copula.
pub fn copula_h(u: f64, v: f64, rho: CopulaBandwidth) -> Result<f64> {
    check_open_unit("u", u)?;
    check_open_unit("v", v)?;
    Ok(CopulaKernel::new(v, rho).h_from_score(phi_inv(u)))
}

/// Gaussian copula density `c_rho(u, v)`; symmetric in its arguments.
pub fn copula_density(u: f64, v: f64, rho: CopulaBandwidth) -> Result<f64> {
    check_open_unit("u", u)?;
    check_open_unit("v", v)?;
    Ok(CopulaKernel::new(v, rho).density_from_score(phi_inv(u)))
}
