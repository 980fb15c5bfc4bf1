//! Learning-rate schedules `alpha_i` of the copula update.
//!
//! The parametric family is `alpha_i = C (i + 1)^(-beta)`; the default
//! schedule is `(2 - 1/i) / (i + 1)`, which behaves like `2 / i`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Upper cap applied to parametric schedules so every update stays a convex
/// combination.
pub const ALPHA_CAP: f64 = 0.999;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    Default,
    Type1,
    Type2,
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleSpec {
    kind: ScheduleKind,
    c: f64,
    beta: f64,
    d: usize,
}

impl ScheduleSpec {
    pub fn default_schedule() -> Self {
        ScheduleSpec { kind: ScheduleKind::Default, c: 2.0, beta: 1.0, d: 1 }
    }

    /// `C = 10^(-(d-1)/(d+4))`, `beta = 1/2 + d/(d+4)`.
    pub fn type1(d: usize) -> Result<Self> {
        let df = check_dim(d)? as f64;
        Ok(ScheduleSpec {
            kind: ScheduleKind::Type1,
            c: 10f64.powf(-(df - 1.0) / (df + 4.0)),
            beta: 0.5 + df / (df + 4.0),
            d,
        })
    }

    /// `C = 10^(-2d/(d+4))`, `beta = d/(d+4)`.
    pub fn type2(d: usize) -> Result<Self> {
        let df = check_dim(d)? as f64;
        Ok(ScheduleSpec { kind: ScheduleKind::Type2, c: 10f64.powf(-2.0 * df / (df + 4.0)), beta: df / (df + 4.0), d })
    }

    pub fn custom(c: f64, beta: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::domain(format!("schedule constant C = {c} must be positive")));
        }
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(Error::domain(format!("schedule exponent beta = {beta} must lie in (0, 1]")));
        }
        Ok(ScheduleSpec { kind: ScheduleKind::Custom, c, beta, d: 1 })
    }

    /// Parse `default | type1 | type2 | custom:C=<r>,beta=<r>`; `d` is the
    /// feature dimension used by the type-1/type-2 presets.
    pub fn parse_with_dim(s: &str, d: usize) -> Result<Self> {
        let s = s.trim();
        match s {
            "default" => Ok(ScheduleSpec::default_schedule()),
            "type1" => ScheduleSpec::type1(d),
            "type2" => ScheduleSpec::type2(d),
            _ => {
                let body = s.strip_prefix("custom:").ok_or_else(|| {
                    Error::parse(format!(
                        "unknown schedule `{s}` (expected default | type1 | type2 | custom:C=<r>,beta=<r>)"
                    ))
                })?;
                let mut c = None;
                let mut beta = None;
                for part in body.split(',') {
                    let (k, v) = part
                        .split_once('=')
                        .ok_or_else(|| Error::parse(format!("schedule field `{part}` lacks `=`")))?;
                    let v: f64 = v
                        .trim()
                        .parse()
                        .map_err(|_| Error::parse(format!("schedule field `{part}` is not numeric")))?;
                    match k.trim() {
                        "C" | "c" => c = Some(v),
                        "beta" => beta = Some(v),
                        other => return Err(Error::parse(format!("unknown schedule field `{other}`"))),
                    }
                }
                match (c, beta) {
                    (Some(c), Some(b)) => ScheduleSpec::custom(c, b),
                    _ => Err(Error::parse("custom schedule needs both C and beta")),
                }
            }
        }
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Learning rate at update index `i >= 1`.
    pub fn alpha(&self, i: usize) -> Result<f64> {
        if i < 1 {
            return Err(Error::domain("learning-rate index must be at least 1"));
        }
        Ok(self.alpha_unchecked(i))
    }

    #[inline]
    pub(crate) fn alpha_unchecked(&self, i: usize) -> f64 {
        let fi = i as f64;
        match self.kind {
            ScheduleKind::Default => (2.0 - 1.0 / fi) / (fi + 1.0),
            _ => (self.c * (fi + 1.0).powf(-self.beta)).min(ALPHA_CAP),
        }
    }
}

fn check_dim(d: usize) -> Result<usize> {
    if d == 0 {
        Err(Error::domain("feature dimension d must be at least 1"))
    } else {
        Ok(d)
    }
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        ScheduleSpec::default_schedule()
    }
}

impl fmt::Display for ScheduleSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            ScheduleKind::Default => write!(f, "default"),
            ScheduleKind::Type1 => write!(f, "type1"),
            ScheduleKind::Type2 => write!(f, "type2"),
            ScheduleKind::Custom => write!(f, "custom:C={},beta={}", self.c, self.beta),
        }
    }
}

impl FromStr for ScheduleSpec {
    type Err = Error;

    /// Parses with `d = 1`; use [`ScheduleSpec::parse_with_dim`] when the
    /// feature dimension matters.
    fn from_str(s: &str) -> Result<Self> {
        ScheduleSpec::parse_with_dim(s, 1)
    }
}

#[derive(Serialize, Deserialize)]
struct ScheduleRepr {
    kind: ScheduleKind,
    #[serde(rename = "C")]
    c: f64,
    beta: f64,
    d: usize,
}

impl Serialize for ScheduleSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ScheduleRepr { kind: self.kind, c: self.c, beta: self.beta, d: self.d }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for ScheduleSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = ScheduleRepr::deserialize(d)?;
        let spec = match r.kind {
            ScheduleKind::Default => Ok(ScheduleSpec::default_schedule()),
            ScheduleKind::Type1 => ScheduleSpec::type1(r.d),
            ScheduleKind::Type2 => ScheduleSpec::type2(r.d),
            ScheduleKind::Custom => ScheduleSpec::custom(r.c, r.beta),
        };
        spec.map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_examples() {
        let s = ScheduleSpec::default_schedule();
        assert_eq!(s.alpha(1).unwrap(), 0.5);
        assert!((s.alpha(3).unwrap() - 5.0 / 12.0).abs() < 1e-15);
        assert!(s.alpha(0).is_err());
    }

    #[test]
    fn type1_d1() {
        let s = ScheduleSpec::type1(1).unwrap();
        assert!((s.c() - 1.0).abs() < 1e-15);
        assert!((s.beta() - 0.7).abs() < 1e-15);
        // 10^-0.7 via log/exp: exp(-0.7 ln 10)
        let want = (-0.7 * 10f64.ln()).exp();
        assert!((s.alpha(9).unwrap() - want).abs() < 1e-12);
        assert!((s.alpha(9).unwrap() - 0.19953).abs() < 1e-5);
    }

    #[test]
    fn type2_constants() {
        let s = ScheduleSpec::type2(4).unwrap();
        assert!((s.beta() - 0.5).abs() < 1e-15);
        assert!((s.c() - 0.1).abs() < 1e-15);
        let s = ScheduleSpec::type1(30).unwrap();
        assert!((s.beta() - (0.5 + 30.0 / 34.0)).abs() < 1e-15);
        assert!(s.beta() > 1.0, "type1 exceeds 1 for large d");
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(ScheduleSpec::type1(0).is_err());
        assert!(ScheduleSpec::custom(0.0, 0.5).is_err());
        assert!(ScheduleSpec::custom(1.0, 0.0).is_err());
        assert!(ScheduleSpec::custom(1.0, 1.2).is_err());
    }

    #[test]
    fn custom_is_capped() {
        let s = ScheduleSpec::custom(50.0, 0.1).unwrap();
        assert_eq!(s.alpha(1).unwrap(), ALPHA_CAP);
    }

    #[test]
    fn parse_forms() {
        assert_eq!("default".parse::<ScheduleSpec>().unwrap(), ScheduleSpec::default_schedule());
        assert_eq!(ScheduleSpec::parse_with_dim("type2", 8).unwrap(), ScheduleSpec::type2(8).unwrap());
        let c: ScheduleSpec = "custom:C=0.5,beta=0.75".parse().unwrap();
        assert_eq!((c.c(), c.beta()), (0.5, 0.75));
        assert_eq!(c.to_string(), "custom:C=0.5,beta=0.75");
        assert!("custom:C=0.5".parse::<ScheduleSpec>().is_err());
        assert!("fast".parse::<ScheduleSpec>().is_err());
    }

    #[test]
    fn strictly_decreasing_positive_below_one() {
        let specs = [
            ScheduleSpec::default_schedule(),
            ScheduleSpec::type1(1).unwrap(),
            ScheduleSpec::type1(8).unwrap(),
            ScheduleSpec::type2(3).unwrap(),
            ScheduleSpec::custom(0.9, 0.6).unwrap(),
        ];
        for s in specs {
            let mut prev = f64::INFINITY;
            let mut i = 1usize;
            while i <= 10_000_000 {
                let a = s.alpha(i).unwrap();
                assert!(a > 0.0 && a < 1.0, "{s} i={i}");
                // the default law has alpha(1) = alpha(2) = 1/2
                if i == 2 && s.kind() == ScheduleKind::Default {
                    assert_eq!(a, prev);
                } else {
                    assert!(a < prev, "{s} not decreasing at {i}");
                }
                prev = a;
                i = if i < 1000 { i + 1 } else { i * 3 / 2 };
            }
        }
    }

    #[test]
    fn square_summable_for_beta_above_half() {
        let decade_increments = |s: ScheduleSpec| -> Vec<f64> {
            let mut out = Vec::new();
            let mut total = 0.0;
            let mut last = 0.0;
            let mut next = 10usize;
            for i in 1..=1_000_000usize {
                total += s.alpha(i).unwrap().powi(2);
                if i == next {
                    out.push(total - last);
                    last = total;
                    next *= 10;
                }
            }
            out
        };
        // beta = 0.7: decade increments shrink by about 10^-0.4 each decade
        let inc = decade_increments(ScheduleSpec::custom(1.0, 0.7).unwrap());
        for w in inc.windows(2).skip(2) {
            let r = w[1] / w[0];
            assert!((r - 10f64.powf(-0.4)).abs() < 0.02, "ratio {r}");
        }
        let s = ScheduleSpec::custom(1.0, 0.7).unwrap();
        assert!(s.alpha(1_000_000).unwrap().powi(2) < 1e-6);
        // remaining tail bounded by C^2 / (2 beta - 1) * N^(1 - 2 beta)
        assert!(inc.iter().sum::<f64>() < 1.0 / 0.4 * 2f64.powf(-0.4) + 1.0);

        // beta = 1/2: each decade adds about ln 10, the series diverges
        let inc = decade_increments(ScheduleSpec::custom(1.0, 0.5).unwrap());
        for d in &inc[2..] {
            assert!((d - 10f64.ln()).abs() < 0.1, "decade increment {d}");
        }
    }

    #[test]
    fn serde_round_trip() {
        let s = ScheduleSpec::type1(5).unwrap();
        let j = serde_json::to_string(&s).unwrap();
        assert_eq!(serde_json::from_str::<ScheduleSpec>(&j).unwrap(), s);
    }
}
