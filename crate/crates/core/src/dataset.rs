//! Tabular regression data `(y_i, x_i)` with per-column standardization.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::FunctionalSpec;

/// Mean and sd of one column; a constant column gets sd 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnScale {
    pub mean: f64,
    pub sd: f64,
}

impl ColumnScale {
    fn of(values: impl Iterator<Item = f64> + Clone) -> Self {
        let n = values.clone().count() as f64;
        let mean = values.clone().sum::<f64>() / n;
        let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        let sd = var.sqrt();
        ColumnScale { mean, sd: if sd > 1e-12 { sd } else { 1.0 } }
    }

    pub fn forward(&self, v: f64) -> f64 {
        (v - self.mean) / self.sd
    }

    pub fn inverse(&self, z: f64) -> f64 {
        self.mean + self.sd * z
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub y: ColumnScale,
    pub x: Vec<ColumnScale>,
}

impl Standardization {
    pub fn x_forward(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.x).map(|(v, s)| s.forward(*v)).collect()
    }
}

impl ColumnScale {
    pub const IDENTITY: ColumnScale = ColumnScale { mean: 0.0, sd: 1.0 };

    /// The functional in standardized label units.
    pub fn functional_forward(&self, f: FunctionalSpec) -> FunctionalSpec {
        match f {
            FunctionalSpec::CdfAt(y) => FunctionalSpec::CdfAt(self.forward(y)),
            other => other,
        }
    }

    /// A functional value computed in standardized units, in original units.
    pub fn value_inverse(&self, f: FunctionalSpec, v: f64) -> f64 {
        match f {
            FunctionalSpec::Mean | FunctionalSpec::Quantile(_) => self.inverse(v),
            FunctionalSpec::Variance => self.sd * self.sd * v,
            FunctionalSpec::CdfAt(_) => v,
        }
    }

    /// A functional value in original units, in standardized units.
    pub fn value_forward(&self, f: FunctionalSpec, v: f64) -> f64 {
        match f {
            FunctionalSpec::Mean | FunctionalSpec::Quantile(_) => self.forward(v),
            FunctionalSpec::Variance => v / (self.sd * self.sd),
            FunctionalSpec::CdfAt(_) => v,
        }
    }
}

/// Raw rows plus the standardization fitted to them.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    y: Vec<f64>,
    x: Vec<Vec<f64>>,
    names: Option<Vec<String>>,
    scale: Standardization,
}

impl Dataset {
    pub fn new(y: Vec<f64>, x: Vec<Vec<f64>>) -> Result<Self> {
        let n = y.len();
        if n < 2 {
            return Err(Error::domain(format!("dataset needs at least 2 rows, got {n}")));
        }
        if x.len() != n {
            return Err(Error::domain(format!("{n} labels but {} feature rows", x.len())));
        }
        let d = x[0].len();
        if d == 0 {
            return Err(Error::domain("dataset needs at least one feature column"));
        }
        if let Some(i) = x.iter().position(|r| r.len() != d) {
            return Err(Error::domain(format!("row {i} has {} features, expected {d}", x[i].len())));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::domain(format!("label in row {i} is not finite")));
        }
        if let Some(i) = x.iter().position(|r| r.iter().any(|v| !v.is_finite())) {
            return Err(Error::domain(format!("features in row {i} are not finite")));
        }
        let scale = Standardization {
            y: ColumnScale::of(y.iter().copied()),
            x: (0..d).map(|j| ColumnScale::of(x.iter().map(move |r| r[j]))).collect(),
        };
        Ok(Dataset { y, x, names: None, scale })
    }

    pub fn with_names(mut self, names: Vec<String>) -> Self {
        self.names = Some(names);
        self
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn d(&self) -> usize {
        self.x[0].len()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn x(&self) -> &[Vec<f64>] {
        &self.x
    }

    pub fn names(&self) -> Option<&[String]> {
        self.names.as_deref()
    }

    pub fn scale(&self) -> &Standardization {
        &self.scale
    }

    pub fn y_std(&self) -> Vec<f64> {
        self.y.iter().map(|&v| self.scale.y.forward(v)).collect()
    }

    pub fn x_std(&self) -> Vec<Vec<f64>> {
        self.x.iter().map(|r| self.scale.x_forward(r)).collect()
    }

    /// Rows selected by index (repeats allowed), keeping the current
    /// scaling so resamples share units with their parent.
    pub fn subset(&self, idx: &[usize]) -> Result<Dataset> {
        if let Some(&bad) = idx.iter().find(|&&i| i >= self.n()) {
            return Err(Error::domain(format!("row index {bad} out of range for {} rows", self.n())));
        }
        let y = idx.iter().map(|&i| self.y[i]).collect();
        let x = idx.iter().map(|&i| self.x[i].clone()).collect();
        let mut d = Dataset::new(y, x)?;
        d.names = self.names.clone();
        d.scale = self.scale.clone();
        Ok(d)
    }

    /// Recompute the standardization from the current rows.
    pub fn restandardized(mut self) -> Self {
        let d = self.d();
        self.scale = Standardization {
            y: ColumnScale::of(self.y.iter().copied()),
            x: (0..d).map(|j| ColumnScale::of(self.x.iter().map(move |r| r[j]))).collect(),
        };
        self
    }

    /// The dataset with one row appended, keeping the current scaling.
    pub fn appended(&self, y: f64, x: Vec<f64>) -> Result<Dataset> {
        if x.len() != self.d() {
            return Err(Error::domain(format!("appended row has {} features, expected {}", x.len(), self.d())));
        }
        let mut out = self.clone();
        out.y.push(y);
        out.x.push(x);
        Ok(out)
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["y".to_string()];
        header.extend((1..=self.d()).map(|j| format!("x{j}")));
        w.write_record(&header).expect("in-memory write");
        for (y, x) in self.y.iter().zip(&self.x) {
            let mut rec = vec![y.to_string()];
            rec.extend(x.iter().map(|v| v.to_string()));
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
    }

    /// Parse CSV with the label in the first column (header required).
    pub fn from_csv(text: &str) -> Result<Dataset> {
        let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let names: Vec<String> =
            r.headers().map_err(|e| Error::parse(e.to_string()))?.iter().map(str::to_string).collect();
        let mut y = Vec::new();
        let mut x = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| Error::parse(e.to_string()))?;
            let vals = rec
                .iter()
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|e| Error::parse(format!("row {}: {e}", i + 1)))?;
            if vals.len() < 2 {
                return Err(Error::parse(format!("row {} has fewer than 2 columns", i + 1)));
            }
            y.push(vals[0]);
            x.push(vals[1..].to_vec());
        }
        Ok(Dataset::new(y, x)?.with_names(names))
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Dataset> {
        let p = path.as_ref();
        let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
        Dataset::from_csv(&text).map_err(|e| e.at(p))
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let p = path.as_ref();
        std::fs::write(p, self.to_csv()).map_err(|e| Error::io(p, e))
    }
}
