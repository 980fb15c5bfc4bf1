//! Coverage study from a JSON configuration, printed as CSV.
//!
//!     cargo run --release --example coverage_study -- [config.json]
//!
//! Without an argument, runs the analytic spline baseline on n = 300 rows
//! with one signal feature and then martingale posterior vs bootstrap on
//! funnel data.

use mpost::harness::{coverage_run, CoverageConfig};

const SPLINE: &str = r#"{
    "methods": ["optimal"],
    "data": {"generator": {"kind": "spline", "features": 30, "signal": 1}},
    "n": 300,
    "replications": 20
}"#;

const FUNNEL: &str = r#"{
    "methods": ["mp", "bootstrap"],
    "data": {"generator": {"kind": "funnel"}},
    "n": 100,
    "replications": 4,
    "functionals": ["mean", "quantile:0.9"],
    "probes": [[0.2], [0.5], [0.8]],
    "source": "gaussian"
}"#;

fn main() -> mpost::Result<()> {
    let configs: Vec<String> = match std::env::args().nth(1) {
        Some(path) => {
            vec![std::fs::read_to_string(&path).map_err(|e| mpost::Error::Io { path: path.into(), source: e })?]
        }
        None => vec![SPLINE.into(), FUNNEL.into()],
    };
    for text in configs {
        let cfg: CoverageConfig =
            serde_json::from_str(&text).map_err(|e| mpost::Error::Parse { path: None, msg: e.to_string() })?;
        let report = coverage_run(&cfg)?;
        print!("{}", report.to_csv());
        for f in &report.failures {
            eprintln!("failed cell: {f}");
        }
    }
    Ok(())
}
