//! Forward-refit QQ diagnostic on n = 25 Gamma(2, 2) points.
//!
//! The copula recursion is a martingale, so the average refit CDF stays on
//! the diagonal. A control that shifts its predictive by 0.1 per step does not.
//!
//!     cargo run --release --example martingale_diagnostic

use mpost::simgen::gamma_dataset;
use mpost::sources::{forward_diagnostic, CopulaRegressionSource, DiagnosticConfig, DriftingSource, PpdSource};

fn main() -> mpost::Result<()> {
    let data = gamma_dataset(25, 2.0, 2.0, 41)?;
    let mut src = CopulaRegressionSource::tuned();
    src.fit(&data)?;
    let x = [data.x()[0][0]];
    let cfg = DiagnosticConfig::new(100);

    let good = forward_diagnostic(&src, &x, &cfg)?;
    let bad = forward_diagnostic(&DriftingSource::new(src, 0.1), &x, &cfg)?;
    println!("   k  copula  drifting");
    for ((k, g), (_, b)) in good.max_deviation_by_k().into_iter().zip(bad.max_deviation_by_k()) {
        println!("{k:4}  {g:.4}  {b:.4}");
    }
    Ok(())
}
