//! Bootstrap and martingale-posterior intervals on funnel data, side by side.
//!
//!     cargo run --release --example bootstrap_funnel

use mpost::harness::{bootstrap_intervals, functional_truth, mp_interval, MpSettings, RhoSetting};
use mpost::simgen::gen_funnel;
use mpost::simgen::Truth;
use mpost::sources::{GaussianSource, PpdSource};
use mpost::{CopulaBandwidth, FunctionalSpec};

fn main() -> mpost::Result<()> {
    let data = gen_funnel(200, 5)?;
    let mut src = GaussianSource::new();
    src.fit(&data)?;
    let xs: Vec<Vec<f64>> = [0.1, 0.3, 0.5, 0.7, 0.9].iter().map(|&x| vec![x]).collect();
    let fs = [FunctionalSpec::Mean, FunctionalSpec::quantile(0.9)?];
    let boot = bootstrap_intervals(&src, &data, &xs, &fs, 50, 0.9, 1)?;
    let settings = MpSettings { rho: RhoSetting::Fixed(CopulaBandwidth::new(0.8)?), ..MpSettings::default() };
    for (x, bi) in xs.iter().zip(&boot.intervals) {
        let mp = mp_interval(&src, &data, x, &fs, &settings, 0.9, 2)?;
        for (b, m) in bi.iter().zip(&mp.intervals) {
            let truth = functional_truth(&Truth::Funnel, x, b.functional)?;
            println!(
                "x {:.1} {:>12}: truth {truth:+.3}  bootstrap [{:+.3}, {:+.3}]  mp [{:+.3}, {:+.3}]",
                x[0],
                b.functional.to_string(),
                b.lower,
                b.upper,
                m.lower,
                m.upper
            );
        }
    }
    Ok(())
}
