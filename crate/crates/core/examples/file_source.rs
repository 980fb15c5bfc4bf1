//! Posterior and bootstrap from predictive files laid out as an exporter
//! would write them: `x_<i>.json` at the root and `boot_<r>/x_<i>.json`
//! for refits on resamples.
//!
//!     cargo run --release --example file_source

use mpost::dataset::ColumnScale;
use mpost::grid::{write_ppd, DistMeta};
use mpost::harness::{bootstrap_intervals, mp_from_ppd, MpSettings, RhoSetting};
use mpost::simgen::gen_funnel;
use mpost::sources::{PpdSource, SourceSpec};
use mpost::{CopulaBandwidth, FunctionalSpec, GridDistribution};

fn main() -> mpost::Result<()> {
    let dir = std::env::temp_dir().join(format!("mpost-file-source-{}", std::process::id()));
    let resamples = 10;
    for r in 0..resamples {
        let b = dir.join(format!("boot_{r}"));
        std::fs::create_dir_all(&b).map_err(|e| mpost::Error::io(&b, e))?;
    }
    for (i, x) in [0.25f64, 0.75].iter().enumerate() {
        let center = (3.0 * x).sin();
        write_ppd(
            dir.join(format!("x_{i}.json")),
            &GridDistribution::normal(center, *x, 512, DistMeta::new(100, vec![*x]))?,
        )?;
        for r in 0..resamples {
            let jitter = 0.02 * (r as f64 - 4.5);
            let p = GridDistribution::normal(center + jitter, *x, 512, DistMeta::new(100, vec![*x]))?;
            write_ppd(dir.join(format!("boot_{r}/x_{i}.json")), &p)?;
        }
    }

    let src = SourceSpec::File(dir.clone()).build()?;
    let p0 = src.ppd_at(&[0.75])?;
    let settings = MpSettings { rho: RhoSetting::Fixed(CopulaBandwidth::new(0.8)?), ..MpSettings::default() };
    let out = mp_from_ppd(&p0, 100, 1, &[FunctionalSpec::Mean], ColumnScale::IDENTITY, &settings, 0.9, 0)?;
    let iv = out.intervals[0];
    println!("martingale posterior at x = 0.75: [{:+.4}, {:+.4}]", iv.lower, iv.upper);

    // the data only fixes the resample count; the refits come from boot_<r>
    let data = gen_funnel(100, 0)?;
    let boot = bootstrap_intervals(src.as_ref(), &data, &[vec![0.75]], &[FunctionalSpec::Mean], resamples, 0.9, 0)?;
    let b = boot.intervals[0][0];
    println!("bootstrap at x = 0.75:             [{:+.4}, {:+.4}]", b.lower, b.upper);
    std::fs::remove_dir_all(&dir).map_err(|e| mpost::Error::io(&dir, e))?;
    Ok(())
}
