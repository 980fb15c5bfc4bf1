//! Command-line front end.
//!
//! Exit codes: 0 success, 1 domain or numerical error, 2 usage error.
//! `--config <json>` supplies defaults for any long flag of the subcommand
//! (for `coverage` it is the study configuration); flags given on the
//! command line win. `MP_SEED` is used when `--seed` is absent.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::dataset::Dataset;
use crate::engine::{write_trace_csv, Estimator};
use crate::error::{Error, Result};
use crate::grid::{read_ppd, FunctionalSpec};
use crate::harness::{bootstrap_intervals, coverage_run, mp_from_ppd, CoverageConfig, MpSettings, RhoSetting};
use crate::schedule::ScheduleSpec;
use crate::simgen::Generator;
use crate::sources::{forward_diagnostic, DiagnosticConfig, DriftingSource, PpdSource, SourceSpec};
use crate::tuner::{tune_rho, TunerOptions};

#[derive(Parser, Debug)]
#[command(name = "mpost", version, about = "Martingale posteriors from predictive distributions")]
struct Cli {
    /// Worker threads (default: all cores). Never changes output.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// JSON file of flag defaults (for `coverage`: the study configuration).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Martingale posterior of functionals from one predictive.
    Run(RunArgs),
    /// Select the copula bandwidth by prequential log score.
    TuneRho(TuneArgs),
    /// Forward-refit quantile-quantile diagnostic.
    Diagnose(DiagnoseArgs),
    /// Write a simulated dataset as CSV.
    Simulate(SimulateArgs),
    /// Coverage study driven by `--config`.
    Coverage(CoverageArgs),
    /// Bootstrap intervals from a refit-capable source.
    Bootstrap(BootstrapArgs),
}

#[derive(Args, Debug, Clone)]
struct InputArgs {
    /// Predictive file (schema v1).
    #[arg(long, conflicts_with_all = ["source", "data"])]
    ppd: Option<PathBuf>,
    /// `file:<path> | gaussian | copula-reg`, fitted to `--data`.
    #[arg(long)]
    source: Option<String>,
    /// Training CSV (header `y,x1..xd`).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Comma-separated raw feature vector.
    #[arg(long, allow_hyphen_values = true)]
    x: Option<String>,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Number of chains.
    #[arg(long = "B", default_value_t = crate::engine::DEFAULT_CHAINS)]
    chains: usize,
    /// Forward steps per chain.
    #[arg(long = "N", default_value_t = crate::engine::DEFAULT_STEPS)]
    steps: usize,
    #[arg(long, default_value = "default")]
    schedule: String,
    /// `auto` or a value in (0, 1).
    #[arg(long, default_value = "auto", allow_hyphen_values = true)]
    rho: String,
    /// Repeatable: mean | variance | quantile:<p> | cdf:<y>.
    #[arg(long = "functional", default_value = "quantile:0.5")]
    functionals: Vec<String>,
    #[arg(long, default_value_t = crate::engine::DEFAULT_LEVEL)]
    level: f64,
    #[arg(long, default_value = "empirical")]
    estimator: String,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 1000)]
    tuning_size: usize,
    /// PosteriorResult JSON (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-step chain traces as CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Include wall time in the JSON (output then varies between runs).
    #[arg(long)]
    timing: bool,
}

#[derive(Args, Debug)]
struct TuneArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, default_value = "default")]
    schedule: String,
    #[arg(long, default_value_t = 1000)]
    tuning_size: usize,
    #[arg(long, default_value_t = 5)]
    shuffles: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Score curve CSV (default: stdout after the rho line).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DiagnoseArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, default_value_t = 100)]
    steps: usize,
    #[arg(long, default_value_t = 500)]
    replicates: usize,
    /// Wrap the source in a non-martingale control shifting by this much per step.
    #[arg(long, allow_hyphen_values = true)]
    drift: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// QQ table CSV (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long)]
    kind: String,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Spline only: feature count.
    #[arg(long)]
    features: Option<usize>,
    /// Spline only: number of signal features.
    #[arg(long)]
    signal: Option<usize>,
    /// CSV path (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CoverageArgs {
    #[arg(long)]
    replications: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Report CSV (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON summary.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BootstrapArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long = "functional", default_value = "mean")]
    functionals: Vec<String>,
    #[arg(long, default_value_t = 20)]
    resamples: usize,
    #[arg(long, default_value_t = crate::engine::DEFAULT_LEVEL)]
    level: f64,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

const SUBCOMMANDS: [&str; 6] = ["run", "tune-rho", "diagnose", "simulate", "coverage", "bootstrap"];

/// Parse `args` (including the program name) and execute. Returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    match execute(args) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("{msg}");
            2
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn parse(args: &[OsString]) -> CliResult<Option<Cli>> {
    match Cli::try_parse_from(args) {
        Ok(c) => Ok(Some(c)),
        Err(e) if e.use_stderr() => Err(Failure::Usage(e.render().to_string())),
        Err(e) => {
            // --help / --version
            print!("{}", e.render());
            Ok(None)
        }
    }
}

fn execute(args: Vec<OsString>) -> CliResult<()> {
    // required flags may come from the config file, so merge before parsing
    let args = match raw_config_path(&args) {
        Some(path) if subcommand_of(&args) != Some("coverage") => merge_config(&args, &path)?,
        _ => args,
    };
    let Some(cli) = parse(&args)? else {
        return Ok(());
    };
    let threads = cli.threads;
    if threads == Some(0) {
        return Err(Failure::Usage("--threads must be at least 1".into()));
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(k) = threads {
        builder = builder.num_threads(k);
    }
    let pool = builder.build().map_err(|e| Failure::Run(Error::Numerical(format!("thread pool: {e}"))))?;
    let config = cli.config.clone();
    pool.install(move || dispatch(cli.command, config.as_deref()))
}

fn raw_config_path(args: &[OsString]) -> Option<PathBuf> {
    let mut it = args.iter().skip(1);
    while let Some(a) = it.next() {
        let a = a.to_str()?;
        if a == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Some(PathBuf::from(p));
        }
    }
    None
}

fn subcommand_of(args: &[OsString]) -> Option<&'static str> {
    args.iter().skip(1).filter_map(|a| a.to_str()).find_map(|a| SUBCOMMANDS.iter().copied().find(|s| *s == a))
}

/// Insert config-file flags after the subcommand name, skipping any flag the
/// command line already sets.
fn merge_config(args: &[OsString], path: &Path) -> CliResult<Vec<OsString>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::parse(e.to_string()).at(path))?;
    let obj = value.as_object().ok_or_else(|| Error::parse("config must be a JSON object of flag values").at(path))?;
    let given: Vec<String> = args
        .iter()
        .filter_map(|a| a.to_str())
        .filter_map(|a| a.strip_prefix("--"))
        .map(|a| a.split('=').next().unwrap_or(a).to_string())
        .collect();
    let mut extra: Vec<OsString> = Vec::new();
    for (key, v) in obj {
        let flag = key.replace('_', "-");
        if given.iter().any(|g| g == &flag) || flag == "config" {
            continue;
        }
        let values: Vec<&serde_json::Value> = match v {
            serde_json::Value::Array(a) => a.iter().collect(),
            other => vec![other],
        };
        for item in values {
            match item {
                serde_json::Value::Bool(true) => extra.push(format!("--{flag}").into()),
                serde_json::Value::Bool(false) | serde_json::Value::Null => {}
                serde_json::Value::String(s) => extra.push(format!("--{flag}={s}").into()),
                serde_json::Value::Number(n) => extra.push(format!("--{flag}={n}").into()),
                _ => return Err(Error::parse(format!("config key `{key}` must be a scalar or array")).at(path).into()),
            }
        }
    }
    let pos = args
        .iter()
        .position(|a| a.to_str().is_some_and(|s| SUBCOMMANDS.contains(&s)))
        .ok_or_else(|| Failure::Usage("missing subcommand".into()))?;
    let mut out = args[..=pos].to_vec();
    out.extend(extra);
    out.extend_from_slice(&args[pos + 1..]);
    Ok(out)
}

fn seed_or_env(seed: Option<u64>) -> CliResult<u64> {
    if let Some(s) = seed {
        return Ok(s);
    }
    match std::env::var("MP_SEED") {
        Ok(v) => {
            v.trim().parse().map_err(|_| Failure::Usage(format!("MP_SEED must be a non-negative integer, got `{v}`")))
        }
        Err(_) => Ok(0),
    }
}

fn parse_functionals(raw: &[String]) -> CliResult<Vec<FunctionalSpec>> {
    Ok(raw.iter().map(|s| s.parse()).collect::<Result<Vec<_>>>()?)
}

fn parse_x(raw: Option<&str>) -> CliResult<Vec<f64>> {
    match raw {
        None => Ok(Vec::new()),
        Some(s) => s
            .split(',')
            .map(|t| {
                t.trim().parse::<f64>().map_err(|_| Failure::Run(Error::parse(format!("--x: `{t}` is not a number"))))
            })
            .collect(),
    }
}

/// The predictive (standardized units), training size, feature count and
/// label scale named by the input flags.
struct Input {
    p0: crate::grid::GridDistribution,
    n_train: usize,
    dim: usize,
    scale: crate::dataset::ColumnScale,
}

fn fitted_source(input: &InputArgs) -> CliResult<(Box<dyn PpdSource>, Dataset)> {
    let (Some(src), Some(data)) = (&input.source, &input.data) else {
        return Err(Failure::Usage("this subcommand needs --source <spec> and --data <csv>".into()));
    };
    let spec: SourceSpec = src.parse()?;
    let data = Dataset::read_csv(data)?;
    let mut s = spec.build()?;
    s.fit(&data)?;
    Ok((s, data))
}

fn load_input(input: &InputArgs) -> CliResult<Input> {
    if let Some(p) = &input.ppd {
        let p0 = read_ppd(p)?;
        let n_train = p0.meta().n_train;
        let dim = p0.meta().x.len().max(1);
        return Ok(Input { p0, n_train, dim, scale: crate::dataset::ColumnScale::IDENTITY });
    }
    if input.source.is_none() {
        return Err(Failure::Usage("give either --ppd <file> or --source <spec> --data <csv>".into()));
    }
    let (s, data) = fitted_source(input)?;
    let x = parse_x(input.x.as_deref())?;
    Ok(Input { p0: s.ppd_at(&x)?, n_train: data.n(), dim: data.d(), scale: s.y_scale() })
}

fn write_or_print(path: Option<&Path>, text: &str) -> CliResult<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::io(p, e).into()),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes()).and_then(|_| out.flush()).map_err(|e| Error::io("<stdout>", e).into())
        }
    }
}

fn dispatch(cmd: Command, config: Option<&Path>) -> CliResult<()> {
    match cmd {
        Command::Run(a) => cmd_run(a),
        Command::TuneRho(a) => cmd_tune(a),
        Command::Diagnose(a) => cmd_diagnose(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Coverage(a) => cmd_coverage(a, config),
        Command::Bootstrap(a) => cmd_bootstrap(a),
    }
}

fn cmd_run(a: RunArgs) -> CliResult<()> {
    let seed = seed_or_env(a.seed)?;
    let functionals = parse_functionals(&a.functionals)?;
    let input = load_input(&a.input)?;
    let settings = MpSettings {
        chains: a.chains,
        steps: a.steps,
        schedule: a.schedule.clone(),
        rho: a.rho.parse::<RhoSetting>()?,
        estimator: a.estimator.parse::<Estimator>()?,
        tuner: TunerOptions { tuning_size: a.tuning_size, ..TunerOptions::default() },
    };
    let start = Instant::now();
    let outcome =
        mp_from_ppd(&input.p0, input.n_train, input.dim, &functionals, input.scale, &settings, a.level, seed)?;
    let mut posterior = outcome.posterior;
    if a.timing {
        posterior.wall_time_secs = Some(start.elapsed().as_secs_f64());
    }
    if let Some(path) = &a.trace {
        // same seed, so the rerun follows the same chains
        let mut cfg = posterior.config.clone();
        cfg.functionals = functionals.iter().map(|&f| input.scale.functional_forward(f)).collect();
        cfg.checkpoints = Some(crate::engine::log_checkpoints(cfg.steps));
        let (_, chains) = crate::engine::run_posterior_with_chains(&input.p0, &cfg)?;
        let mut buf = Vec::new();
        write_trace_csv(&mut buf, &chains).map_err(|e| Error::io(path, e))?;
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))?;
    }
    let json = posterior.to_json() + "\n";
    write_or_print(a.out.as_deref(), &json)?;
    if a.out.is_some() {
        for f in &posterior.functionals {
            println!(
                "{}: mean {:.6} sd {:.6} {}% interval [{:.6}, {:.6}] (rho {})",
                f.functional,
                f.mean,
                f.sd,
                f.level * 100.0,
                f.lower,
                f.upper,
                posterior.config.rho.get()
            );
        }
    }
    Ok(())
}

fn cmd_tune(a: TuneArgs) -> CliResult<()> {
    let seed = seed_or_env(a.seed)?;
    let input = load_input(&a.input)?;
    let schedule = ScheduleSpec::parse_with_dim(&a.schedule, input.dim)?;
    let opts = TunerOptions { tuning_size: a.tuning_size, shuffles: a.shuffles, ..TunerOptions::default() };
    let t = tune_rho(&input.p0, &schedule, &opts, seed)?;
    let flag = if t.uninformative { " (uninformative: single tuning point)" } else { "" };
    println!("rho={} score={}{flag}", t.rho.get(), t.score);
    write_or_print(a.out.as_deref(), &t.curve_csv())
}

fn cmd_diagnose(a: DiagnoseArgs) -> CliResult<()> {
    let seed = seed_or_env(a.seed)?;
    let (source, _) = fitted_source(&a.input)?;
    let x = parse_x(a.input.x.as_deref())?;
    let mut cfg = DiagnosticConfig::new(a.steps);
    cfg.replicates = a.replicates;
    cfg.seed = seed;
    let table = match a.drift {
        Some(shift) => forward_diagnostic(&DriftingSource::new(source, shift), &x, &cfg)?,
        None => forward_diagnostic(source.as_ref(), &x, &cfg)?,
    };
    write_or_print(a.out.as_deref(), &table.to_csv())?;
    if a.out.is_some() {
        for (k, d) in table.max_deviation_by_k() {
            println!("k={k} max_dev={d:.5}");
        }
    }
    Ok(())
}

fn cmd_simulate(a: SimulateArgs) -> CliResult<()> {
    let seed = seed_or_env(a.seed)?;
    let mut g = Generator::parse_kind(&a.kind)?;
    if let Generator::Spline { features, signal, .. } = &mut g {
        if let Some(f) = a.features {
            *features = f;
        }
        if let Some(s) = a.signal {
            *signal = s;
        }
    } else if a.features.is_some() || a.signal.is_some() {
        return Err(Failure::Usage("--features and --signal apply to --kind spline only".into()));
    }
    let sim = g.generate(a.n, seed)?;
    write_or_print(a.out.as_deref(), &sim.data.to_csv())
}

fn cmd_coverage(a: CoverageArgs, config: Option<&Path>) -> CliResult<()> {
    let Some(path) = config else {
        return Err(Failure::Usage("coverage needs --config <json>".into()));
    };
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut cfg: CoverageConfig = serde_json::from_str(&text).map_err(|e| Error::parse(e.to_string()).at(path))?;
    if let Some(r) = a.replications {
        cfg.replications = r;
    }
    if a.seed.is_some() || std::env::var_os("MP_SEED").is_some() {
        cfg.seed = seed_or_env(a.seed)?;
    }
    let report = coverage_run(&cfg)?;
    for f in &report.failures {
        eprintln!("warning: {f}");
    }
    write_or_print(a.out.as_deref(), &report.to_csv())?;
    if let Some(s) = &a.summary {
        std::fs::write(s, report.to_json() + "\n").map_err(|e| Error::io(s, e))?;
    }
    Ok(())
}

fn cmd_bootstrap(a: BootstrapArgs) -> CliResult<()> {
    let seed = seed_or_env(a.seed)?;
    let functionals = parse_functionals(&a.functionals)?;
    let (source, data) = fitted_source(&a.input)?;
    let x = parse_x(a.input.x.as_deref())?;
    let out = bootstrap_intervals(source.as_ref(), &data, &[x], &functionals, a.resamples, a.level, seed)?;
    let json = serde_json::to_string_pretty(&out).expect("serializes") + "\n";
    write_or_print(a.out.as_deref(), &json)
}
