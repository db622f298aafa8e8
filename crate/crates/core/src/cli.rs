//! Command-line interface: `fit` and `simulate`.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::error::{GeeError, Result};
use crate::io::{load_csv, ColumnSpec};
use crate::marginal::CorrelationStructure;
use crate::pipeline::{fit_dataset, Family, FitOptions};
use crate::simgen::{format_tables, run_monte_carlo, Example1Config, Example2Config, ExampleConfig, McConfig};
use crate::two_step::AlphaSpec;

#[derive(Debug, Parser)]
#[command(name = "splinegee", version, about = "Two-step spline GEE for clustered data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model to a clustered CSV dataset.
    Fit(FitArgs),
    /// Run a Monte Carlo study on one of the built-in designs.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// JSON file with `columns` and optional `options`; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub id: Option<String>,
    #[arg(long)]
    pub response: Option<String>,
    /// Comma-separated linear covariate columns.
    #[arg(long, value_delimiter = ',')]
    pub linear: Option<Vec<String>>,
    /// Comma-separated additive covariate columns.
    #[arg(long, value_delimiter = ',')]
    pub additive: Option<Vec<String>>,
    /// Min-max rescale additive columns to [0, 1].
    #[arg(long)]
    pub rescale: bool,
    #[arg(long)]
    pub family: Option<Family>,
    #[arg(long)]
    pub correlation: Option<CorrelationStructure>,
    /// Fixed working-correlation parameter; estimated when absent.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub degree: Option<usize>,
    #[arg(long)]
    pub level: Option<f64>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub example: u8,
    #[arg(long)]
    pub n: usize,
    /// Cluster size; example 2 defaults to floor(2 sqrt(n)), example 1 to 20.
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long, default_value_t = 200)]
    pub nsim: usize,
    #[arg(long, default_value = "ex")]
    pub correlation: CorrelationStructure,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    #[arg(long, default_value_t = 3)]
    pub degree: usize,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RunConfig {
    pub columns: Option<ColumnSpec>,
    #[serde(default)]
    pub options: FitOptions,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn run_fit(args: &FitArgs) -> Result<()> {
    let mut cfg: RunConfig = match &args.config {
        Some(p) => serde_json::from_str(&fs::read_to_string(p)?)?,
        None => RunConfig::default(),
    };
    let mut columns = cfg.columns.take().unwrap_or(ColumnSpec {
        id: "id".into(),
        response: "y".into(),
        linear: Vec::new(),
        additive: Vec::new(),
        rescale: false,
    });
    if let Some(v) = &args.id {
        columns.id = v.clone();
    }
    if let Some(v) = &args.response {
        columns.response = v.clone();
    }
    if let Some(v) = &args.linear {
        columns.linear = v.clone();
    }
    if let Some(v) = &args.additive {
        columns.additive = v.clone();
    }
    columns.rescale |= args.rescale;
    if columns.linear.is_empty() && columns.additive.is_empty() {
        return Err(GeeError::Config("no covariate columns given (--linear/--additive or config)".into()));
    }
    let mut opts = cfg.options;
    if let Some(f) = args.family {
        opts.family = f;
    }
    if let Some(c) = args.correlation {
        opts.structure = c;
    }
    if let Some(a) = args.alpha {
        opts.alpha = AlphaSpec::Fixed(a);
    }
    if let Some(d) = args.degree {
        opts.degree = d;
    }
    if let Some(l) = args.level {
        opts.level = l;
    }
    let data = load_csv(&args.data, &columns)?;
    let model = match args.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| GeeError::Config(format!("thread pool: {e}")))?
            .install(|| fit_dataset(&data, &opts))?,
        None => fit_dataset(&data, &opts)?,
    };
    fs::create_dir_all(&args.out)?;
    write_json(&args.out.join("report.json"), &model.report()?)?;
    for l in 0..model.components.len() {
        let mut w = csv::Writer::from_path(args.out.join(format!("curves_{}.csv", l + 1)))?;
        w.write_record(["z", "estimate", "sd", "lower", "upper", "band_lower", "band_upper"])?;
        for p in model.curve(l)? {
            w.write_record([
                p.z.to_string(),
                p.estimate.to_string(),
                p.sd.to_string(),
                p.lower.to_string(),
                p.upper.to_string(),
                fmt_opt(p.band_lower),
                fmt_opt(p.band_upper),
            ])?;
        }
        w.flush()?;
    }
    Ok(())
}

pub fn simulate_config(args: &SimulateArgs) -> McConfig {
    let example = match args.example {
        1 => ExampleConfig::Continuous(Example1Config::new(args.n, args.m.unwrap_or(20))),
        _ => ExampleConfig::Binary(Example2Config {
            m: args.m,
            ..Example2Config::new(args.n)
        }),
    };
    let mut cfg = McConfig::new(example, args.correlation, args.nsim, args.seed);
    cfg.level = args.level;
    cfg.degree = args.degree;
    cfg
}

pub fn run_simulate(args: &SimulateArgs) -> Result<()> {
    let cfg = simulate_config(args);
    let report = run_monte_carlo(&cfg, args.threads)?;
    fs::create_dir_all(&args.out)?;
    write_json(&args.out.join("mc_report.json"), &report)?;
    fs::write(args.out.join("mc_table.txt"), format_tables(&report))?;
    eprintln!("wall time: {:.2} s", report.wall_time_secs);
    report.validate()
}

/// Runs the CLI; on failure prints `{code, message, context}` JSON to
/// stderr and returns a nonzero exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = match &cli.command {
        Command::Fit(a) => run_fit(a),
        Command::Simulate(a) => run_simulate(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let body = serde_json::json!({
                "code": e.code(),
                "message": e.to_string(),
                "context": e.context(),
            });
            eprintln!("{body}");
            1
        }
    }
}
