//! `otx`: run seeded transport experiments, query the exact oracles, and
//! print closed-form bound values.
//!
//! Exit codes: 0 on success (and bound-check PASS), 2 when a requested
//! bound check fails, 1 on any error. Rendered results go to stdout;
//! verdicts and diagnostics go to stderr so piped output stays parseable.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{error::ErrorKind, Args, Parser, Subcommand, ValueEnum};
use otx_core::bounds::{empirical_bound, gaussian_set_bound, kappa, online_overhead};
use otx_core::harness::{
    compare_bounds, oracle_report, render, resolve_fixture, run, ExperimentConfig, OutputFormat,
};
use otx_core::reductions::sphere_set_transport_cost_bound;
use otx_core::{Error, Result};

#[derive(Parser)]
#[command(name = "otx", version, about = "Online optimal transport experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a JSON-configured experiment and emit its result
    Run(RunArgs),
    /// Print exact-oracle reference values for a fixture
    Oracle {
        /// Built-in name (claim42, claim42:<n>:<eps>, remark40, remark41)
        /// or a path to a fixture JSON file
        #[arg(long)]
        fixture: String,
    },
    /// Print the closed-form bound values for one (p, n, k, epsilon)
    Bounds(BoundsArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment configuration (JSON)
    #[arg(long)]
    config: PathBuf,
    /// Override the config seed
    #[arg(long)]
    seed: Option<u64>,
    /// Write the rendered result here as well as to stdout
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output format (default csv)
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Worker threads for replication fan-out (default: all cores)
    #[arg(long)]
    workers: Option<usize>,
    /// Record wall-clock time (makes output non-reproducible)
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct BoundsArgs {
    #[arg(long)]
    p: f64,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    k: usize,
    #[arg(long)]
    epsilon: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for OutputFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => OutputFormat::Csv,
            FormatArg::Json => OutputFormat::Json,
        }
    }
}

fn cmd_run(args: RunArgs) -> Result<ExitCode> {
    if let Some(workers) = args.workers {
        if workers == 0 {
            return Err(Error::RejectedInput("--workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .map_err(|e| Error::config(format!("worker pool: {e}")))?;
    }
    let text = std::fs::read_to_string(&args.config)?;
    let mut config = ExperimentConfig::from_json(&text)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(out) = &args.out {
        config.out = Some(out.to_string_lossy().into_owned());
    }
    if let Some(format) = args.format {
        config.format = Some(format.into());
    }
    if args.timing {
        config.timing = true;
    }
    let result = run(&config)?;
    print!("{}", render(&result, config.format.unwrap_or(OutputFormat::Csv))?);
    if result.bound_delta.is_some() {
        let verdict = compare_bounds(&result)?;
        eprintln!(
            "bound check: {} (measured {:.6} vs reference {:.6} + 3 x stderr {:.6}, slack {:.6})",
            if verdict.pass { "PASS" } else { "FAIL" },
            verdict.measured,
            verdict.reference,
            verdict.stderr_propagated,
            verdict.slack,
        );
        if !verdict.pass {
            return Ok(ExitCode::from(2));
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_oracle(reference: &str) -> Result<ExitCode> {
    let (fixture, epsilon) = resolve_fixture(reference)?;
    let values = oracle_report(&fixture)?;
    let mut doc = serde_json::Map::new();
    doc.insert("fixture".into(), reference.into());
    doc.insert("n".into(), fixture.mu.n().into());
    doc.insert("p".into(), fixture.cost.p.into());
    if let Some(eps) = epsilon {
        doc.insert("epsilon".into(), eps.into());
    }
    for (name, value) in &values {
        doc.insert(name.clone(), (*value).into());
    }
    println!("{}", serde_json::to_string_pretty(&doc)?);
    Ok(ExitCode::SUCCESS)
}

fn cmd_bounds(args: BoundsArgs) -> Result<ExitCode> {
    let BoundsArgs { p, n, k, epsilon } = args;
    let mut doc = serde_json::Map::new();
    doc.insert("p".into(), p.into());
    doc.insert("n".into(), n.into());
    doc.insert("k".into(), k.into());
    doc.insert("epsilon".into(), epsilon.into());
    doc.insert("kappa".into(), kappa(epsilon)?.into());
    doc.insert("gaussian_set_bound".into(), gaussian_set_bound(p, n, epsilon)?.into());
    doc.insert("cube_l2sq_bound".into(), (2.0 * (1.0 / epsilon).ln()).into());
    doc.insert("sphere_l2_bound".into(), sphere_set_transport_cost_bound(epsilon)?.into());
    doc.insert("empirical_bound".into(), empirical_bound(p, k)?.into());
    doc.insert("online_overhead".into(), online_overhead(p, n, k)?.into());
    println!("{}", serde_json::to_string_pretty(&doc)?);
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Oracle { fixture } => cmd_oracle(&fixture),
        Command::Bounds(args) => cmd_bounds(args),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
