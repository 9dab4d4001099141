use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use seirsl_cli::commands::{diagnose, infer, select, simulate, Context, DiagnoseOptions, InferOptions, SelectOptions};
use seirsl_cli::{CliError, RunConfig, EXIT_USAGE};
use seirsl_core::samplers::SamplerKind;
use seirsl_core::SubsetMask;

#[derive(Parser)]
#[command(
    name = "seirsl",
    version,
    about = "SEIR summary selection and synthetic-likelihood inference"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output_dir` in the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Master seed (overrides `seed` in the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for table simulation and chains.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SamplerArg {
    Rwmh,
    Hmc,
}

#[derive(Subcommand)]
enum Command {
    /// Write the observed series at the configured true parameters.
    Simulate,
    /// Build the reference table and select a summary subset.
    Select {
        #[arg(long)]
        observed: Option<PathBuf>,
    },
    /// Sample the synthetic-likelihood posterior.
    Infer {
        #[arg(long)]
        observed: Option<PathBuf>,
        /// Selection report whose chosen mask is used.
        #[arg(long, conflicts_with = "mask")]
        selection: Option<PathBuf>,
        /// Comma-separated statistic names, e.g. mean_E,mean_I,final_size_R.
        #[arg(long, value_delimiter = ',')]
        mask: Option<Vec<String>>,
        #[arg(long, value_enum)]
        sampler: Option<SamplerArg>,
        /// Record every likelihood evaluation in trace.csv.
        #[arg(long)]
        trace: bool,
    },
    /// Recompute diagnostics from chain CSVs.
    Diagnose {
        #[arg(long, num_args = 1..)]
        chains: Vec<PathBuf>,
        #[arg(long)]
        burn_in: Option<usize>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut config = match &cli.common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.common.seed {
        config.seed = seed;
    }
    let out = cli
        .common
        .out
        .clone()
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("seirsl-out"));
    if let Some(n) = cli.common.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    }
    let ctx = Context::new(config, out);

    match cli.command {
        Command::Simulate => {
            simulate(&ctx)?;
            println!("wrote {}", ctx.out.join("observed.csv").display());
        }
        Command::Select { observed } => {
            let report = select(&ctx, &SelectOptions { observed })?;
            println!("chosen mask: {}", report.chosen);
            for s in report.stage1.iter().take(3) {
                println!("  stage 1 rank {}: {} (entropy {:.4})", s.rank, s.mask, s.entropy);
            }
        }
        Command::Infer {
            observed,
            selection,
            mask,
            sampler,
            trace,
        } => {
            let mask = mask.map(|names| SubsetMask::from_names(&names)).transpose()?;
            let sampler = sampler.map(|s| match s {
                SamplerArg::Rwmh => SamplerKind::Rwmh,
                SamplerArg::Hmc => SamplerKind::Hmc,
            });
            let output = infer(
                &ctx,
                &InferOptions {
                    observed,
                    selection,
                    mask,
                    sampler,
                    trace,
                },
            )?;
            println!("mask: {}", output.mask);
            print!("{}", output.summary.to_table());
        }
        Command::Diagnose { chains, burn_in } => {
            let summary = diagnose(&ctx, &DiagnoseOptions { chains, burn_in })?;
            print!("{}", summary.to_table());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE as u8 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
