use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use nlslab::ldp::FlowKind;
use nlslab::records::Format;
use nlslab::{run_experiment, ExperimentConfig, Overrides, Subcommand};

/// Experiments on cubic NLS with random Fourier data.
///
/// Settings come from the defaults, then `--config`, then the flags below.
/// Outputs go to `--out`, else `$NLSLAB_OUTPUT_ROOT/<subcommand>`, else
/// `nlslab-out/<subcommand>`.
#[derive(Parser, Debug)]
#[command(name = "nlslab", version, allow_negative_numbers = true)]
struct Cli {
    /// sample-ldp | rate-curve | compare-app | resonance-sums | chaos-stat | hyper-check | evolve-one
    #[arg(value_parser = parse_subcommand)]
    subcommand: Subcommand,

    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    eps: Option<f64>,
    /// Comma-separated list, e.g. 0.25,0.125,0.0625
    #[arg(long, value_delimiter = ',')]
    eps_list: Option<Vec<f64>>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    z0: Option<f64>,
    #[arg(long)]
    cutoff: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// linear | modified | nonlinear
    #[arg(long, value_parser = parse_flow)]
    flow: Option<FlowKind>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    s: Option<f64>,
    /// csv | json-lines
    #[arg(long, value_parser = parse_format)]
    format: Option<Format>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    workers: Option<usize>,
}

fn parse_subcommand(s: &str) -> Result<Subcommand, String> {
    s.parse().map_err(|e: nlslab::LabError| e.to_string())
}

fn parse_flow(s: &str) -> Result<FlowKind, String> {
    s.parse().map_err(|e: nlslab::LabError| e.to_string())
}

fn parse_format(s: &str) -> Result<Format, String> {
    match s {
        "csv" => Ok(Format::Csv),
        "json-lines" | "jsonl" => Ok(Format::JsonLines),
        _ => Err(format!("unknown format '{s}' (expected csv or json-lines)")),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let overrides = Overrides {
        epsilon: cli.eps,
        eps_list: cli.eps_list,
        theta: cli.theta,
        z0: cli.z0,
        cutoff: cli.cutoff,
        samples: cli.samples,
        master_seed: cli.seed,
        flow: cli.flow,
        dt: cli.dt,
        s: cli.s,
        format: cli.format,
        output_dir: cli.out,
        workers: cli.workers,
    };
    let result = ExperimentConfig::load(cli.config.as_deref(), &overrides)
        .and_then(|cfg| run_experiment(cli.subcommand, &cfg));
    match result {
        Ok(summary) => {
            for f in &summary.files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("nlslab {}: {e}", cli.subcommand);
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
