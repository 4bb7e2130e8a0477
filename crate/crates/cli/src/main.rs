use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use safe_transfer::kernels::KernelFamily;
use safe_transfer_cli::commands::{cmd_gen_data, cmd_report, cmd_run, cmd_theory_bound, BoundQuery};
use safe_transfer_cli::config::{parse_config_file, ExperimentConfig};
use safe_transfer_cli::error::CliError;

#[derive(Parser)]
#[command(name = "safe-transfer", version, about = "Safe active learning with source-task transfer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the learning loop for every seed and method in a config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Run this seed only.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Continue after a fit failure and exit successfully.
        #[arg(long)]
        keep_going: bool,
    },
    /// Write the benchmark data of one seed as CSV plus metadata.json.
    GenData {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Covariance level, exploration radius and bound value.
    TheoryBound {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        sigma: f64,
        #[arg(long, default_value_t = 1.0)]
        k_scale: f64,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        threshold: f64,
        #[arg(long, default_value_t = 4.0, allow_negative_numbers = true)]
        beta: f64,
        #[arg(long, default_value = "matern52")]
        kernel: String,
        #[arg(long, default_value_t = 1.0)]
        lengthscale: f64,
        #[arg(long)]
        csv: bool,
    },
    /// Mean and standard error of summary files across seeds.
    Report {
        /// Summary files; defaults to OUT/summary.csv.
        files: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        csv: bool,
    },
}

fn load(config: &PathBuf, seed: Option<u64>, out: Option<PathBuf>) -> Result<ExperimentConfig, CliError> {
    let mut cfg = parse_config_file(config)?;
    if let Some(s) = seed {
        cfg.seeds = vec![s];
    }
    if let Some(o) = out {
        cfg.out = o;
    }
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { config, seed, out, keep_going } => {
            let cfg = load(&config, seed, out)?;
            let res = cmd_run(&cfg, keep_going, &mut std::io::stdout())?;
            for f in &res.failures {
                eprintln!("fit failure (continuing): {f}");
            }
            println!("wrote {} run files and {}", res.files.len(), cfg.out.join("summary.csv").display());
        }
        Command::GenData { config, seed, out } => {
            let cfg = load(&config, seed, out)?;
            for f in cmd_gen_data(&cfg, cfg.seeds[0], &cfg.out)? {
                println!("wrote {}", f.display());
            }
        }
        Command::TheoryBound { n, sigma, k_scale, threshold, beta, kernel, lengthscale, csv } => {
            let kernel =
                KernelFamily::parse(&kernel).ok_or_else(|| CliError::Validation(format!("unknown kernel '{kernel}'")))?;
            let q = BoundQuery { n, sigma, k_scale, threshold, beta, kernel, lengthscale };
            print!("{}", cmd_theory_bound(&q, csv)?);
        }
        Command::Report { files, out, csv } => {
            let files = if files.is_empty() {
                vec![out.unwrap_or_else(|| PathBuf::from("results")).join("summary.csv")]
            } else {
                files
            };
            print!("{}", cmd_report(&files, csv)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            e.print().ok();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
