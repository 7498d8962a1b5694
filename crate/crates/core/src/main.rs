use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use scalemix::chains::Algorithm;
use scalemix::cli::{command_check, command_diagnose, command_sample, Overrides, EXIT_FAILURE};

#[derive(Parser)]
#[command(name = "scalemix", version, about = "Bayesian multivariate regression with scale-mixture errors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check posterior propriety and classify the DA operator.
    Check(Args),
    /// Run one chain and write draws and a summary.
    Sample(Args),
    /// Run paired DA and Haar PX-DA chains and compare them.
    Diagnose(Args),
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgorithmArg {
    Da,
    Pxda,
}

#[derive(clap::Args)]
struct Args {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, env = "SCALEMIX_SEED")]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    algorithm: Option<AlgorithmArg>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Sample even when the operator is not certified.
    #[arg(long)]
    force: bool,
}

impl Args {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            algorithm: self.algorithm.map(|a| match a {
                AlgorithmArg::Da => Algorithm::Da,
                AlgorithmArg::Pxda => Algorithm::HaarPxda,
            }),
            out: self.out.clone(),
            force: self.force,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Check(a) => command_check(&a.config, &a.overrides()),
        Command::Sample(a) => command_sample(&a.config, &a.overrides()),
        Command::Diagnose(a) => command_diagnose(&a.config, &a.overrides()),
    };
    match result {
        Ok(res) => {
            print!("{}", res.report);
            for m in &res.messages {
                eprintln!("{m}");
            }
            ExitCode::from(res.exit_code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_FAILURE as u8)
        }
    }
}
