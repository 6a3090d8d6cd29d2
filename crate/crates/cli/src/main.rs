use std::path::PathBuf;
use std::process::ExitCode;

use blockg_cli::Overrides;
use clap::Parser;

/// Bayes factors, shrinkage, model selection and experiments under g,
/// hyper-g and block hyper-g priors.
#[derive(Parser)]
#[command(name = "blockg", version)]
struct Cli {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Seed replacing the configured one.
    #[arg(long)]
    seed: Option<u64>,
    /// Residualize each block on the preceding ones before fitting.
    #[arg(long)]
    orthogonalize: bool,
    /// Integration budget in integrand evaluations; also caps simulation
    /// studies at this many replicate observations.
    #[arg(long)]
    budget: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let over = Overrides { seed: cli.seed, orthogonalize: cli.orthogonalize, budget: cli.budget };
    match blockg_cli::run(&cli.config, &over) {
        Ok(paths) => {
            for p in paths {
                println!("wrote {}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.line());
            ExitCode::from(e.code)
        }
    }
}
