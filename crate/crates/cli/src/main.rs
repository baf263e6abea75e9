use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tailfl_cli::{cmd_compare, cmd_generate, cmd_quantile_bench, cmd_train, CliError, ExperimentSpec};

#[derive(Parser)]
#[command(name = "tailfl", version, about = "Tail-risk federated learning simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic federated dataset into --out.
    Generate(Common),
    /// Train on a generated dataset, once per sweep seed.
    Train {
        #[command(flatten)]
        common: Common,
        /// Dataset directory written by `generate`.
        #[arg(long)]
        data: PathBuf,
    },
    /// Privacy/utility sweep of the private quantile protocol.
    QuantileBench(Common),
    /// Tail-risk training against FedAvg and tilted ERM, with and without privacy.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// JSON experiment config; omitted fields take their defaults.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Added to every seed in the config.
    #[arg(long, default_value_t = 0)]
    seed_offset: u64,
}

impl Common {
    fn spec(&self) -> Result<ExperimentSpec, CliError> {
        Ok(ExperimentSpec::from_path(&self.config)?.with_seed_offset(self.seed_offset))
    }
}

fn init_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("SFL_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("SFL_THREADS must be a positive integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Runtime(e.to_string()))
}

fn run(cli: Cli) -> Result<(), CliError> {
    init_threads()?;
    match cli.command {
        Command::Generate(c) => {
            let ds = cmd_generate(&c.spec()?, c.seed_offset, &c.out)?;
            println!(
                "wrote {} train / {} val / {} test clients to {}",
                ds.train.len(),
                ds.val.len(),
                ds.test.len(),
                c.out.display()
            );
        }
        Command::Train { common: c, data } => {
            let s = cmd_train(&c.spec()?, c.seed_offset, &data, &c.out)?;
            println!("{:?} theta={} over {} seeds", s.algorithm, s.theta, s.seeds.len());
            println!("train superquantile loss {}", s.train_superquantile_loss);
            for (name, split) in [("val", &s.val), ("test", &s.test)] {
                if let Some(sp) = split {
                    println!("{name}: mean error {}  p90 {}  sq90 {}", sp.mean_error, sp.p90_error, sp.sq90_error);
                }
            }
            if let Some(eps) = s.epsilon {
                println!("epsilon {eps}");
            }
        }
        Command::QuantileBench(c) => {
            let rows = cmd_quantile_bench(&c.spec()?, c.seed_offset, &c.out)?;
            println!("{:<14}{:>6}{:>6}{:>6}{:>8}{:>12}{:>10}", "distribution", "n", "b", "bits", "eps", "error", "std");
            for r in rows {
                println!(
                    "{:<14}{:>6}{:>6}{:>6}{:>8}{:>12.4}{:>10.4}",
                    r.distribution, r.n, r.b, r.bit_width, r.epsilon, r.mean_quantile_error, r.std
                );
            }
        }
        Command::Compare { common: c, data } => {
            let rows = cmd_compare(&c.spec()?, c.seed_offset, &data, &c.out)?;
            println!("{:<34}{:>20}{:>20}{:>10}", "method", "mean error", "p90 error", "epsilon");
            for r in rows {
                let eps = r.spent_epsilon.map(|e| format!("{e:.2}")).unwrap_or_else(|| "-".into());
                println!("{:<34}{:>20}{:>20}{:>10}", r.method, r.mean_error.to_string(), r.p90_error.to_string(), eps);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let report = serde_json::json!({ "error": e.kind(), "message": e.message() });
            eprintln!("{report}");
            ExitCode::from(e.exit_code())
        }
    }
}
