use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dynrisk::config::RunConfig;
use dynrisk::run::{cmd_eval, cmd_simulate, cmd_train, Overrides};
use dynrisk::suites::cmd_oracle;

#[derive(Parser)]
#[command(
    name = "dynrisk",
    version,
    about = "Dynamic spectral risk actor-critic"
)]
struct Cli {
    /// Maximum number of worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a policy and critic; writes artifacts into --out.
    Train {
        /// TOML run configuration
        #[arg(long)]
        config: PathBuf,
        /// Output directory, created if missing
        #[arg(long)]
        out: PathBuf,
        /// Overrides run.seed
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides run.iterations
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// Evaluate the policy of a training directory.
    Eval {
        /// Training directory.
        #[arg(long)]
        run: PathBuf,
        /// Where to write the CSVs; the training directory by default.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 10_000)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run oracle self-checks: tree, cvar, grad or all.
    Oracle {
        #[arg(long, default_value = "all")]
        suite: String,
    },
    /// Roll out an environment under the neutral action and write paths.csv.
    Simulate {
        /// TOML run configuration; only [env] is used
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 100)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn run(cli: Cli) -> dynrisk::Result<bool> {
    match cli.command {
        Command::Train {
            config,
            out,
            seed,
            iterations,
        } => {
            let outcome = cmd_train(&config, &out, &Overrides { seed, iterations })?;
            let l = &outcome.ledger;
            println!(
                "{} iterations; critic {} transitions in {:.1}s; actor {} transitions in {:.1}s",
                l.iterations,
                l.critic_transitions,
                l.critic_seconds,
                l.actor_transitions,
                l.actor_seconds
            );
            if let Some(s) = outcome.summary {
                println!(
                    "mean terminal pnl {:.6} over {} episodes",
                    s.mean_pnl, s.episodes
                );
            }
            println!("artifacts in {}", out.display());
        }
        Command::Eval {
            run,
            out,
            episodes,
            seed,
        } => match cmd_eval(&run, out.as_deref(), episodes, seed)? {
            Some(s) => {
                println!(
                    "mean terminal pnl {:.6} over {} episodes",
                    s.mean_pnl, s.episodes
                );
                for (a, var, cvar) in s.tail {
                    println!("alpha {a}: VaR {var:.6} CVaR {cvar:.6} (of cost)");
                }
            }
            None => println!("no episodes; wrote headers only"),
        },
        Command::Oracle { suite } => {
            let checks = cmd_oracle(&suite)?;
            println!("suite,check,status,detail");
            for c in &checks {
                println!("{}", c.line());
            }
            return Ok(checks.iter().all(|c| c.passed));
        }
        Command::Simulate {
            config,
            out,
            episodes,
            seed,
        } => {
            let cfg = RunConfig::load(&config)?;
            let path = cmd_simulate(&cfg, episodes, seed, &out)?;
            println!("wrote {}", path.display());
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
