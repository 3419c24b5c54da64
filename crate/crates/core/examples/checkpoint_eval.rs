//! Trains briefly, reloads the run directory from its checkpoint and
//! re-evaluates the stored policy on a fresh seed.
//!
//! cargo run --release --example checkpoint_eval

use dynrisk::config::RunConfig;
use dynrisk::neural::Policy;
use dynrisk::run::{cmd_eval, load_run, train};

const CONFIG: &str = r#"
[run]
seed = 11
iterations = 3
eval_episodes = 500

[env]
kind = "statarb"
horizon = 3

[[spectrum]]
threshold = 0.7
weight = 1.0

[critic]
hidden = [8, 8]
epochs = 20
batch = 100
target_interval = 10

[actor]
hidden = [8, 8]
epochs = 3
batch = 100
"#;

fn main() -> dynrisk::Result<()> {
    let cfg = RunConfig::parse(CONFIG)?;
    let dir = std::env::temp_dir().join("dynrisk_checkpoint_eval");
    let trained = train(&cfg, &dir)?;

    let (loaded_cfg, models) = load_run(&dir)?;
    assert_eq!(loaded_cfg, cfg);
    assert_eq!(models.policy.params(), trained.models.policy.params());
    println!(
        "reloaded {} policy parameters from {}",
        models.policy.params().len(),
        dir.display()
    );

    let eval_dir = dir.join("eval_seed_5");
    if let Some(s) = cmd_eval(&dir, Some(&eval_dir), 2000, 5)? {
        println!(
            "fresh evaluation: mean pnl {:.4}, CVaR_{} {:.4} over {} episodes",
            s.mean_pnl, s.tail[0].0, s.tail[0].2, s.episodes
        );
    }
    println!("csv files in {}", eval_dir.display());
    Ok(())
}
