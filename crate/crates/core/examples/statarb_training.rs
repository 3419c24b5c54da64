//! Trains the stat-arb preset for a few iterations and prints the risk of
//! the learned policy together with its trades at the inventory limits.
//!
//! cargo run --release --example statarb_training [iterations]

use std::path::Path;

use dynrisk::config::{AnyEnv, RunConfig};
use dynrisk::run::{mean_abs_edge_trade, train};

fn main() -> dynrisk::Result<()> {
    let iterations = std::env::args()
        .nth(1)
        .map_or(20, |s| s.parse().expect("iteration count"));
    let preset = Path::new(env!("CARGO_MANIFEST_DIR")).join("presets/statarb_alpha_0.8.toml");
    let mut cfg = RunConfig::load(&preset)?;
    cfg.run.iterations = iterations;
    cfg.run.eval_episodes = 2000;
    cfg.run.snapshot_every = 0;

    let out = std::env::temp_dir().join("dynrisk_statarb_training");
    let outcome = train(&cfg, &out)?;
    let l = &outcome.ledger;
    println!(
        "{} iterations: critic {} transitions in {:.1}s, actor {} in {:.1}s",
        l.iterations, l.critic_transitions, l.critic_seconds, l.actor_transitions, l.actor_seconds
    );
    if let Some(s) = &outcome.summary {
        for (alpha, var, cvar) in &s.tail {
            println!(
                "terminal cost at {alpha}: VaR {var:.4}, CVaR {cvar:.4}; mean pnl {:.4}",
                s.mean_pnl
            );
        }
    }
    if let AnyEnv::Statarb(env) = cfg.env.build()? {
        println!(
            "mean |trade| at the inventory limits: {:.4}",
            mean_abs_edge_trade(&env, &outcome.models.policy)
        );
    }
    println!("artifacts in {}", out.display());
    Ok(())
}
