//! Trains the stat-arb agent at two CVaR levels from the same seed and
//! compares how hard each unwinds a full inventory. The more risk-averse
//! agent trades less aggressively at the limits.
//!
//! cargo run --release --example risk_aversion [iterations]

use std::path::Path;

use dynrisk::config::{AnyEnv, RunConfig};
use dynrisk::run::{mean_abs_edge_trade, train};

fn main() -> dynrisk::Result<()> {
    let iterations = std::env::args()
        .nth(1)
        .map_or(100, |s| s.parse().expect("iteration count"));
    let presets = Path::new(env!("CARGO_MANIFEST_DIR")).join("presets");
    for alpha in ["0.5", "0.8"] {
        let mut cfg = RunConfig::load(&presets.join(format!("statarb_alpha_{alpha}.toml")))?;
        cfg.run.iterations = iterations;
        cfg.run.eval_episodes = 2000;
        cfg.run.snapshot_every = 0;
        let out = std::env::temp_dir().join(format!("dynrisk_risk_aversion_{alpha}"));
        let outcome = train(&cfg, &out)?;
        let AnyEnv::Statarb(env) = cfg.env.build()? else {
            unreachable!("stat-arb preset")
        };
        let cvar = outcome.summary.as_ref().map_or(f64::NAN, |s| s.tail[0].2);
        println!(
            "alpha {alpha}: mean |trade| at the limits {:.4}, terminal CVaR {cvar:.4}",
            mean_abs_edge_trade(&env, &outcome.models.policy)
        );
    }
    Ok(())
}
