//! Trains the monthly three-asset allocation preset briefly and prints the
//! learned weights at the initial prices.
//!
//! cargo run --release --example portfolio [iterations]

use std::path::Path;

use dynrisk::config::RunConfig;
use dynrisk::envs::portfolio::softmax;
use dynrisk::neural::Policy;
use dynrisk::run::train;

fn main() -> dynrisk::Result<()> {
    let iterations = std::env::args()
        .nth(1)
        .map_or(10, |s| s.parse().expect("iteration count"));
    let preset = Path::new(env!("CARGO_MANIFEST_DIR")).join("presets/portfolio_gbm.toml");
    let mut cfg = RunConfig::load(&preset)?;
    cfg.run.iterations = iterations;
    cfg.run.eval_episodes = 2000;
    cfg.run.snapshot_every = 0;
    let out = std::env::temp_dir().join("dynrisk_portfolio");
    let outcome = train(&cfg, &out)?;

    let before = softmax(&initial_mode(&cfg)?);
    let after = softmax(&outcome.models.policy.mode(&[0.0, 1.0, 1.0, 1.0, 1.0]));
    println!("weights at t = 0 before training: {before:.3?}");
    println!("weights at t = 0 after training:  {after:.3?}");
    if let Some(s) = &outcome.summary {
        println!(
            "mean return {:.4}, CVaR_{} of the loss {:.4}, 1% return quantile {:.4}",
            s.mean_pnl, s.tail[0].0, s.tail[0].2, s.pnl_quantiles[0]
        );
    }
    Ok(())
}

fn initial_mode(cfg: &RunConfig) -> dynrisk::Result<Vec<f64>> {
    let env = cfg.env.build()?;
    Ok(cfg
        .init_models(env.as_dyn())
        .policy
        .mode(&[0.0, 1.0, 1.0, 1.0, 1.0]))
}
