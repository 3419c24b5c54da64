//! Trains the elicitable and the nested Monte-Carlo critic on the same
//! stat-arb policy and counts the transitions each one simulates.
//!
//! cargo run --release --example nested_efficiency

use std::time::Instant;

use dynrisk::critic::{train_critic, Critic, CriticConfig, ValueEnsemble};
use dynrisk::envs::{CountingEnv, StatArbEnv, StatArbSpec};
use dynrisk::nested::{train_nested_critic, NestedConfig, NestedCritic};
use dynrisk::neural::ConstantPolicy;
use dynrisk::{Environment, ScoreParams, Spectrum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> dynrisk::Result<()> {
    let env = CountingEnv::new(StatArbEnv::new(StatArbSpec {
        horizon: 3,
        ..StatArbSpec::default()
    })?);
    let policy = ConstantPolicy::new(vec![0.0]);
    let spectrum = Spectrum::cvar(0.8)?;
    let params = ScoreParams::new(env.cost_bound(), spectrum.clone())?;
    let cfg = CriticConfig {
        epochs: 50,
        batch: 200,
        target_interval: 25,
        ..CriticConfig::default()
    };
    let nested_cfg = NestedConfig { inner_m: 100 };
    let mut rng = ChaCha8Rng::seed_from_u64(3);

    let clock = Instant::now();
    let mut critic = Critic::new(
        ValueEnsemble::new(spectrum.clone(), env.state_dim(), &cfg.hidden, &mut rng),
        cfg.lr,
    );
    train_critic(
        &mut critic,
        &env,
        &policy,
        &params,
        &cfg,
        1,
        0,
        &mut Vec::new(),
    )?;
    let (elicitable, el_secs) = (env.transitions(), clock.elapsed().as_secs_f64());

    env.reset();
    let clock = Instant::now();
    let mut nested = NestedCritic::new(env.state_dim(), &cfg.hidden, cfg.lr, &mut rng);
    train_nested_critic(
        &mut nested,
        &env,
        &policy,
        &spectrum,
        &cfg,
        &nested_cfg,
        1,
        0,
        &mut Vec::new(),
    )?;
    let (nested_count, ne_secs) = (env.transitions(), clock.elapsed().as_secs_f64());

    println!("elicitable: {elicitable} transitions in {el_secs:.2}s");
    println!("nested:     {nested_count} transitions in {ne_secs:.2}s");
    println!(
        "ratio {:.1} (inner_m = {}), wall clock ratio {:.1}",
        nested_count as f64 / elicitable as f64,
        nested_cfg.inner_m,
        ne_secs / el_secs
    );
    Ok(())
}
