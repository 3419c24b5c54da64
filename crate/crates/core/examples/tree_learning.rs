//! Learns the time-consistent policy of the two-period tree with a tabular
//! softmax actor and a neural critic, then compares with the exact DP.
//!
//! cargo run --release --example tree_learning

use dynrisk::actor::{run_actor_critic, ActorConfig};
use dynrisk::critic::{Critic, CriticConfig, ValueEnsemble};
use dynrisk::envs::TreeEnv;
use dynrisk::neural::{Adam, Policy, StepDecay, TabularSoftmaxPolicy};
use dynrisk::oracle::{tree_dynamic_risk, FiniteTreeMdp};
use dynrisk::{Environment, ScoreParams, Spectrum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> dynrisk::Result<()> {
    let mdp = FiniteTreeMdp::two_period_example();
    let spectrum = Spectrum::cvar(0.9)?;
    let env = TreeEnv::new(mdp.clone());
    let params = ScoreParams::new(env.cost_bound(), spectrum.clone())?;

    let mut policy = TabularSoftmaxPolicy::uniform(mdp.nodes().len(), mdp.max_actions(), 1);
    let mut policy_opt = Adam::new(policy.params().len(), StepDecay::constant(0.05));
    let critic_cfg = CriticConfig {
        hidden: vec![16, 16],
        epochs: 150,
        batch: 200,
        target_interval: 50,
        lr: StepDecay::constant(5e-3),
        lr_restart: true,
    };
    let actor_cfg = ActorConfig {
        epochs: 10,
        batch: 100,
        ..ActorConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut critic = Critic::new(
        ValueEnsemble::new(spectrum.clone(), 2, &critic_cfg.hidden, &mut rng),
        critic_cfg.lr,
    );

    let upp = mdp.find("s1_up_prime").expect("fixture node");
    let ledger = run_actor_critic(
        &env,
        &mut policy,
        &mut policy_opt,
        &mut critic,
        &params,
        &critic_cfg,
        &actor_cfg,
        40,
        7,
        &mut Vec::new(),
        &mut |it, p: &TabularSoftmaxPolicy, c: &Critic| {
            if it % 5 == 4 {
                println!(
                    "iteration {:>3}: P(up | s0) = {:.3}  P(up | s1_up') = {:.3}  V(s0) = {:.3}",
                    it + 1,
                    p.probs(0)[0],
                    p.probs(upp)[0],
                    c.ensemble.value(&[0.0, 0.0])
                );
            }
            Ok(())
        },
    )?;

    let exact = tree_dynamic_risk(&mdp, &spectrum);
    println!(
        "exact: root value {:.3}, root action {:?}, action at s1_up' {:?}",
        exact.values[0], exact.actions[0], exact.actions[upp]
    );
    println!(
        "simulated {} critic and {} actor transitions",
        ledger.critic_transitions, ledger.actor_transitions
    );
    Ok(())
}
