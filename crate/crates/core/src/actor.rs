//! Policy improvement with the score-function form of the spectral-risk
//! gradient. The saddle point reuses the critic's VaR levels: each
//! transition weighs `grad log pi(a_t | s_t)` by
//! `sum_m p_m / (1 - alpha_m) * (c_t + V(s_{t+1}) - VaR_m(s_t))_+`,
//! with every value quantity held fixed.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::critic::{train_critic, Critic, CriticConfig, RiskCritic, TraceRow, CHUNK};
use crate::envs::{derive_seed, simulate_batch, CountingEnv, Environment, EpisodeBatch};
use crate::error::{Error, Result};
use crate::neural::{Adam, OutputActivation, Policy, StepDecay};
use crate::risk::{ScoreParams, Spectrum};

const ACTOR_TAG: u64 = 0xac;

/// Treatment of the `grad V(s')` term of the policy gradient. Only the
/// dropped form is implemented: the critic is held fixed during the actor
/// step, so its gradient with respect to the policy is not propagated.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContinuationGradient {
    #[default]
    Dropped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActorConfig {
    pub hidden: Vec<usize>,
    /// Output activation of the policy mean network.
    pub output: OutputActivation,
    pub log_std_init: f64,
    pub epochs: usize,
    /// Base batch; the simulated batch is scaled by `1/(1 - alpha_min)`.
    pub batch: usize,
    pub lr: StepDecay,
    pub continuation_gradient: ContinuationGradient,
}

impl Default for ActorConfig {
    fn default() -> Self {
        Self {
            hidden: vec![16; 5],
            output: OutputActivation::Identity,
            log_std_init: 0.5f64.ln(),
            epochs: 30,
            batch: 500,
            lr: StepDecay {
                initial: 4e-3,
                factor: 0.95,
                interval: 50,
                floor: 5e-4,
            },
            continuation_gradient: ContinuationGradient::Dropped,
        }
    }
}

impl ActorConfig {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if self.batch == 0 {
            bad.push("actor.batch must be positive");
        }
        if self.hidden.contains(&0) {
            bad.push("actor.hidden widths must be positive");
        }
        if !self.log_std_init.is_finite() {
            bad.push("actor.log_std_init must be finite");
        }
        if !bad.is_empty() {
            return Err(Error::Config(bad.join("; ")));
        }
        self.lr
            .validate()
            .map_err(|e| Error::Config(format!("actor.lr: {e}")))
    }
}

/// `ceil(base / (1 - alpha_min))`, ignoring floating-point noise in the
/// division.
pub fn effective_batch(base: usize, spectrum: &Spectrum) -> usize {
    let exact = base as f64 / (1.0 - spectrum.min_threshold());
    (exact - 1e-9 * exact).ceil() as usize
}

/// Saddle-point weight of one transition given the realized running
/// risk-to-go `y` and the VaR levels at the departure state.
pub fn transition_weight(spectrum: &Spectrum, y: f64, var_levels: &[f64]) -> f64 {
    spectrum
        .atoms()
        .zip(var_levels)
        .map(|(atom, v)| atom.weight / (1.0 - atom.threshold) * (y - v).max(0.0))
        .sum()
}

fn weights_for<C: RiskCritic + ?Sized>(critic: &C, batch: &EpisodeBatch, b: usize) -> Vec<f64> {
    let ep = batch.episode(b);
    let horizon = ep.horizon();
    (0..horizon)
        .map(|t| {
            let y = if t + 1 == horizon {
                ep.cost(t)
            } else {
                ep.cost(t) + critic.evaluate(ep.state(t + 1)).risk
            };
            let var = critic.evaluate(ep.state(t)).var_levels;
            transition_weight(critic.spectrum(), y, &var)
        })
        .collect()
}

/// Surrogate loss `sum_{b,t} w_{b,t} log pi(a_t | s_t)`.
pub fn actor_loss<P, C>(policy: &P, critic: &C, batch: &EpisodeBatch) -> f64
where
    P: Policy + ?Sized,
    C: RiskCritic + ?Sized,
{
    let mut total = 0.0;
    for b in 0..batch.len() {
        let ep = batch.episode(b);
        for (t, w) in weights_for(critic, batch, b).into_iter().enumerate() {
            if w != 0.0 {
                total += w * policy.log_prob(ep.state(t), ep.action(t));
            }
        }
    }
    total
}

/// Surrogate loss and its gradient in the policy parameters.
pub fn actor_loss_and_grad<P, C>(policy: &P, critic: &C, batch: &EpisodeBatch) -> (f64, Vec<f64>)
where
    P: Policy + ?Sized,
    C: RiskCritic + ?Sized,
{
    let n = policy.params().len();
    let parts: Vec<(f64, Vec<f64>)> = (0..batch.len())
        .collect::<Vec<_>>()
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut loss = 0.0;
            let mut grad = vec![0.0; n];
            for &b in chunk {
                let ep = batch.episode(b);
                for (t, w) in weights_for(critic, batch, b).into_iter().enumerate() {
                    if w != 0.0 {
                        loss += w * policy.log_prob(ep.state(t), ep.action(t));
                        policy.accumulate_log_prob_grad(ep.state(t), ep.action(t), w, &mut grad);
                    }
                }
            }
            (loss, grad)
        })
        .collect();
    let mut loss = 0.0;
    let mut grad = vec![0.0; n];
    for (l, g) in parts {
        loss += l;
        for (a, x) in grad.iter_mut().zip(g) {
            *a += x;
        }
    }
    (loss, grad)
}

/// One Adam step on the batch-mean surrogate. Returns the summed loss.
pub fn actor_update<P, C>(
    policy: &mut P,
    opt: &mut Adam,
    critic: &C,
    batch: &EpisodeBatch,
) -> Result<f64>
where
    P: Policy + ?Sized,
    C: RiskCritic + ?Sized,
{
    let (loss, mut grad) = actor_loss_and_grad(policy, critic, batch);
    if !loss.is_finite() {
        return Err(Error::Numerical(format!("actor loss is {loss}")));
    }
    let scale = 1.0 / batch.len() as f64;
    grad.iter_mut().for_each(|g| *g *= scale);
    opt.step(policy.params_mut(), &grad)?;
    policy.project();
    opt.end_epoch();
    Ok(loss)
}

/// `cfg.epochs` actor epochs on fresh weighted batches.
#[allow(clippy::too_many_arguments)]
pub fn train_actor<E, P, C>(
    policy: &mut P,
    opt: &mut Adam,
    critic: &C,
    env: &E,
    cfg: &ActorConfig,
    seed: u64,
    iteration: usize,
    trace: &mut Vec<TraceRow>,
) -> Result<()>
where
    E: Environment + ?Sized,
    P: Policy + ?Sized,
    C: RiskCritic + ?Sized,
{
    let size = effective_batch(cfg.batch, critic.spectrum());
    for epoch in 0..cfg.epochs {
        let batch_seed = derive_seed(seed, ACTOR_TAG, (iteration as u64) << 32 | epoch as u64);
        let batch = simulate_batch(env, &*policy, size, batch_seed);
        let lr = opt.lr();
        let loss = actor_update(policy, opt, critic, &batch).map_err(|err| match err {
            Error::Numerical(msg) => Error::Numerical(format!(
                "actor iteration {iteration} epoch {epoch} (lr {lr}): {msg}"
            )),
            other => other,
        })?;
        trace.push(TraceRow {
            phase: "actor".into(),
            iteration,
            epoch,
            loss: loss / size as f64,
            lr,
        });
    }
    Ok(())
}

/// Simulation and timing counters of a run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunLedger {
    pub method: String,
    pub iterations: usize,
    pub critic_epochs: u64,
    pub actor_epochs: u64,
    pub critic_transitions: u64,
    pub actor_transitions: u64,
    pub critic_seconds: f64,
    pub actor_seconds: f64,
}

/// Alternates `iterations` critic and actor procedures. `on_iteration` is
/// called after each iteration with its index.
#[allow(clippy::too_many_arguments)]
pub fn run_actor_critic<E, P>(
    env: &E,
    policy: &mut P,
    policy_opt: &mut Adam,
    critic: &mut Critic,
    params: &ScoreParams,
    critic_cfg: &CriticConfig,
    actor_cfg: &ActorConfig,
    iterations: usize,
    seed: u64,
    trace: &mut Vec<TraceRow>,
    on_iteration: &mut dyn FnMut(usize, &P, &Critic) -> Result<()>,
) -> Result<RunLedger>
where
    E: Environment + ?Sized,
    P: Policy,
{
    let counting = CountingEnv::new(env);
    let mut ledger = RunLedger {
        method: "elicitable".into(),
        ..RunLedger::default()
    };
    for it in 0..iterations {
        let clock = Instant::now();
        counting.reset();
        train_critic(
            critic, &counting, &*policy, params, critic_cfg, seed, it, trace,
        )?;
        ledger.critic_transitions += counting.transitions();
        ledger.critic_epochs += critic_cfg.epochs as u64;
        ledger.critic_seconds += clock.elapsed().as_secs_f64();

        let clock = Instant::now();
        counting.reset();
        train_actor(
            policy,
            policy_opt,
            &critic.ensemble,
            &counting,
            actor_cfg,
            seed,
            it,
            trace,
        )?;
        ledger.actor_transitions += counting.transitions();
        ledger.actor_epochs += actor_cfg.epochs as u64;
        ledger.actor_seconds += clock.elapsed().as_secs_f64();
        ledger.iterations = it + 1;
        on_iteration(it, policy, critic)?;
    }
    Ok(ledger)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::critic::ValueEnsemble;
    use crate::envs::{simulate_batch, StatArbEnv, StatArbSpec};
    use crate::neural::{GaussianPolicy, MlpShape};
    use crate::risk::RiskEstimate;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn weighted_batch_sizes() {
        assert_eq!(effective_batch(500, &Spectrum::cvar(0.8).unwrap()), 2500);
        assert_eq!(effective_batch(500, &Spectrum::cvar(0.5).unwrap()), 1000);
        assert_eq!(effective_batch(7, &Spectrum::cvar(0.3).unwrap()), 10);
        let s = Spectrum::new(vec![0.5, 0.9], vec![0.4, 0.6]).unwrap();
        assert_eq!(effective_batch(100, &s), 200);
        for b in 1..200 {
            assert!(effective_batch(b, &Spectrum::cvar(0.37).unwrap()) >= b);
        }
    }

    struct Fixed(Spectrum, f64);

    impl RiskCritic for Fixed {
        fn spectrum(&self) -> &Spectrum {
            &self.0
        }
        fn evaluate(&self, _: &[f64]) -> RiskEstimate {
            RiskEstimate::new(vec![self.1; self.0.len()], self.1)
        }
    }

    fn setup(horizon: usize) -> (StatArbEnv, GaussianPolicy) {
        let env = StatArbEnv::new(StatArbSpec {
            horizon,
            ..StatArbSpec::default()
        })
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let policy = GaussianPolicy::init(
            MlpShape::new(3, &[6], 1, OutputActivation::Identity),
            &mut rng,
        );
        (env, policy)
    }

    #[test]
    fn loss_vanishes_below_var() {
        let (env, policy) = setup(1);
        let batch = simulate_batch(&env, &policy, 20, 1);
        let critic = Fixed(Spectrum::cvar(0.9).unwrap(), 1e6);
        let (loss, grad) = actor_loss_and_grad(&policy, &critic, &batch);
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn single_term_reduction() {
        let (env, policy) = setup(1);
        let batch = simulate_batch(&env, &policy, 1, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let e = ValueEnsemble::new(Spectrum::cvar(0.7).unwrap(), 3, &[5], &mut rng);
        let ep = batch.episode(0);
        let h1 = e.heads(ep.state(0))[0];
        let expected =
            (ep.cost(0) - h1).max(0.0) / 0.3 * policy.log_prob(ep.state(0), ep.action(0));
        assert!((actor_loss(&policy, &e, &batch) - expected).abs() < 1e-12);
    }

    #[test]
    fn zero_epochs_leave_the_policy_alone() {
        let (env, mut policy) = setup(2);
        let before = policy.clone();
        let mut opt = Adam::new(policy.params().len(), StepDecay::constant(0.01));
        let cfg = ActorConfig {
            epochs: 0,
            ..ActorConfig::default()
        };
        let critic = Fixed(Spectrum::cvar(0.5).unwrap(), 0.0);
        train_actor(
            &mut policy,
            &mut opt,
            &critic,
            &env,
            &cfg,
            0,
            0,
            &mut Vec::new(),
        )
        .unwrap();
        assert_eq!(policy, before);
    }

    #[test]
    fn training_is_deterministic() {
        let run = || {
            let (env, mut policy) = setup(2);
            let mut opt = Adam::new(policy.params().len(), StepDecay::constant(0.01));
            let cfg = ActorConfig {
                epochs: 3,
                batch: 10,
                ..ActorConfig::default()
            };
            let critic = Fixed(Spectrum::cvar(0.5).unwrap(), 0.0);
            let mut trace = Vec::new();
            train_actor(&mut policy, &mut opt, &critic, &env, &cfg, 5, 0, &mut trace).unwrap();
            (policy, trace)
        };
        assert_eq!(run(), run());
    }
}
