//! Nested-simulation actor-critic used as the comparison baseline.
//!
//! Every visited state spawns `inner_m` one-step transitions with the action
//! resampled each time. The empirical spectral risk of `c + V_target(s')`
//! over those draws is the regression target of a single value network
//! (squared error). Outer episodes continue along inner draw 0, so one epoch
//! simulates exactly `batch * T * inner_m` transitions.

use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::actor::{effective_batch, transition_weight, ActorConfig, RunLedger};
use crate::critic::{CriticConfig, TraceRow, CHUNK};
use crate::envs::{derive_seed, episode_rng, CountingEnv, Environment, SimRng};
use crate::error::{Error, Result};
use crate::neural::{
    sync_target, Adam, Mlp, MlpCache, MlpShape, OutputActivation, Policy, StepDecay,
};
use crate::oracle::empirical::DiscreteDistribution;
use crate::risk::Spectrum;

const CRITIC_TAG: u64 = 0x4e1;
const ACTOR_TAG: u64 = 0x4ea;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NestedConfig {
    /// Inner transitions per visited state.
    pub inner_m: usize,
}

impl Default for NestedConfig {
    fn default() -> Self {
        Self { inner_m: 100 }
    }
}

impl NestedConfig {
    pub fn validate(&self) -> Result<()> {
        if self.inner_m < 2 {
            return Err(Error::Config(format!(
                "nested: inner_m must be at least 2, got {}",
                self.inner_m
            )));
        }
        Ok(())
    }
}

/// A state on an outer path with the totals `c_j + V(s'_j)` of its inner
/// draws. `action` is the raw action of draw 0, which the path follows.
#[derive(Debug, Clone, PartialEq)]
pub struct NestedVisit {
    pub period: usize,
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub totals: Vec<f64>,
}

impl NestedVisit {
    pub fn target(&self, spectrum: &Spectrum) -> f64 {
        distribution(&self.totals).spectral(spectrum)
    }

    /// Empirical VaR of the inner totals at each threshold.
    pub fn var_levels(&self, spectrum: &Spectrum) -> Vec<f64> {
        let d = distribution(&self.totals);
        spectrum.thresholds().iter().map(|&a| d.var(a)).collect()
    }
}

fn distribution(totals: &[f64]) -> DiscreteDistribution {
    DiscreteDistribution::from_samples(totals).expect("simulated totals are finite")
}

/// Draws `inner_m` transitions from `state`; returns raw actions, next
/// states and totals.
fn inner_draws<E, P>(
    env: &E,
    policy: &P,
    value: &Mlp,
    inner_m: usize,
    t: usize,
    state: &[f64],
    rng: &mut SimRng,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<f64>)
where
    E: Environment + ?Sized,
    P: Policy + ?Sized,
{
    let last = t + 1 == env.horizon();
    let mut actions = Vec::with_capacity(inner_m);
    let mut nexts = Vec::with_capacity(inner_m);
    let mut totals = Vec::with_capacity(inner_m);
    for _ in 0..inner_m {
        let raw = policy.sample(state, rng);
        let (next, c) = env.step(t, state, &raw, rng);
        totals.push(if last { c } else { c + value.scalar(&next) });
        actions.push(raw);
        nexts.push(next);
    }
    (actions, nexts, totals)
}

/// Nested risk targets at `(period, state)` pairs.
pub fn nested_targets<E, P>(
    env: &E,
    policy: &P,
    spectrum: &Spectrum,
    states: &[(usize, Vec<f64>)],
    value_target: &Mlp,
    inner_m: usize,
    rng: &mut SimRng,
) -> Vec<f64>
where
    E: Environment + ?Sized,
    P: Policy + ?Sized,
{
    states
        .iter()
        .map(|(t, s)| {
            let (_, _, totals) = inner_draws(env, policy, value_target, inner_m, *t, s, rng);
            distribution(&totals).spectral(spectrum)
        })
        .collect()
}

/// `count` outer episodes, each visit carrying its inner sample. Episode
/// `b` uses stream `b` of `seed`.
pub fn nested_rollout<E, P>(
    env: &E,
    policy: &P,
    value: &Mlp,
    inner_m: usize,
    count: usize,
    seed: u64,
) -> Vec<Vec<NestedVisit>>
where
    E: Environment + ?Sized,
    P: Policy + ?Sized,
{
    (0..count)
        .into_par_iter()
        .map(|b| {
            let mut rng = episode_rng(seed, b as u64);
            let mut state = env.initial_state(&mut rng);
            let mut visits = Vec::with_capacity(env.horizon());
            for t in 0..env.horizon() {
                let (mut actions, mut nexts, totals) =
                    inner_draws(env, policy, value, inner_m, t, &state, &mut rng);
                let next = nexts.swap_remove(0);
                visits.push(NestedVisit {
                    period: t,
                    state: std::mem::replace(&mut state, next),
                    action: actions.swap_remove(0),
                    totals,
                });
            }
            visits
        })
        .collect()
}

/// Single value network with a lagged copy for targets.
#[derive(Debug, Clone, PartialEq)]
pub struct NestedCritic {
    pub net: Mlp,
    pub target: Mlp,
    pub opt: Adam,
}

impl NestedCritic {
    pub fn new<R: Rng + ?Sized>(
        state_dim: usize,
        hidden: &[usize],
        lr: StepDecay,
        rng: &mut R,
    ) -> Self {
        let net = Mlp::new(
            MlpShape::new(state_dim, hidden, 1, OutputActivation::Identity),
            rng,
        );
        let opt = Adam::new(net.params().len(), lr);
        Self {
            target: net.clone(),
            net,
            opt,
        }
    }

    pub fn value(&self, state: &[f64]) -> f64 {
        self.net.scalar(state)
    }

    pub fn sync_target(&mut self) {
        sync_target(&self.net, &mut self.target).expect("target shares the network shape");
    }

    /// One Adam step on the batch-mean squared error. Returns the summed loss.
    pub fn update(&mut self, visits: &[Vec<NestedVisit>], spectrum: &Spectrum) -> Result<f64> {
        let n = self.net.params().len();
        let net = &self.net;
        let parts: Vec<(f64, Vec<f64>)> = visits
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut loss = 0.0;
                let mut grad = vec![0.0; n];
                let mut cache = MlpCache::default();
                for v in chunk.iter().flatten() {
                    let target = v.target(spectrum);
                    let pred = net.forward_cached(&v.state, &mut cache)[0];
                    let r = pred - target;
                    loss += r * r;
                    net.backward(&cache, &[2.0 * r], &mut grad);
                }
                (loss, grad)
            })
            .collect();
        let mut loss = 0.0;
        let mut grad = vec![0.0; n];
        for (l, g) in parts {
            loss += l;
            grad.iter_mut().zip(g).for_each(|(a, x)| *a += x);
        }
        if !loss.is_finite() {
            return Err(Error::Numerical(format!("nested critic loss is {loss}")));
        }
        let scale = 1.0 / visits.len().max(1) as f64;
        grad.iter_mut().for_each(|g| *g *= scale);
        self.opt.step(self.net.params_mut(), &grad)?;
        self.opt.end_epoch();
        Ok(loss)
    }
}

#[allow(clippy::too_many_arguments)]
pub fn train_nested_critic<E, P>(
    critic: &mut NestedCritic,
    env: &E,
    policy: &P,
    spectrum: &Spectrum,
    cfg: &CriticConfig,
    nested: &NestedConfig,
    seed: u64,
    iteration: usize,
    trace: &mut Vec<TraceRow>,
) -> Result<()>
where
    E: Environment + ?Sized,
    P: Policy + ?Sized,
{
    if cfg.lr_restart {
        critic.opt.restart_schedule();
    }
    for epoch in 0..cfg.epochs {
        let batch_seed = derive_seed(seed, CRITIC_TAG, (iteration as u64) << 32 | epoch as u64);
        let visits = nested_rollout(
            env,
            policy,
            &critic.target,
            nested.inner_m,
            cfg.batch,
            batch_seed,
        );
        let lr = critic.opt.lr();
        let loss = critic.update(&visits, spectrum)?;
        trace.push(TraceRow {
            phase: "critic".into(),
            iteration,
            epoch,
            loss: loss / cfg.batch as f64,
            lr,
        });
        if (epoch + 1) % cfg.target_interval == 0 {
            critic.sync_target();
        }
    }
    Ok(())
}

/// Score-function surrogate and its gradient with VaR levels taken from the
/// inner samples.
pub fn nested_actor_loss_and_grad<P>(
    policy: &P,
    visits: &[Vec<NestedVisit>],
    spectrum: &Spectrum,
) -> (f64, Vec<f64>)
where
    P: Policy + ?Sized,
{
    let n = policy.params().len();
    let parts: Vec<(f64, Vec<f64>)> = visits
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut loss = 0.0;
            let mut grad = vec![0.0; n];
            for v in chunk.iter().flatten() {
                let w = transition_weight(spectrum, v.totals[0], &v.var_levels(spectrum));
                if w != 0.0 {
                    loss += w * policy.log_prob(&v.state, &v.action);
                    policy.accumulate_log_prob_grad(&v.state, &v.action, w, &mut grad);
                }
            }
            (loss, grad)
        })
        .collect();
    let mut loss = 0.0;
    let mut grad = vec![0.0; n];
    for (l, g) in parts {
        loss += l;
        grad.iter_mut().zip(g).for_each(|(a, x)| *a += x);
    }
    (loss, grad)
}

#[allow(clippy::too_many_arguments)]
pub fn train_nested_actor<E, P>(
    policy: &mut P,
    opt: &mut Adam,
    critic: &NestedCritic,
    env: &E,
    spectrum: &Spectrum,
    cfg: &ActorConfig,
    nested: &NestedConfig,
    seed: u64,
    iteration: usize,
    trace: &mut Vec<TraceRow>,
) -> Result<()>
where
    E: Environment + ?Sized,
    P: Policy + ?Sized,
{
    let size = effective_batch(cfg.batch, spectrum);
    for epoch in 0..cfg.epochs {
        let batch_seed = derive_seed(seed, ACTOR_TAG, (iteration as u64) << 32 | epoch as u64);
        let visits = nested_rollout(env, &*policy, &critic.net, nested.inner_m, size, batch_seed);
        let lr = opt.lr();
        let (loss, mut grad) = nested_actor_loss_and_grad(&*policy, &visits, spectrum);
        if !loss.is_finite() {
            return Err(Error::Numerical(format!(
                "nested actor iteration {iteration} epoch {epoch} (lr {lr}): loss is {loss}"
            )));
        }
        grad.iter_mut().for_each(|g| *g /= size as f64);
        opt.step(policy.params_mut(), &grad)?;
        policy.project();
        opt.end_epoch();
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

/// Nested counterpart of `run_actor_critic`.
#[allow(clippy::too_many_arguments)]
pub fn run_nested<E, P>(
    env: &E,
    policy: &mut P,
    policy_opt: &mut Adam,
    critic: &mut NestedCritic,
    spectrum: &Spectrum,
    critic_cfg: &CriticConfig,
    actor_cfg: &ActorConfig,
    nested: &NestedConfig,
    iterations: usize,
    seed: u64,
    trace: &mut Vec<TraceRow>,
    on_iteration: &mut dyn FnMut(usize, &P, &NestedCritic) -> Result<()>,
) -> Result<RunLedger>
where
    E: Environment + ?Sized,
    P: Policy,
{
    nested.validate()?;
    let counting = CountingEnv::new(env);
    let mut ledger = RunLedger {
        method: "nested".into(),
        ..RunLedger::default()
    };
    for it in 0..iterations {
        let clock = Instant::now();
        counting.reset();
        train_nested_critic(
            critic, &counting, &*policy, spectrum, critic_cfg, nested, seed, it, trace,
        )?;
        ledger.critic_transitions += counting.transitions();
        ledger.critic_epochs += critic_cfg.epochs as u64;
        ledger.critic_seconds += clock.elapsed().as_secs_f64();

        let clock = Instant::now();
        counting.reset();
        train_nested_actor(
            policy, policy_opt, critic, &counting, spectrum, actor_cfg, nested, seed, it, trace,
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
    use crate::envs::{ConstantCostEnv, StatArbEnv, StatArbSpec};
    use crate::neural::ConstantPolicy;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn net(dim: usize) -> Mlp {
        Mlp::new(
            MlpShape::new(dim, &[4], 1, OutputActivation::Identity),
            &mut ChaCha8Rng::seed_from_u64(0),
        )
    }

    #[test]
    fn constant_one_period_target() {
        let env = ConstantCostEnv::new(1, 0.3);
        let s = Spectrum::cvar(0.9).unwrap();
        let states: Vec<(usize, Vec<f64>)> =
            (0..5).map(|i| (0, vec![0.0, i as f64 / 5.0])).collect();
        let targets = nested_targets(
            &env,
            &ConstantPolicy::new(vec![0.0]),
            &s,
            &states,
            &net(2),
            7,
            &mut episode_rng(0, 0),
        );
        assert!(targets.iter().all(|&x| (x - 0.3).abs() < 1e-15));
    }

    #[test]
    fn deterministic_target_ignores_inner_m() {
        let env = StatArbEnv::new(StatArbSpec {
            sigma: 0.0,
            horizon: 2,
            ..StatArbSpec::default()
        })
        .unwrap();
        let s = Spectrum::cvar(0.6).unwrap();
        let state = vec![(0, vec![0.0, 1.2, 0.0])];
        let p = ConstantPolicy::new(vec![0.4]);
        let v = net(3);
        let a = nested_targets(&env, &p, &s, &state, &v, 2, &mut episode_rng(0, 0));
        let b = nested_targets(&env, &p, &s, &state, &v, 50, &mut episode_rng(1, 0));
        assert!((a[0] - b[0]).abs() < 1e-12);
    }

    #[test]
    fn rollout_transition_count() {
        let env = CountingEnv::new(ConstantCostEnv::new(3, 1.0));
        let visits = nested_rollout(&env, &ConstantPolicy::new(vec![0.0]), &net(2), 10, 4, 0);
        assert_eq!(env.transitions(), 4 * 3 * 10);
        assert_eq!(visits.len(), 4);
        assert!(visits
            .iter()
            .all(|v| v.len() == 3 && v.iter().all(|x| x.totals.len() == 10)));
    }

    #[test]
    fn rejects_single_inner_draw() {
        assert!(NestedConfig { inner_m: 1 }.validate().is_err());
    }

    #[test]
    fn zero_iterations_change_nothing() {
        let env = ConstantCostEnv::new(2, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut critic = NestedCritic::new(2, &[4], StepDecay::constant(0.01), &mut rng);
        let before = critic.clone();
        let mut p = ConstantPolicy::new(vec![0.0]);
        let mut opt = Adam::new(0, StepDecay::constant(0.01));
        let ledger = run_nested(
            &env,
            &mut p,
            &mut opt,
            &mut critic,
            &Spectrum::cvar(0.5).unwrap(),
            &CriticConfig::default(),
            &ActorConfig::default(),
            &NestedConfig::default(),
            0,
            0,
            &mut Vec::new(),
            &mut |_, _, _| Ok(()),
        )
        .unwrap();
        assert_eq!(critic, before);
        assert_eq!(ledger.critic_transitions, 0);
    }

    #[test]
    fn one_period_value_learns_the_constant() {
        let env = ConstantCostEnv::new(1, 0.8);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut critic = NestedCritic::new(2, &[8], StepDecay::constant(0.02), &mut rng);
        let cfg = CriticConfig {
            hidden: vec![8],
            epochs: 400,
            batch: 16,
            target_interval: 50,
            lr: StepDecay::constant(0.02),
            lr_restart: true,
        };
        let p = ConstantPolicy::new(vec![0.0]);
        let s = Spectrum::cvar(0.5).unwrap();
        train_nested_critic(
            &mut critic,
            &env,
            &p,
            &s,
            &cfg,
            &NestedConfig { inner_m: 4 },
            1,
            0,
            &mut Vec::new(),
        )
        .unwrap();
        for x in [-0.9, 0.0, 0.7] {
            assert!((critic.value(&[0.0, x]) - 0.8).abs() < 0.02);
        }
    }
}
