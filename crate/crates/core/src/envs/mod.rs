//! Episodic simulators and batch rollout.
//!
//! States always start with the normalized time `t/T`. Costs are wealth
//! decrements, so the total cost of an episode is minus its terminal PnL.

pub mod constant;
pub mod portfolio;
pub mod statarb;
pub mod tree;
pub mod vecm;

use std::sync::atomic::{AtomicU64, Ordering};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::neural::Policy;

pub use constant::ConstantCostEnv;
pub use portfolio::{AssetDynamics, AssetSpec, Correlation, PortfolioEnv, PortfolioSpec};
pub use statarb::{StatArbEnv, StatArbSpec};
pub use tree::TreeEnv;
pub use vecm::{VecmEnv, VecmModel, VecmSpec};

pub type SimRng = ChaCha8Rng;

/// Generator for episode `stream` of a batch seeded with `seed`.
pub fn episode_rng(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub trait Environment: Send + Sync {
    fn horizon(&self) -> usize;

    /// Length of the state vector, time feature included.
    fn state_dim(&self) -> usize;

    /// Length of the raw action vector the environment expects.
    fn action_dim(&self) -> usize;

    fn initial_state(&self, rng: &mut SimRng) -> Vec<f64>;

    /// One transition from `state` at period `t`. Returns the next state and
    /// the cost incurred, including any terminal settlement when
    /// `t + 1 == horizon`.
    fn step(
        &self,
        t: usize,
        state: &[f64],
        raw_action: &[f64],
        rng: &mut SimRng,
    ) -> (Vec<f64>, f64);

    /// A priori bound on the magnitude of any running risk-to-go.
    fn cost_bound(&self) -> f64;
}

impl<E: Environment + ?Sized> Environment for &E {
    fn horizon(&self) -> usize {
        (**self).horizon()
    }
    fn state_dim(&self) -> usize {
        (**self).state_dim()
    }
    fn action_dim(&self) -> usize {
        (**self).action_dim()
    }
    fn initial_state(&self, rng: &mut SimRng) -> Vec<f64> {
        (**self).initial_state(rng)
    }
    fn step(
        &self,
        t: usize,
        state: &[f64],
        raw_action: &[f64],
        rng: &mut SimRng,
    ) -> (Vec<f64>, f64) {
        (**self).step(t, state, raw_action, rng)
    }
    fn cost_bound(&self) -> f64 {
        (**self).cost_bound()
    }
}

impl<E: Environment + ?Sized> Environment for Box<E> {
    fn horizon(&self) -> usize {
        (**self).horizon()
    }
    fn state_dim(&self) -> usize {
        (**self).state_dim()
    }
    fn action_dim(&self) -> usize {
        (**self).action_dim()
    }
    fn initial_state(&self, rng: &mut SimRng) -> Vec<f64> {
        (**self).initial_state(rng)
    }
    fn step(
        &self,
        t: usize,
        state: &[f64],
        raw_action: &[f64],
        rng: &mut SimRng,
    ) -> (Vec<f64>, f64) {
        (**self).step(t, state, raw_action, rng)
    }
    fn cost_bound(&self) -> f64 {
        (**self).cost_bound()
    }
}

/// Wraps an environment and counts simulated transitions.
pub struct CountingEnv<E> {
    inner: E,
    steps: AtomicU64,
}

impl<E: Environment> CountingEnv<E> {
    pub fn new(inner: E) -> Self {
        Self {
            inner,
            steps: AtomicU64::new(0),
        }
    }

    pub fn transitions(&self) -> u64 {
        self.steps.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.steps.store(0, Ordering::Relaxed);
    }

    pub fn inner(&self) -> &E {
        &self.inner
    }
}

impl<E: Environment> Environment for CountingEnv<E> {
    fn horizon(&self) -> usize {
        self.inner.horizon()
    }
    fn state_dim(&self) -> usize {
        self.inner.state_dim()
    }
    fn action_dim(&self) -> usize {
        self.inner.action_dim()
    }
    fn initial_state(&self, rng: &mut SimRng) -> Vec<f64> {
        self.inner.initial_state(rng)
    }
    fn step(
        &self,
        t: usize,
        state: &[f64],
        raw_action: &[f64],
        rng: &mut SimRng,
    ) -> (Vec<f64>, f64) {
        self.steps.fetch_add(1, Ordering::Relaxed);
        self.inner.step(t, state, raw_action, rng)
    }
    fn cost_bound(&self) -> f64 {
        self.inner.cost_bound()
    }
}

/// One trajectory stored flat: `T + 1` states, `T` raw actions, `T` costs.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    state_dim: usize,
    action_dim: usize,
    states: Vec<f64>,
    actions: Vec<f64>,
    costs: Vec<f64>,
}

impl Episode {
    pub fn horizon(&self) -> usize {
        self.costs.len()
    }

    pub fn state(&self, t: usize) -> &[f64] {
        &self.states[t * self.state_dim..(t + 1) * self.state_dim]
    }

    pub fn action(&self, t: usize) -> &[f64] {
        &self.actions[t * self.action_dim..(t + 1) * self.action_dim]
    }

    pub fn cost(&self, t: usize) -> f64 {
        self.costs[t]
    }

    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    /// Wealth after each period starting from zero: `y_t = -(c_0 + ... + c_{t-1})`.
    pub fn pnl_path(&self) -> Vec<f64> {
        let mut y = 0.0;
        let mut path = vec![0.0];
        for c in &self.costs {
            y -= c;
            path.push(y);
        }
        path
    }

    pub fn total_cost(&self) -> f64 {
        self.costs.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeBatch {
    episodes: Vec<Episode>,
}

impl EpisodeBatch {
    pub fn new(episodes: Vec<Episode>) -> Self {
        Self { episodes }
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn episodes(&self) -> &[Episode] {
        &self.episodes
    }

    pub fn episode(&self, b: usize) -> &Episode {
        &self.episodes[b]
    }

    pub fn horizon(&self) -> usize {
        self.episodes.first().map_or(0, Episode::horizon)
    }

    pub fn transitions(&self) -> usize {
        self.episodes.iter().map(Episode::horizon).sum()
    }
}

pub fn simulate_episode<E, P>(env: &E, policy: &P, rng: &mut SimRng) -> Episode
where
    E: Environment + ?Sized,
    P: Policy + ?Sized,
{
    let horizon = env.horizon();
    let mut ep = Episode {
        state_dim: env.state_dim(),
        action_dim: env.action_dim(),
        states: Vec::with_capacity((horizon + 1) * env.state_dim()),
        actions: Vec::with_capacity(horizon * env.action_dim()),
        costs: Vec::with_capacity(horizon),
    };
    let mut state = env.initial_state(rng);
    for t in 0..horizon {
        let raw = policy.sample(&state, rng);
        let (next, cost) = env.step(t, &state, &raw, rng);
        ep.states.extend_from_slice(&state);
        ep.actions.extend_from_slice(&raw);
        ep.costs.push(cost);
        state = next;
    }
    ep.states.extend_from_slice(&state);
    ep
}

/// `count` episodes; episode `b` uses stream `b` of `seed`, so results do not
/// depend on the number of worker threads.
pub fn simulate_batch<E, P>(env: &E, policy: &P, count: usize, seed: u64) -> EpisodeBatch
where
    E: Environment + ?Sized,
    P: Policy + ?Sized,
{
    let episodes = (0..count)
        .into_par_iter()
        .map(|b| simulate_episode(env, policy, &mut episode_rng(seed, b as u64)))
        .collect();
    EpisodeBatch { episodes }
}

/// Mixes a run seed with a counter into a fresh seed for one batch.
pub fn derive_seed(seed: u64, tag: u64, index: u64) -> u64 {
    // splitmix64 finalizer over the combined words
    let mut z =
        seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
