//! Stochastic policies. Every policy returns a raw action vector; the
//! environment maps raw actions to feasible trades or weights.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::envs::SimRng;
use crate::neural::mlp::{MlpCache, MlpShape};

pub const LOG_STD_MIN: f64 = -4.0;
pub const LOG_STD_MAX: f64 = 1.0;

pub trait Policy: Send + Sync {
    fn action_dim(&self) -> usize;

    /// Draws a raw action for `state`.
    fn sample(&self, state: &[f64], rng: &mut SimRng) -> Vec<f64>;

    /// The action used for deterministic evaluation grids.
    fn mode(&self, state: &[f64]) -> Vec<f64>;

    fn log_prob(&self, state: &[f64], raw: &[f64]) -> f64;

    fn params(&self) -> &[f64];

    fn params_mut(&mut self) -> &mut [f64];

    /// Adds `weight * d log pi(raw | state) / d params` into `grad`.
    fn accumulate_log_prob_grad(&self, state: &[f64], raw: &[f64], weight: f64, grad: &mut [f64]);

    /// Restores constraints on the parameters after an optimizer step.
    fn project(&mut self) {}
}

/// Diagonal Gaussian with an MLP mean and a learned state-independent
/// log standard deviation. Parameters are the mean-network parameters
/// followed by one log-std per action dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPolicy {
    shape: MlpShape,
    params: Vec<f64>,
}

impl GaussianPolicy {
    pub fn new(shape: MlpShape, params: Vec<f64>, log_std: f64) -> Self {
        assert_eq!(params.len(), shape.param_count());
        let d = shape.output_dim();
        let mut params = params;
        params.extend(std::iter::repeat_n(
            log_std.clamp(LOG_STD_MIN, LOG_STD_MAX),
            d,
        ));
        Self { shape, params }
    }

    pub fn init<R: Rng + ?Sized>(shape: MlpShape, rng: &mut R) -> Self {
        let p = shape.init_params(rng);
        Self::new(shape, p, 0.5f64.ln())
    }

    pub fn from_params(shape: MlpShape, params: Vec<f64>) -> crate::error::Result<Self> {
        if params.len() != shape.param_count() + shape.output_dim() {
            return Err(crate::error::Error::Checkpoint(format!(
                "policy expects {} parameters, found {}",
                shape.param_count() + shape.output_dim(),
                params.len()
            )));
        }
        Ok(Self { shape, params })
    }

    pub fn shape(&self) -> &MlpShape {
        &self.shape
    }

    fn split(&self) -> (&[f64], &[f64]) {
        self.params.split_at(self.shape.param_count())
    }

    pub fn log_std(&self) -> &[f64] {
        self.split().1
    }

    pub fn mean(&self, state: &[f64]) -> Vec<f64> {
        self.shape.eval(self.split().0, state)
    }

    /// Reparameterized draw `mean + exp(log_std) * z` with its log-density.
    pub fn sample_with(&self, state: &[f64], z: &[f64]) -> (Vec<f64>, f64) {
        let mean = self.mean(state);
        let raw: Vec<f64> = mean
            .iter()
            .zip(self.log_std())
            .zip(z)
            .map(|((m, ls), zi)| m + ls.exp() * zi)
            .collect();
        let lp = self.log_prob(state, &raw);
        (raw, lp)
    }
}

impl Policy for GaussianPolicy {
    fn action_dim(&self) -> usize {
        self.shape.output_dim()
    }

    fn sample(&self, state: &[f64], rng: &mut SimRng) -> Vec<f64> {
        let z: Vec<f64> = (0..self.action_dim())
            .map(|_| rng.sample(StandardNormal))
            .collect();
        let mean = self.mean(state);
        mean.iter()
            .zip(self.log_std())
            .zip(&z)
            .map(|((m, ls), zi)| m + ls.exp() * zi)
            .collect()
    }

    fn mode(&self, state: &[f64]) -> Vec<f64> {
        self.mean(state)
    }

    fn log_prob(&self, state: &[f64], raw: &[f64]) -> f64 {
        let mean = self.mean(state);
        mean.iter()
            .zip(self.log_std())
            .zip(raw)
            .map(|((m, ls), x)| {
                let u = (x - m) / ls.exp();
                -ls - 0.5 * (2.0 * PI).ln() - 0.5 * u * u
            })
            .sum()
    }

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn accumulate_log_prob_grad(&self, state: &[f64], raw: &[f64], weight: f64, grad: &mut [f64]) {
        let n = self.shape.param_count();
        let (net, log_std) = self.split();
        let mut cache = MlpCache::default();
        let mean = self.shape.forward_cached(net, state, &mut cache).to_vec();
        let mut dmean = Vec::with_capacity(mean.len());
        for (i, ((m, ls), x)) in mean.iter().zip(log_std).zip(raw).enumerate() {
            let inv_var = (-2.0 * ls).exp();
            let diff = x - m;
            dmean.push(weight * diff * inv_var);
            grad[n + i] += weight * (diff * diff * inv_var - 1.0);
        }
        self.shape.backward(net, &cache, &dmean, &mut grad[..n]);
    }

    fn project(&mut self) {
        let n = self.shape.param_count();
        for ls in &mut self.params[n..] {
            *ls = ls.clamp(LOG_STD_MIN, LOG_STD_MAX);
        }
    }
}

/// Softmax over actions with one logit per (state, action). The state index
/// is read from `state[index_slot]`; the raw action is the chosen index.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularSoftmaxPolicy {
    n_states: usize,
    n_actions: usize,
    index_slot: usize,
    logits: Vec<f64>,
}

impl TabularSoftmaxPolicy {
    pub fn uniform(n_states: usize, n_actions: usize, index_slot: usize) -> Self {
        Self {
            n_states,
            n_actions,
            index_slot,
            logits: vec![0.0; n_states * n_actions],
        }
    }

    pub fn with_logits(
        n_states: usize,
        n_actions: usize,
        index_slot: usize,
        logits: Vec<f64>,
    ) -> Self {
        assert_eq!(logits.len(), n_states * n_actions);
        Self {
            n_states,
            n_actions,
            index_slot,
            logits,
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn index(&self, state: &[f64]) -> usize {
        let i = state[self.index_slot].round() as usize;
        assert!(i < self.n_states, "state index {i} out of range");
        i
    }

    /// Action probabilities at state index `i`.
    pub fn probs(&self, i: usize) -> Vec<f64> {
        let row = &self.logits[i * self.n_actions..(i + 1) * self.n_actions];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = row.iter().map(|l| (l - max).exp()).collect();
        let z: f64 = e.iter().sum();
        e.into_iter().map(|x| x / z).collect()
    }
}

impl Policy for TabularSoftmaxPolicy {
    fn action_dim(&self) -> usize {
        1
    }

    fn sample(&self, state: &[f64], rng: &mut SimRng) -> Vec<f64> {
        let p = self.probs(self.index(state));
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (a, pa) in p.iter().enumerate() {
            acc += pa;
            if u < acc {
                return vec![a as f64];
            }
        }
        vec![(self.n_actions - 1) as f64]
    }

    fn mode(&self, state: &[f64]) -> Vec<f64> {
        let p = self.probs(self.index(state));
        let best = (0..p.len()).fold(0, |b, a| if p[a] > p[b] { a } else { b });
        vec![best as f64]
    }

    fn log_prob(&self, state: &[f64], raw: &[f64]) -> f64 {
        self.probs(self.index(state))[raw[0] as usize].ln()
    }

    fn params(&self) -> &[f64] {
        &self.logits
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.logits
    }

    fn accumulate_log_prob_grad(&self, state: &[f64], raw: &[f64], weight: f64, grad: &mut [f64]) {
        let i = self.index(state);
        let a = raw[0] as usize;
        for (b, pb) in self.probs(i).into_iter().enumerate() {
            let ind = if a == b { 1.0 } else { 0.0 };
            grad[i * self.n_actions + b] += weight * (ind - pb);
        }
    }
}

/// Always returns the same raw action; has no parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantPolicy {
    raw: Vec<f64>,
}

impl ConstantPolicy {
    pub fn new(raw: Vec<f64>) -> Self {
        Self { raw }
    }
}

impl Policy for ConstantPolicy {
    fn action_dim(&self) -> usize {
        self.raw.len()
    }

    fn sample(&self, _: &[f64], _: &mut SimRng) -> Vec<f64> {
        self.raw.clone()
    }

    fn mode(&self, _: &[f64]) -> Vec<f64> {
        self.raw.clone()
    }

    fn log_prob(&self, _: &[f64], _: &[f64]) -> f64 {
        0.0
    }

    fn params(&self) -> &[f64] {
        &[]
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut []
    }

    fn accumulate_log_prob_grad(&self, _: &[f64], _: &[f64], _: f64, _: &mut [f64]) {}
}
