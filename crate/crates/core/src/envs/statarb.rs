//! Single-asset trading on a mean-reverting Ornstein-Uhlenbeck price with
//! quadratic transaction costs and a quadratic penalty on terminal inventory.
//!
//! State `(t/T, S_t, q_t)`. The raw action is squashed into a trade
//! `a = a_min + (a_max - a_min) * sigmoid(raw)`, then projected so the
//! inventory stays inside `[q_min, q_max]`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Environment, SimRng};
use crate::error::{Error, Result};
use crate::neural::mlp::sigmoid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatArbSpec {
    pub horizon: usize,
    pub kappa: f64,
    pub mu: f64,
    pub sigma: f64,
    pub phi1: f64,
    pub phi2: f64,
    pub q_min: f64,
    pub q_max: f64,
    pub a_min: f64,
    pub a_max: f64,
    /// Initial inventory is uniform on `[-q0_spread, q0_spread]`; zero by default.
    pub q0_spread: f64,
    /// Period length; `1/T` when absent.
    pub dt: Option<f64>,
    /// Score bound `C`; derived from the parameters when absent.
    pub cost_bound: Option<f64>,
}

impl Default for StatArbSpec {
    fn default() -> Self {
        Self {
            horizon: 5,
            kappa: 2.0,
            mu: 1.0,
            sigma: 0.2,
            phi1: 0.005,
            phi2: 0.5,
            q_min: -5.0,
            q_max: 5.0,
            a_min: -2.0,
            a_max: 2.0,
            q0_spread: 0.0,
            dt: None,
            cost_bound: None,
        }
    }
}

impl StatArbSpec {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if self.horizon == 0 {
            bad.push("horizon must be at least 1");
        }
        if !(self.kappa > 0.0) {
            bad.push("kappa must be positive");
        }
        if !(self.sigma >= 0.0) {
            bad.push("sigma must be nonnegative");
        }
        if !(self.q_min < self.q_max) {
            bad.push("q_min must be below q_max");
        }
        if !(self.a_min < self.a_max) {
            bad.push("a_min must be below a_max");
        }
        if !(self.phi1 >= 0.0 && self.phi2 >= 0.0) {
            bad.push("phi1 and phi2 must be nonnegative");
        }
        if !(self.q0_spread >= 0.0) || self.q0_spread > self.q_max.min(-self.q_min) {
            bad.push("q0_spread must lie in [0, min(q_max, -q_min)]");
        }
        if self.dt.is_some_and(|dt| !(dt > 0.0)) {
            bad.push("dt must be positive");
        }
        if self.cost_bound.is_some_and(|c| !(c > 0.0)) {
            bad.push("cost_bound must be positive");
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(format!("statarb: {}", bad.join("; "))))
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt.unwrap_or(1.0 / self.horizon as f64)
    }

    /// Exact OU transition over one period driven by the normal draw `z`.
    pub fn ou_step(&self, s: f64, z: f64) -> f64 {
        let dt = self.dt();
        let decay = (-self.kappa * dt).exp();
        let sd = self.sigma * ((1.0 - (-2.0 * self.kappa * dt).exp()) / (2.0 * self.kappa)).sqrt();
        self.mu + (s - self.mu) * decay + sd * z
    }

    pub fn stationary_sd(&self) -> f64 {
        self.sigma / (2.0 * self.kappa).sqrt()
    }

    /// Trade requested by a raw action, before the inventory projection.
    pub fn trade(&self, raw: f64) -> f64 {
        self.a_min + (self.a_max - self.a_min) * sigmoid(raw)
    }

    /// Raw action that requests the trade `a`, for `a` strictly inside the bounds.
    pub fn raw_for_trade(&self, a: f64) -> f64 {
        let u = (a - self.a_min) / (self.a_max - self.a_min);
        (u / (1.0 - u)).ln()
    }

    fn default_cost_bound(&self) -> f64 {
        let trade = self.a_max.abs().max(self.a_min.abs());
        let inventory = self.q_max.abs().max(self.q_min.abs());
        4.0 * (trade * self.horizon as f64 * (self.mu + 3.0 * self.sigma)
            + inventory * inventory * self.phi2)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatArbEnv {
    spec: StatArbSpec,
}

impl StatArbEnv {
    pub fn new(spec: StatArbSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self { spec })
    }

    pub fn spec(&self) -> &StatArbSpec {
        &self.spec
    }

    /// Executed trade and next inventory for a raw action at inventory `q`.
    pub fn execute(&self, q: f64, raw: f64) -> (f64, f64) {
        let next = (q + self.spec.trade(raw)).clamp(self.spec.q_min, self.spec.q_max);
        (next - q, next)
    }
}

impl Environment for StatArbEnv {
    fn horizon(&self) -> usize {
        self.spec.horizon
    }

    fn state_dim(&self) -> usize {
        3
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn initial_state(&self, rng: &mut SimRng) -> Vec<f64> {
        let z: f64 = rng.sample(StandardNormal);
        let s = self.spec.mu + self.spec.stationary_sd() * z;
        let q = if self.spec.q0_spread > 0.0 {
            rng.random_range(-self.spec.q0_spread..=self.spec.q0_spread)
        } else {
            0.0
        };
        vec![0.0, s, q]
    }

    fn step(&self, t: usize, state: &[f64], raw: &[f64], rng: &mut SimRng) -> (Vec<f64>, f64) {
        let (s, q) = (state[1], state[2]);
        let (a, q_next) = self.execute(q, raw[0]);
        let z: f64 = rng.sample(StandardNormal);
        let s_next = self.spec.ou_step(s, z);
        let mut cost = a * s + a * a * self.spec.phi1;
        if t + 1 == self.spec.horizon {
            cost += -q_next * s_next + q_next * q_next * self.spec.phi2;
        }
        let tau = (t + 1) as f64 / self.spec.horizon as f64;
        (vec![tau, s_next, q_next], cost)
    }

    fn cost_bound(&self) -> f64 {
        self.spec
            .cost_bound
            .unwrap_or_else(|| self.spec.default_cost_bound())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{episode_rng, simulate_episode};
    use crate::neural::{ConstantPolicy, Policy};

    fn spec() -> StatArbSpec {
        StatArbSpec::default()
    }

    #[test]
    fn deterministic_decay() {
        let s = StatArbSpec {
            sigma: 0.0,
            dt: Some(2f64.ln() / 2.0),
            ..spec()
        };
        assert!((s.ou_step(2.0, 0.7) - 1.5).abs() < 1e-15);
        assert_eq!(s.ou_step(1.0, -0.3), 1.0);
    }

    #[test]
    fn ou_mean() {
        let s = spec();
        let mut rng = episode_rng(3, 0);
        let n = 1_000_000;
        let mean = (0..n)
            .map(|_| s.ou_step(2.0, rng.sample(StandardNormal)))
            .sum::<f64>()
            / n as f64;
        let exact = s.mu + (2.0 - s.mu) * (-s.kappa * s.dt()).exp();
        assert!((mean - exact).abs() < 3.0 * s.stationary_sd() / 1e3);
    }

    #[test]
    fn default_bound() {
        assert!((StatArbEnv::new(spec()).unwrap().cost_bound() - 114.0).abs() < 1e-9);
    }

    #[test]
    fn zero_trade_without_noise_costs_nothing() {
        let env = StatArbEnv::new(StatArbSpec {
            sigma: 0.0,
            ..spec()
        })
        .unwrap();
        let ep = simulate_episode(
            &env,
            &ConstantPolicy::new(vec![0.0]),
            &mut episode_rng(0, 0),
        );
        assert!(ep.costs().iter().all(|&c| c == 0.0));
    }

    /// Buys one unit at t = 0, then holds.
    struct BuyOnce(f64);

    impl Policy for BuyOnce {
        fn action_dim(&self) -> usize {
            1
        }
        fn sample(&self, state: &[f64], _: &mut SimRng) -> Vec<f64> {
            self.mode(state)
        }
        fn mode(&self, state: &[f64]) -> Vec<f64> {
            vec![if state[0] == 0.0 { self.0 } else { 0.0 }]
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

    #[test]
    fn buy_then_hold_costs() {
        let s = StatArbSpec {
            horizon: 2,
            sigma: 0.0,
            ..spec()
        };
        let env = StatArbEnv::new(s.clone()).unwrap();
        let ep = simulate_episode(&env, &BuyOnce(s.raw_for_trade(1.0)), &mut episode_rng(0, 0));
        assert!((ep.cost(0) - 1.005).abs() < 1e-12);
        assert!((ep.cost(1) + 0.5).abs() < 1e-12);
    }

    #[test]
    fn trades_and_inventory_stay_in_bounds() {
        let env = StatArbEnv::new(StatArbSpec {
            q0_spread: 5.0,
            ..spec()
        })
        .unwrap();
        let mut rng = episode_rng(1, 0);
        for _ in 0..2000 {
            let raw: f64 = rng.random_range(-30.0..30.0);
            let mut state = env.initial_state(&mut rng);
            for t in 0..5 {
                let (a, q) = env.execute(state[2], raw);
                assert!(a >= -2.0 && a <= 2.0 && q >= -5.0 && q <= 5.0);
                state = env.step(t, &state, &[raw], &mut rng).0;
            }
        }
    }

    #[test]
    fn total_cost_is_minus_terminal_wealth() {
        let env = StatArbEnv::new(spec()).unwrap();
        let mut rng = episode_rng(4, 0);
        let mut state = env.initial_state(&mut rng);
        let mut y = 0.0;
        let mut total = 0.0;
        for t in 0..5 {
            let raw = [rng.random_range(-2.0..2.0)];
            let (a, q) = env.execute(state[2], raw[0]);
            let (next, cost) = env.step(t, &state, &raw, &mut rng);
            y += -a * state[1] - a * a * 0.005;
            if t == 4 {
                y += q * next[1] - q * q * 0.5;
            }
            total += cost;
            state = next;
        }
        assert!((total + y).abs() < 1e-10);
    }

    #[test]
    fn invalid_spec() {
        let err = StatArbEnv::new(StatArbSpec {
            kappa: 0.0,
            q_min: 6.0,
            ..spec()
        })
        .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("kappa") && msg.contains("q_min"));
    }
}
