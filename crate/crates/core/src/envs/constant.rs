use rand::Rng;

use super::{Environment, SimRng};

/// Charges the same cost every period. The second state coordinate is an
/// irrelevant uniform feature so that critics see varied inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantCostEnv {
    horizon: usize,
    cost: f64,
}

impl ConstantCostEnv {
    pub fn new(horizon: usize, cost: f64) -> Self {
        assert!(horizon > 0);
        Self { horizon, cost }
    }

    pub fn cost(&self) -> f64 {
        self.cost
    }
}

impl Environment for ConstantCostEnv {
    fn horizon(&self) -> usize {
        self.horizon
    }

    fn state_dim(&self) -> usize {
        2
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn initial_state(&self, rng: &mut SimRng) -> Vec<f64> {
        vec![0.0, rng.random_range(-1.0..1.0)]
    }

    fn step(&self, t: usize, _: &[f64], _: &[f64], rng: &mut SimRng) -> (Vec<f64>, f64) {
        let tau = (t + 1) as f64 / self.horizon as f64;
        (vec![tau, rng.random_range(-1.0..1.0)], self.cost)
    }

    fn cost_bound(&self) -> f64 {
        4.0 * (self.horizon as f64 * self.cost.abs()).max(1.0)
    }
}
