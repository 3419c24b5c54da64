use rand::Rng;

use super::{Environment, SimRng};
use crate::oracle::tree::FiniteTreeMdp;

/// A finite decision tree as an episodic environment. State
/// `(t/T, node index)`; the raw action is the action index.
#[derive(Debug, Clone)]
pub struct TreeEnv {
    mdp: FiniteTreeMdp,
    cost_bound: f64,
}

impl TreeEnv {
    pub fn new(mdp: FiniteTreeMdp) -> Self {
        let worst = mdp
            .nodes()
            .iter()
            .flat_map(|n| {
                n.actions
                    .iter()
                    .flat_map(|a| a.outcomes.iter().map(|o| o.cost.abs()))
            })
            .fold(0.0, f64::max);
        let cost_bound = 4.0 * (worst * mdp.horizon() as f64).max(1.0);
        Self { mdp, cost_bound }
    }

    pub fn mdp(&self) -> &FiniteTreeMdp {
        &self.mdp
    }

    pub fn node_of(state: &[f64]) -> usize {
        state[1].round() as usize
    }
}

impl Environment for TreeEnv {
    fn horizon(&self) -> usize {
        self.mdp.horizon()
    }

    fn state_dim(&self) -> usize {
        2
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn initial_state(&self, _: &mut SimRng) -> Vec<f64> {
        vec![0.0, 0.0]
    }

    fn step(&self, t: usize, state: &[f64], raw: &[f64], rng: &mut SimRng) -> (Vec<f64>, f64) {
        let node = self.mdp.node(Self::node_of(state));
        let a = (raw[0].round().max(0.0) as usize).min(node.actions.len() - 1);
        let outcomes = &node.actions[a].outcomes;
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut pick = outcomes.len() - 1;
        for (i, o) in outcomes.iter().enumerate() {
            acc += o.prob;
            if u < acc {
                pick = i;
                break;
            }
        }
        let o = &outcomes[pick];
        let tau = (t + 1) as f64 / self.mdp.horizon() as f64;
        (vec![tau, o.child as f64], o.cost)
    }

    fn cost_bound(&self) -> f64 {
        self.cost_bound
    }
}
