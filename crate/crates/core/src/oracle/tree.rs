//! Finite decision trees with exact backward induction of the dynamic
//! spectral risk, policy evaluation for randomized tabular policies, and the
//! static (precommitment) comparison.

use std::collections::HashMap;
use std::path::Path;

use crate::critic::RiskCritic;
use crate::error::{io_err, Error, Result};
use crate::oracle::empirical::DiscreteDistribution;
use crate::risk::{RiskEstimate, Spectrum};

const PROB_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct TreeOutcome {
    pub child: usize,
    pub prob: f64,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeAction {
    pub label: String,
    pub outcomes: Vec<TreeOutcome>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    pub name: String,
    pub depth: usize,
    pub actions: Vec<TreeAction>,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        self.actions.is_empty()
    }
}

/// Finite-horizon decision tree rooted at node 0. Every leaf sits at depth
/// `horizon`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteTreeMdp {
    nodes: Vec<TreeNode>,
    horizon: usize,
}

/// Exact dynamic-risk solution: value per node and the minimizing action at
/// every decision node.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeSolution {
    pub values: Vec<f64>,
    pub actions: Vec<Option<usize>>,
}

/// Risk of a fixed randomized policy at each node, with the one-step VaR of
/// the running risk-to-go for every spectrum atom. Doubles as an exact
/// critic for environments whose state carries the node index in slot 1.
#[derive(Debug, Clone, PartialEq)]
pub struct TreePolicyValues {
    pub spectrum: Spectrum,
    pub values: Vec<f64>,
    pub var_levels: Vec<Vec<f64>>,
}

impl RiskCritic for TreePolicyValues {
    fn spectrum(&self) -> &Spectrum {
        &self.spectrum
    }

    fn evaluate(&self, state: &[f64]) -> RiskEstimate {
        let node = state[1].round() as usize;
        RiskEstimate::new(self.var_levels[node].clone(), self.values[node])
    }
}

impl FiniteTreeMdp {
    /// Builds and validates a tree from nodes (root first) and edges
    /// `(from, action, to, probability, cost)`.
    pub fn from_edges(names: &[&str], edges: &[(&str, &str, &str, f64, f64)]) -> Result<Self> {
        let mut index = HashMap::new();
        for (i, n) in names.iter().enumerate() {
            if index.insert(n.to_string(), i).is_some() {
                return Err(Error::Tree(format!("duplicate node {n}")));
            }
        }
        let mut nodes: Vec<TreeNode> = names
            .iter()
            .map(|n| TreeNode {
                name: n.to_string(),
                depth: 0,
                actions: Vec::new(),
            })
            .collect();
        let mut parent: Vec<Option<usize>> = vec![None; names.len()];
        for &(from, action, to, prob, cost) in edges {
            let f = *index
                .get(from)
                .ok_or_else(|| Error::Tree(format!("unknown node {from}")))?;
            let t = *index
                .get(to)
                .ok_or_else(|| Error::Tree(format!("unknown node {to}")))?;
            if !(prob > 0.0 && prob <= 1.0) || !cost.is_finite() {
                return Err(Error::Tree(format!(
                    "edge {from} -> {to}: probability {prob} / cost {cost} invalid"
                )));
            }
            if t == 0 || parent[t].is_some() {
                return Err(Error::Tree(format!("node {to} has more than one parent")));
            }
            parent[t] = Some(f);
            let node = &mut nodes[f];
            let slot = match node.actions.iter().position(|a| a.label == action) {
                Some(i) => i,
                None => {
                    node.actions.push(TreeAction {
                        label: action.to_string(),
                        outcomes: Vec::new(),
                    });
                    node.actions.len() - 1
                }
            };
            node.actions[slot].outcomes.push(TreeOutcome {
                child: t,
                prob,
                cost,
            });
        }
        for node in &nodes {
            for a in &node.actions {
                let total: f64 = a.outcomes.iter().map(|o| o.prob).sum();
                if (total - 1.0).abs() > PROB_TOL {
                    return Err(Error::Tree(format!(
                        "action {} at {} has total probability {total}",
                        a.label, node.name
                    )));
                }
            }
        }
        // depths by traversal from the root; unreachable nodes are an error
        let mut seen = vec![false; nodes.len()];
        let mut stack = vec![(0usize, 0usize)];
        let mut horizon = None;
        while let Some((i, d)) = stack.pop() {
            seen[i] = true;
            nodes[i].depth = d;
            if nodes[i].is_leaf() {
                match horizon {
                    None => horizon = Some(d),
                    Some(h) if h != d => {
                        return Err(Error::Tree(format!(
                            "leaf {} at depth {d}, expected {h}",
                            nodes[i].name
                        )))
                    }
                    _ => {}
                }
            }
            for a in &nodes[i].actions {
                for o in &a.outcomes {
                    stack.push((o.child, d + 1));
                }
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::Tree(format!(
                "node {} unreachable from root",
                nodes[i].name
            )));
        }
        let horizon = horizon.unwrap_or(0);
        if horizon == 0 {
            return Err(Error::Tree("tree has no edges".into()));
        }
        Ok(Self { nodes, horizon })
    }

    /// Parses the line format
    ///
    /// ```text
    /// node <name>
    /// edge <from> <action> <to> <probability> <cost>
    /// ```
    ///
    /// with `#` comments. The first node is the root.
    pub fn parse(text: &str) -> Result<Self> {
        let mut names = Vec::new();
        let mut edges = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let bad = || Error::Tree(format!("line {}: cannot parse '{raw}'", lineno + 1));
            match fields.as_slice() {
                ["node", name] => names.push(*name),
                ["edge", from, action, to, p, c] => {
                    let p: f64 = p.parse().map_err(|_| bad())?;
                    let c: f64 = c.parse().map_err(|_| bad())?;
                    edges.push((*from, *action, *to, p, c));
                }
                _ => return Err(bad()),
            }
        }
        Self::from_edges(&names, &edges)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::parse(&text)
    }

    /// The two-period up/down example shipped in `data/two_period_tree.txt`.
    pub fn two_period_example() -> Self {
        Self::parse(include_str!("../../data/two_period_tree.txt"))
            .expect("bundled tree fixture is valid")
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &TreeNode {
        &self.nodes[i]
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn find(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.name == name)
    }

    /// Largest number of actions at any node.
    pub fn max_actions(&self) -> usize {
        self.nodes
            .iter()
            .map(|n| n.actions.len())
            .max()
            .unwrap_or(0)
    }

    /// Nodes ordered so that children come before parents.
    fn bottom_up(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.nodes.len()).collect();
        order.sort_by_key(|&i| std::cmp::Reverse(self.nodes[i].depth));
        order
    }
}

fn action_risk(action: &TreeAction, values: &[f64], spectrum: &Spectrum) -> f64 {
    let (xs, ps): (Vec<f64>, Vec<f64>) = action
        .outcomes
        .iter()
        .map(|o| (o.cost + values[o.child], o.prob))
        .unzip();
    DiscreteDistribution::from_weighted(&xs, &ps)
        .expect("validated tree")
        .spectral(spectrum)
}

pub const TIE_TOL: f64 = 1e-12;

/// Backward induction of the time-consistent dynamic spectral risk.
/// Actions within `TIE_TOL` of the best count as ties, which go to the
/// lowest action index.
pub fn tree_dynamic_risk(mdp: &FiniteTreeMdp, spectrum: &Spectrum) -> TreeSolution {
    let n = mdp.nodes.len();
    let mut values = vec![0.0; n];
    let mut actions = vec![None; n];
    for i in mdp.bottom_up() {
        let node = &mdp.nodes[i];
        if node.is_leaf() {
            continue;
        }
        let mut best = (f64::INFINITY, 0);
        for (a, action) in node.actions.iter().enumerate() {
            let r = action_risk(action, &values, spectrum);
            if r < best.0 - TIE_TOL {
                best = (r, a);
            }
        }
        values[i] = best.0;
        actions[i] = Some(best.1);
    }
    TreeSolution { values, actions }
}

/// Exact dynamic risk of a randomized policy `probs(node) -> action probabilities`.
pub fn tree_policy_risk(
    mdp: &FiniteTreeMdp,
    spectrum: &Spectrum,
    probs: impl Fn(usize) -> Vec<f64>,
) -> TreePolicyValues {
    let n = mdp.nodes.len();
    let mut values = vec![0.0; n];
    let mut var_levels = vec![vec![0.0; spectrum.len()]; n];
    for i in mdp.bottom_up() {
        let node = &mdp.nodes[i];
        if node.is_leaf() {
            continue;
        }
        let pi = probs(i);
        let mut xs = Vec::new();
        let mut ps = Vec::new();
        for (a, action) in node.actions.iter().enumerate() {
            for o in &action.outcomes {
                xs.push(o.cost + values[o.child]);
                ps.push(pi[a] * o.prob);
            }
        }
        let dist = DiscreteDistribution::from_weighted(&xs, &ps).expect("validated tree");
        values[i] = dist.spectral(spectrum);
        var_levels[i] = spectrum.thresholds().iter().map(|&a| dist.var(a)).collect();
    }
    TreePolicyValues {
        spectrum: spectrum.clone(),
        values,
        var_levels,
    }
}

/// Best open-loop plan (one action index per period) for the static spectral
/// risk of the total cost. Returns `(plan, value)`; plans are enumerated in
/// lexicographic order and ties keep the first.
pub fn static_precommitment(mdp: &FiniteTreeMdp, spectrum: &Spectrum) -> (Vec<usize>, f64) {
    let t = mdp.horizon;
    let width = mdp.max_actions();
    let mut best: Option<(Vec<usize>, f64)> = None;
    let mut plan = vec![0usize; t];
    'plans: loop {
        if let Some(dist) = plan_distribution(mdp, &plan) {
            let v = dist.spectral(spectrum);
            if best.as_ref().is_none_or(|(_, b)| v < *b) {
                best = Some((plan.clone(), v));
            }
        }
        // odometer increment, last period fastest
        for d in (0..t).rev() {
            plan[d] += 1;
            if plan[d] < width {
                continue 'plans;
            }
            plan[d] = 0;
        }
        break;
    }
    best.expect("at least one feasible plan")
}

/// Distribution of the total cost under an open-loop plan, or `None` if some
/// reachable node lacks the planned action.
pub fn plan_distribution(mdp: &FiniteTreeMdp, plan: &[usize]) -> Option<DiscreteDistribution> {
    let mut xs = Vec::new();
    let mut ps = Vec::new();
    let mut stack = vec![(0usize, 0.0, 1.0)];
    while let Some((i, cost, prob)) = stack.pop() {
        let node = &mdp.nodes[i];
        if node.is_leaf() {
            xs.push(cost);
            ps.push(prob);
            continue;
        }
        let action = node.actions.get(plan[node.depth])?;
        for o in &action.outcomes {
            stack.push((o.child, cost + o.cost, prob * o.prob));
        }
    }
    DiscreteDistribution::from_weighted(&xs, &ps).ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_shape() {
        let mdp = FiniteTreeMdp::two_period_example();
        assert_eq!(mdp.horizon(), 2);
        assert_eq!(mdp.nodes().len(), 11);
        let upp = mdp.find("s1_up_prime").unwrap();
        assert_eq!(mdp.node(upp).actions.len(), 2);
    }

    #[test]
    fn static_and_dynamic_disagree() {
        let mdp = FiniteTreeMdp::two_period_example();
        let s = Spectrum::cvar(0.9).unwrap();
        let (plan, v) = static_precommitment(&mdp, &s);
        assert_eq!(plan, vec![0, 1]);
        assert!((v + 0.7).abs() < 1e-12);
        let dp = tree_dynamic_risk(&mdp, &s);
        assert_eq!(dp.actions[0], Some(0));
        assert_eq!(dp.actions[mdp.find("s1_up_prime").unwrap()], Some(0));
        assert!(dp.values[0].abs() < 1e-12);
    }

    #[test]
    fn single_edge_tree() {
        let mdp = FiniteTreeMdp::from_edges(&["a", "b"], &[("a", "go", "b", 1.0, 3.25)]).unwrap();
        let dp = tree_dynamic_risk(&mdp, &Spectrum::cvar(0.5).unwrap());
        assert_eq!(dp.values[0], 3.25);
    }

    #[test]
    fn structural_errors() {
        assert!(FiniteTreeMdp::from_edges(
            &["a", "b", "c"],
            &[("a", "x", "b", 0.5, 0.0), ("a", "x", "c", 0.4, 0.0)]
        )
        .is_err());
        // uneven leaf depths
        assert!(FiniteTreeMdp::from_edges(
            &["a", "b", "c", "d"],
            &[
                ("a", "x", "b", 1.0, 0.0),
                ("a", "y", "c", 1.0, 0.0),
                ("b", "x", "d", 1.0, 0.0)
            ]
        )
        .is_err());
        // second parent
        assert!(FiniteTreeMdp::from_edges(
            &["a", "b"],
            &[("a", "x", "b", 1.0, 0.0), ("a", "y", "b", 1.0, 0.0)]
        )
        .is_err());
        assert!(FiniteTreeMdp::parse("node a\nedge a x\n").is_err());
    }

    #[test]
    fn policy_risk_of_deterministic_policy_matches_dp() {
        let mdp = FiniteTreeMdp::two_period_example();
        let s = Spectrum::cvar(0.9).unwrap();
        let dp = tree_dynamic_risk(&mdp, &s);
        let pv = tree_policy_risk(&mdp, &s, |i| {
            let mut p = vec![0.0; mdp.node(i).actions.len()];
            p[dp.actions[i].unwrap()] = 1.0;
            p
        });
        for (a, b) in pv.values.iter().zip(&dp.values) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
