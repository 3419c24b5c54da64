//! Brute-force references used to check the learned estimators.

pub mod empirical;
pub mod nested;
pub mod tree;

pub use empirical::{empirical_cvar, empirical_spectral, empirical_var, DiscreteDistribution};
pub use nested::{nested_dynamic_risk, NestedOracle, NestedOracleConfig, StateGrid};
pub use tree::{
    plan_distribution, static_precommitment, tree_dynamic_risk, tree_policy_risk, FiniteTreeMdp,
    TreeSolution,
};
