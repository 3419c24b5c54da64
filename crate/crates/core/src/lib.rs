//! Time-consistent dynamic spectral risk for reinforcement learning.
//!
//! The value function of a policy under a dynamic spectral risk measure is
//! estimated by regression on strictly consistent scoring functions (one
//! network for each VaR level plus one for the excess risk), and the policy
//! is improved with a score-function gradient whose saddle point reuses the
//! critic's VaR estimates. A nested Monte-Carlo variant of the same
//! actor-critic is included for comparison, together with exact tree and
//! empirical oracles.

pub mod actor;
pub mod config;
pub mod critic;
pub mod envs;
pub mod error;
pub mod nested;
pub mod neural;
pub mod oracle;
pub mod risk;
pub mod run;
pub mod suites;

pub use envs::Environment;
pub use error::{Error, Result};
pub use risk::{score_cvar, score_spectral, RiskEstimate, ScoreParams, Spectrum};
