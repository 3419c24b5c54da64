//! Run configuration, read from TOML.
//!
//! ```toml
//! [run]
//! method = "elicitable"      # or "nested"
//! seed = 7
//! iterations = 300
//!
//! [env]
//! kind = "statarb"           # statarb | portfolio | vecm | constant
//! horizon = 5
//!
//! [[spectrum]]
//! threshold = 0.5
//! weight = 1.0
//!
//! [critic]
//! epochs = 50
//!
//! [actor]
//! epochs = 5
//!
//! [nested]
//! inner_m = 100
//! ```
//!
//! Every section and key is optional; omitted keys take the defaults of
//! the corresponding struct. Unknown keys are rejected.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::actor::ActorConfig;
use crate::critic::{Critic, CriticConfig, ValueEnsemble};
use crate::envs::{
    ConstantCostEnv, Environment, PortfolioEnv, PortfolioSpec, StatArbEnv, StatArbSpec, VecmEnv,
    VecmSpec,
};
use crate::error::{io_err, Error, Result};
use crate::nested::{NestedConfig, NestedCritic};
use crate::neural::{Adam, GaussianPolicy, MlpShape, Policy};
use crate::risk::{ScoreParams, Spectrum};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Elicitable,
    Nested,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Elicitable => "elicitable",
            Method::Nested => "nested",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub method: Method,
    pub seed: u64,
    pub iterations: usize,
    /// Episodes simulated for the final evaluation.
    pub eval_episodes: usize,
    /// Write a checkpoint and policy grid every this many iterations; 0 to
    /// write only the initial and final ones.
    pub snapshot_every: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            method: Method::Elicitable,
            seed: 0,
            iterations: 1500,
            eval_episodes: 10_000,
            snapshot_every: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantSpec {
    pub horizon: usize,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvSpec {
    Statarb(StatArbSpec),
    Portfolio(PortfolioSpec),
    Vecm(VecmSpec),
    Constant(ConstantSpec),
}

impl Default for EnvSpec {
    fn default() -> Self {
        EnvSpec::Statarb(StatArbSpec::default())
    }
}

impl EnvSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            EnvSpec::Statarb(_) => "statarb",
            EnvSpec::Portfolio(_) => "portfolio",
            EnvSpec::Vecm(_) => "vecm",
            EnvSpec::Constant(_) => "constant",
        }
    }

    pub fn build(&self) -> Result<AnyEnv> {
        Ok(match self {
            EnvSpec::Statarb(s) => AnyEnv::Statarb(StatArbEnv::new(s.clone())?),
            EnvSpec::Portfolio(s) => AnyEnv::Portfolio(PortfolioEnv::new(s.clone())?),
            EnvSpec::Vecm(s) => AnyEnv::Vecm(VecmEnv::new(s.clone())?),
            EnvSpec::Constant(s) => {
                if s.horizon == 0 || !s.cost.is_finite() {
                    return Err(Error::Config(
                        "env.horizon must be positive and env.cost finite".into(),
                    ));
                }
                AnyEnv::Constant(ConstantCostEnv::new(s.horizon, s.cost))
            }
        })
    }
}

/// A built environment of any configured kind.
#[derive(Debug, Clone)]
pub enum AnyEnv {
    Statarb(StatArbEnv),
    Portfolio(PortfolioEnv),
    Vecm(VecmEnv),
    Constant(ConstantCostEnv),
}

impl AnyEnv {
    pub fn as_dyn(&self) -> &dyn Environment {
        match self {
            AnyEnv::Statarb(e) => e,
            AnyEnv::Portfolio(e) => e,
            AnyEnv::Vecm(e) => e,
            AnyEnv::Constant(e) => e,
        }
    }
}

fn default_spectrum() -> Spectrum {
    Spectrum::cvar(0.5).expect("valid threshold")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub run: RunSection,
    pub env: EnvSpec,
    pub spectrum: Spectrum,
    pub critic: CriticConfig,
    pub actor: ActorConfig,
    pub nested: NestedConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            run: RunSection::default(),
            env: EnvSpec::default(),
            spectrum: default_spectrum(),
            critic: CriticConfig::default(),
            actor: ActorConfig::default(),
            nested: NestedConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.critic.validate()?;
        self.actor.validate()?;
        if self.run.method == Method::Nested {
            self.nested.validate()?;
        }
        self.env.build()?;
        Ok(())
    }

    pub fn score_params(&self, env: &dyn Environment) -> Result<ScoreParams> {
        ScoreParams::new(env.cost_bound(), self.spectrum.clone())
    }

    /// Freshly initialized networks for this configuration.
    pub fn init_models(&self, env: &dyn Environment) -> Models {
        let mut rng = ChaCha8Rng::seed_from_u64(self.run.seed);
        let shape = MlpShape::new(
            env.state_dim(),
            &self.actor.hidden,
            env.action_dim(),
            self.actor.output,
        );
        let p = shape.init_params(&mut rng);
        let policy = GaussianPolicy::new(shape, p, self.actor.log_std_init);
        let policy_opt = Adam::new(policy.params().len(), self.actor.lr);
        let critic = match self.run.method {
            Method::Elicitable => CriticModel::Elicitable(Critic::new(
                ValueEnsemble::new(
                    self.spectrum.clone(),
                    env.state_dim(),
                    &self.critic.hidden,
                    &mut rng,
                ),
                self.critic.lr,
            )),
            Method::Nested => CriticModel::Nested(NestedCritic::new(
                env.state_dim(),
                &self.critic.hidden,
                self.critic.lr,
                &mut rng,
            )),
        };
        Models {
            policy,
            policy_opt,
            critic,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CriticModel {
    Elicitable(Critic),
    Nested(NestedCritic),
}

/// Everything a run trains.
#[derive(Debug, Clone, PartialEq)]
pub struct Models {
    pub policy: GaussianPolicy,
    pub policy_opt: Adam,
    pub critic: CriticModel,
}
