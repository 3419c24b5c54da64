//! Self-financing allocation across correlated assets following either a
//! geometric Brownian motion or an exponential OU process with the same
//! mean price `e^{mu t}`.
//!
//! State `(t/T, S_1, ..., S_I, y)`. Raw actions go through a softmax; with
//! the risk-free slot enabled the last weight earns `e^{r dt}`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{episode_rng, Environment, SimRng};
use crate::error::{Error, Result};

const PILOT_EPISODES: u64 = 10_000;
const PILOT_SEED: u64 = 0x5eed_0f_9110;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssetDynamics {
    Gbm,
    ExpOu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssetSpec {
    pub dynamics: AssetDynamics,
    pub mu: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Correlation {
    /// Same correlation for every pair.
    Uniform(f64),
    Matrix(Vec<Vec<f64>>),
}

impl Correlation {
    pub fn matrix(&self, n: usize) -> DMatrix<f64> {
        match self {
            Correlation::Uniform(r) => DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { *r }),
            Correlation::Matrix(rows) => DMatrix::from_fn(n, n, |i, j| {
                rows.get(i)
                    .and_then(|r| r.get(j))
                    .copied()
                    .unwrap_or(f64::NAN)
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PortfolioSpec {
    pub horizon: usize,
    /// Period length; `1/12` when absent.
    pub dt: Option<f64>,
    pub assets: Vec<AssetSpec>,
    /// Mean-reversion rate shared by the exp-OU assets.
    pub kappa: f64,
    pub rho: Correlation,
    pub include_riskfree: bool,
    pub riskfree_rate: f64,
    pub cost_bound: Option<f64>,
}

impl Default for PortfolioSpec {
    fn default() -> Self {
        let asset = |mu, sigma| AssetSpec {
            dynamics: AssetDynamics::Gbm,
            mu,
            sigma,
        };
        Self {
            horizon: 12,
            dt: None,
            assets: vec![asset(0.03, 0.06), asset(0.06, 0.12), asset(0.09, 0.18)],
            kappa: 2.0,
            rho: Correlation::Uniform(0.2),
            include_riskfree: false,
            riskfree_rate: 0.0,
            cost_bound: None,
        }
    }
}

impl PortfolioSpec {
    pub fn with_dynamics(mut self, dynamics: AssetDynamics) -> Self {
        for a in &mut self.assets {
            a.dynamics = dynamics;
        }
        self
    }

    pub fn dt(&self) -> f64 {
        self.dt.unwrap_or(1.0 / 12.0)
    }

    /// Mean-reversion level of the log price of asset `i` at time `t`.
    pub fn theta(&self, i: usize, t: f64) -> f64 {
        let a = &self.assets[i];
        a.mu * t - a.sigma * a.sigma * (1.0 - (-2.0 * self.kappa * t).exp()) / (4.0 * self.kappa)
    }
}

/// Factor `L` with `L L^T = m` for a symmetric positive semi-definite `m`.
/// Eigenvalues below `-tol` are rejected; the rest are floored at zero.
pub(crate) fn psd_factor(m: &DMatrix<f64>, tol: f64) -> Option<DMatrix<f64>> {
    if let Some(ch) = m.clone().cholesky() {
        return Some(ch.l());
    }
    let eig = m.clone().symmetric_eigen();
    if eig.eigenvalues.iter().any(|&l| l < -tol || !l.is_finite()) {
        return None;
    }
    let roots = DVector::from_iterator(
        m.nrows(),
        eig.eigenvalues.iter().map(|&l| l.max(0.0).sqrt()),
    );
    Some(eig.eigenvectors * DMatrix::from_diagonal(&roots))
}

/// Largest wealth (state slot `slot`) seen over pilot episodes with widely
/// dispersed random allocations.
pub(crate) fn pilot_max_wealth<E: Environment>(env: &E, slot: usize) -> f64 {
    let mut max: f64 = 1.0;
    for e in 0..PILOT_EPISODES {
        let mut rng = episode_rng(PILOT_SEED, e);
        let mut state = env.initial_state(&mut rng);
        for t in 0..env.horizon() {
            let raw: Vec<f64> = (0..env.action_dim())
                .map(|_| 3.0 * rng.sample::<f64, _>(StandardNormal))
                .collect();
            state = env.step(t, &state, &raw, &mut rng).0;
            max = max.max(state[slot]);
        }
    }
    max
}

/// Softmax of `raw`, shifted by its maximum for stability.
pub fn softmax(raw: &[f64]) -> Vec<f64> {
    let max = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = raw.iter().map(|x| (x - max).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|x| x / z).collect()
}

#[derive(Debug, Clone)]
pub struct PortfolioEnv {
    spec: PortfolioSpec,
    chol: DMatrix<f64>,
    cost_bound: f64,
}

impl PortfolioEnv {
    pub fn new(spec: PortfolioSpec) -> Result<Self> {
        let n = spec.assets.len();
        let mut bad = Vec::new();
        if spec.horizon == 0 {
            bad.push("horizon must be at least 1".to_string());
        }
        if n == 0 {
            bad.push("at least one asset is required".to_string());
        }
        if spec.dt.is_some_and(|dt| !(dt > 0.0)) {
            bad.push("dt must be positive".to_string());
        }
        if spec
            .assets
            .iter()
            .any(|a| !(a.sigma >= 0.0) || !a.mu.is_finite())
        {
            bad.push("asset drifts must be finite and volatilities nonnegative".to_string());
        }
        if spec
            .assets
            .iter()
            .any(|a| a.dynamics == AssetDynamics::ExpOu)
            && !(spec.kappa > 0.0)
        {
            bad.push("kappa must be positive for exp_ou assets".to_string());
        }
        let rho = spec.rho.matrix(n);
        let symmetric = (0..n).all(|i| (0..n).all(|j| (rho[(i, j)] - rho[(j, i)]).abs() < 1e-12));
        let unit = (0..n).all(|i| rho[(i, i)] == 1.0);
        if !symmetric || !unit {
            bad.push("rho must be symmetric with unit diagonal".to_string());
        }
        let chol = if bad.is_empty() {
            match psd_factor(&rho, 1e-12) {
                Some(l) => l,
                None => {
                    bad.push("rho is not positive semi-definite".to_string());
                    DMatrix::zeros(0, 0)
                }
            }
        } else {
            DMatrix::zeros(0, 0)
        };
        if !bad.is_empty() {
            return Err(Error::Config(format!("portfolio: {}", bad.join("; "))));
        }
        let mut env = Self {
            spec,
            chol,
            cost_bound: 0.0,
        };
        env.cost_bound = match env.spec.cost_bound {
            Some(c) if c > 0.0 => c,
            Some(c) => {
                return Err(Error::Config(format!(
                    "portfolio: cost_bound {c} must be positive"
                )))
            }
            None => 4.0 * pilot_max_wealth(&env, env.n_assets() + 1),
        };
        Ok(env)
    }

    pub fn spec(&self) -> &PortfolioSpec {
        &self.spec
    }

    pub fn n_assets(&self) -> usize {
        self.spec.assets.len()
    }

    /// Correlated standard normal shocks.
    pub fn shocks(&self, rng: &mut SimRng) -> Vec<f64> {
        let n = self.n_assets();
        let z = DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
        (&self.chol * z).iter().copied().collect()
    }

    /// Prices one period after `prices` at period `t`, driven by `shocks`.
    pub fn advance_prices(&self, t: usize, prices: &[f64], shocks: &[f64]) -> Vec<f64> {
        let dt = self.spec.dt();
        let (t0, t1) = (t as f64 * dt, (t + 1) as f64 * dt);
        let k = self.spec.kappa;
        self.spec
            .assets
            .iter()
            .enumerate()
            .map(|(i, a)| match a.dynamics {
                AssetDynamics::Gbm => {
                    prices[i]
                        * ((a.mu - 0.5 * a.sigma * a.sigma) * dt + a.sigma * dt.sqrt() * shocks[i])
                            .exp()
                }
                AssetDynamics::ExpOu => {
                    let x = prices[i].ln() - self.spec.theta(i, t0);
                    let sd = a.sigma * ((1.0 - (-2.0 * k * dt).exp()) / (2.0 * k)).sqrt();
                    let x_next = x * (-k * dt).exp() + sd * shocks[i];
                    (x_next + self.spec.theta(i, t1)).exp()
                }
            })
            .collect()
    }

    pub fn weights(&self, raw: &[f64]) -> Vec<f64> {
        softmax(raw)
    }
}

impl Environment for PortfolioEnv {
    fn horizon(&self) -> usize {
        self.spec.horizon
    }

    fn state_dim(&self) -> usize {
        self.n_assets() + 2
    }

    fn action_dim(&self) -> usize {
        self.n_assets() + usize::from(self.spec.include_riskfree)
    }

    fn initial_state(&self, _: &mut SimRng) -> Vec<f64> {
        let mut s = vec![0.0];
        s.extend(std::iter::repeat_n(1.0, self.n_assets()));
        s.push(1.0);
        s
    }

    fn step(&self, t: usize, state: &[f64], raw: &[f64], rng: &mut SimRng) -> (Vec<f64>, f64) {
        let n = self.n_assets();
        let prices = &state[1..=n];
        let y = state[n + 1];
        let shocks = self.shocks(rng);
        let next = self.advance_prices(t, prices, &shocks);
        let w = self.weights(raw);
        let mut gross: f64 = (0..n).map(|i| w[i] * next[i] / prices[i]).sum();
        if self.spec.include_riskfree {
            gross += w[n] * (self.spec.riskfree_rate * self.spec.dt()).exp();
        }
        let y_next = y * gross;
        let mut out = Vec::with_capacity(n + 2);
        out.push((t + 1) as f64 / self.spec.horizon as f64);
        out.extend_from_slice(&next);
        out.push(y_next);
        (out, y - y_next)
    }

    fn cost_bound(&self) -> f64 {
        self.cost_bound
    }
}
