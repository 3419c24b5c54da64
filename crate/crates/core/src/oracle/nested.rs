//! Nested Monte-Carlo evaluation of the dynamic spectral risk of a fixed
//! policy.
//!
//! At a state, `inner_m` one-step transitions are drawn (action resampled
//! each time) and the empirical spectral risk of `cost + continuation` is
//! taken. The continuation is either estimated the same way, recursively
//! (cost `inner_m^(T-t)`), or read from per-period tables fitted on a
//! uniform state grid and interpolated multilinearly.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::envs::{derive_seed, episode_rng, Environment, SimRng};
use crate::error::{Error, Result};
use crate::neural::Policy;
use crate::oracle::empirical::DiscreteDistribution;
use crate::risk::Spectrum;

const TABLE_TAG: u64 = 0x7ab1e;
const PROBE_TAG: u64 = 0x9b0be;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridAxis {
    /// Index into the state vector.
    pub slot: usize,
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

/// Tensor grid over some state coordinates. Coordinates without an axis
/// (other than time) are taken from `template`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateGrid {
    pub axes: Vec<GridAxis>,
    pub template: Vec<f64>,
}

impl StateGrid {
    pub fn validate(&self, state_dim: usize) -> Result<()> {
        if self.template.len() != state_dim {
            return Err(Error::Config(format!(
                "grid template has {} entries, state has {state_dim}",
                self.template.len()
            )));
        }
        for a in &self.axes {
            if a.slot == 0 || a.slot >= state_dim || a.points < 2 || !(a.lo < a.hi) {
                return Err(Error::Config(format!("invalid grid axis {a:?}")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.points).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn coord(a: &GridAxis, k: usize) -> f64 {
        a.lo + (a.hi - a.lo) * k as f64 / (a.points - 1) as f64
    }

    /// State at flat grid index `i` and normalized time `tau`.
    pub fn state(&self, i: usize, tau: f64) -> Vec<f64> {
        let mut s = self.template.clone();
        s[0] = tau;
        let mut rest = i;
        for a in self.axes.iter().rev() {
            s[a.slot] = Self::coord(a, rest % a.points);
            rest /= a.points;
        }
        s
    }

    /// Multilinear interpolation of `values` (one per grid point) at
    /// `state`; coordinates outside the grid are clamped to its edge.
    pub fn interpolate(&self, values: &[f64], state: &[f64]) -> f64 {
        let d = self.axes.len();
        let mut base = vec![0usize; d];
        let mut frac = vec![0.0; d];
        for (k, a) in self.axes.iter().enumerate() {
            let h = (a.hi - a.lo) / (a.points - 1) as f64;
            let u = ((state[a.slot] - a.lo) / h).clamp(0.0, (a.points - 1) as f64);
            let j = (u.floor() as usize).min(a.points - 2);
            base[k] = j;
            frac[k] = u - j as f64;
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << d) {
            let mut idx = 0;
            let mut w = 1.0;
            for (k, a) in self.axes.iter().enumerate() {
                let bit = (corner >> (d - 1 - k)) & 1;
                idx = idx * a.points + base[k] + bit;
                w *= if bit == 1 { frac[k] } else { 1.0 - frac[k] };
            }
            if w != 0.0 {
                acc += w * values[idx];
            }
        }
        acc
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NestedOracleConfig {
    pub inner_m: usize,
    /// Independent replications of every probe estimate.
    pub outer_n: usize,
    pub seed: u64,
    /// Continuation tables; exact recursion when absent.
    pub grid: Option<StateGrid>,
}

/// Estimate at one probe state: mean over replications and its standard
/// error (zero with a single replication).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NestedEstimate {
    pub value: f64,
    pub std_error: f64,
}

/// Nested estimator bound to an environment, a policy and a spectrum, with
/// any continuation tables already fitted.
pub struct NestedOracle<'a, E: ?Sized, P: ?Sized> {
    env: &'a E,
    policy: &'a P,
    spectrum: &'a Spectrum,
    cfg: NestedOracleConfig,
    /// `tables[t]` holds grid values of the risk-to-go at period `t`.
    tables: Vec<Option<Vec<f64>>>,
}

/// Generator for one replication of one probe.
pub fn probe_rng(seed: u64, probe: usize, replication: usize) -> SimRng {
    episode_rng(
        derive_seed(seed, PROBE_TAG, probe as u64),
        replication as u64,
    )
}

impl<'a, E, P> NestedOracle<'a, E, P>
where
    E: Environment + ?Sized,
    P: Policy + ?Sized,
{
    pub fn new(
        env: &'a E,
        policy: &'a P,
        spectrum: &'a Spectrum,
        cfg: NestedOracleConfig,
    ) -> Result<Self> {
        if cfg.inner_m < 2 || cfg.outer_n < 1 {
            return Err(Error::Argument(format!(
                "nested oracle needs inner_m >= 2 and outer_n >= 1, got {} and {}",
                cfg.inner_m, cfg.outer_n
            )));
        }
        let horizon = env.horizon();
        let mut oracle = Self {
            env,
            policy,
            spectrum,
            cfg,
            tables: vec![None; horizon],
        };
        if let Some(grid) = oracle.cfg.grid.clone() {
            grid.validate(env.state_dim())?;
            for t in (1..horizon).rev() {
                let tau = t as f64 / horizon as f64;
                let table: Vec<f64> = (0..grid.len())
                    .into_par_iter()
                    .map(|i| {
                        let mut rng = episode_rng(
                            derive_seed(oracle.cfg.seed, TABLE_TAG + t as u64, i as u64),
                            0,
                        );
                        oracle.one_step(t, &grid.state(i, tau), &mut rng)
                    })
                    .collect();
                oracle.tables[t] = Some(table);
            }
        }
        Ok(oracle)
    }

    fn continuation(&self, t: usize, state: &[f64], seed: u64) -> f64 {
        if t >= self.env.horizon() {
            return 0.0;
        }
        match (&self.tables[t], &self.cfg.grid) {
            (Some(table), Some(grid)) => grid.interpolate(table, state),
            _ => self.one_step(t, state, &mut episode_rng(seed, 0)),
        }
    }

    /// Empirical spectral risk of `c + continuation` over `inner_m` draws.
    fn one_step(&self, t: usize, state: &[f64], rng: &mut SimRng) -> f64 {
        let m = self.cfg.inner_m;
        let draws: Vec<(Vec<f64>, f64)> = (0..m)
            .map(|_| {
                let raw = self.policy.sample(state, rng);
                self.env.step(t, state, &raw, rng)
            })
            .collect();
        let base = derive_seed(rng_seed_word(rng), t as u64, 0);
        let last = t + 1 >= self.env.horizon();
        let totals: Vec<f64> = if last || self.tables[t + 1].is_some() {
            draws
                .iter()
                .map(|(next, c)| {
                    c + if last {
                        0.0
                    } else {
                        self.continuation(t + 1, next, 0)
                    }
                })
                .collect()
        } else {
            draws
                .par_iter()
                .enumerate()
                .map(|(j, (next, c))| {
                    c + self.continuation(t + 1, next, derive_seed(base, 1, j as u64))
                })
                .collect()
        };
        DiscreteDistribution::from_samples(&totals)
            .expect("simulated costs are finite")
            .spectral(self.spectrum)
    }

    /// Risk-to-go at `state` in period `t` for probe number `probe`.
    pub fn estimate(&self, probe: usize, t: usize, state: &[f64]) -> NestedEstimate {
        let reps: Vec<f64> = (0..self.cfg.outer_n)
            .map(|r| self.one_step(t, state, &mut probe_rng(self.cfg.seed, probe, r)))
            .collect();
        let n = reps.len() as f64;
        let mean = reps.iter().sum::<f64>() / n;
        let std_error = if reps.len() > 1 {
            (reps.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
        } else {
            0.0
        };
        NestedEstimate {
            value: mean,
            std_error,
        }
    }

    /// Fitted table value at period `t`, if tables are in use.
    pub fn table_value(&self, t: usize, state: &[f64]) -> Option<f64> {
        match (self.tables.get(t)?, &self.cfg.grid) {
            (Some(table), Some(grid)) => Some(grid.interpolate(table, state)),
            _ => None,
        }
    }
}

/// A word drawn from `rng` to seed child streams.
fn rng_seed_word(rng: &mut SimRng) -> u64 {
    use rand::RngCore;
    rng.next_u64()
}

/// Convenience wrapper: estimates at `(period, state)` probes.
pub fn nested_dynamic_risk<E, P>(
    env: &E,
    policy: &P,
    spectrum: &Spectrum,
    probes: &[(usize, Vec<f64>)],
    cfg: NestedOracleConfig,
) -> Result<Vec<NestedEstimate>>
where
    E: Environment + ?Sized,
    P: Policy + ?Sized,
{
    let oracle = NestedOracle::new(env, policy, spectrum, cfg)?;
    Ok(probes
        .iter()
        .enumerate()
        .map(|(i, (t, s))| oracle.estimate(i, *t, s))
        .collect())
}
