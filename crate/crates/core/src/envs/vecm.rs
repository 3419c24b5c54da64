//! Allocation across assets whose log prices follow a vector error
//! correction model without lagged differences,
//! `Y' = Y + Pi Y + C + u` with `u ~ N(0, Sigma_u)`, one step per trading day.
//!
//! State `(t/T, S_1, ..., S_d, y)` with `S = exp(Y)` and `Y_0 = 0`.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::portfolio::{pilot_max_wealth, psd_factor, softmax};
use super::{Environment, SimRng};
use crate::error::{io_err, Error, Result};

const BUNDLED: &str = include_str!("../../data/vecm_fit.txt");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VecmSpec {
    pub horizon: usize,
    pub trading_days: usize,
    /// Parameter file in the bundled matrix format; the fitted estimates
    /// shipped with the crate when absent.
    pub params_file: Option<PathBuf>,
    pub cost_bound: Option<f64>,
}

impl Default for VecmSpec {
    fn default() -> Self {
        Self {
            horizon: 24,
            trading_days: 252,
            params_file: None,
            cost_bound: None,
        }
    }
}

impl VecmSpec {
    /// Number of daily steps inside each decision period. Period `t` ends on
    /// day `round(days * (t + 1) / T)`.
    pub fn steps_per_period(&self) -> Vec<usize> {
        let end =
            |t: usize| (self.trading_days as f64 * t as f64 / self.horizon as f64).round() as usize;
        (0..self.horizon).map(|t| end(t + 1) - end(t)).collect()
    }
}

/// The model matrices and the noise factor.
#[derive(Debug, Clone)]
pub struct VecmModel {
    pi: DMatrix<f64>,
    sigma_u: DMatrix<f64>,
    c: DVector<f64>,
    factor: DMatrix<f64>,
}

impl VecmModel {
    /// Symmetrizes `sigma_u`, floors negative eigenvalues at zero and
    /// factors it.
    pub fn new(pi: DMatrix<f64>, sigma_u: DMatrix<f64>, c: DVector<f64>) -> Result<Self> {
        let d = c.len();
        if pi.shape() != (d, d) || sigma_u.shape() != (d, d) {
            return Err(Error::Config(format!(
                "vecm: Pi is {:?}, Sigma_u is {:?}, C has {d} rows",
                pi.shape(),
                sigma_u.shape()
            )));
        }
        let sym = (&sigma_u + sigma_u.transpose()) * 0.5;
        let factor = psd_factor(&sym, f64::INFINITY)
            .ok_or_else(|| Error::Config("vecm: Sigma_u could not be factored".into()))?;
        Ok(Self {
            pi,
            sigma_u: sym,
            c,
            factor,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut blocks: Vec<(String, DMatrix<f64>)> = Vec::new();
        let mut lines = text
            .lines()
            .map(|l| l.split('#').next().unwrap().trim())
            .filter(|l| !l.is_empty());
        while let Some(header) = lines.next() {
            let f: Vec<&str> = header.split_whitespace().collect();
            let bad = || Error::Config(format!("vecm: bad header '{header}'"));
            let ["matrix", name, rows, cols, scale] = f.as_slice() else {
                return Err(bad());
            };
            let rows: usize = rows.parse().map_err(|_| bad())?;
            let cols: usize = cols.parse().map_err(|_| bad())?;
            let scale: f64 = scale.parse().map_err(|_| bad())?;
            let mut values = Vec::with_capacity(rows * cols);
            for _ in 0..rows {
                let row = lines
                    .next()
                    .ok_or_else(|| Error::Config(format!("vecm: matrix {name} truncated")))?;
                for tok in row.split_whitespace() {
                    let x: f64 = tok
                        .parse()
                        .map_err(|_| Error::Config(format!("vecm: bad value {tok} in {name}")))?;
                    values.push(x * scale);
                }
            }
            if values.len() != rows * cols {
                return Err(Error::Config(format!(
                    "vecm: matrix {name} has the wrong size"
                )));
            }
            blocks.push((
                name.to_string(),
                DMatrix::from_row_slice(rows, cols, &values),
            ));
        }
        let take = |name: &str| {
            blocks
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, m)| m.clone())
                .ok_or_else(|| Error::Config(format!("vecm: missing matrix {name}")))
        };
        let c = take("C")?;
        if c.ncols() != 1 {
            return Err(Error::Config("vecm: C must be a column".into()));
        }
        Self::new(take("Pi")?, take("Sigma_u")?, c.column(0).into_owned())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::parse(&text)
    }

    /// The fitted estimates shipped with the crate.
    pub fn bundled() -> Self {
        Self::parse(BUNDLED).expect("bundled VECM parameters are valid")
    }

    pub fn dim(&self) -> usize {
        self.c.len()
    }

    pub fn pi(&self) -> &DMatrix<f64> {
        &self.pi
    }

    /// The symmetrized noise covariance actually simulated.
    pub fn sigma_u(&self) -> &DMatrix<f64> {
        &self.sigma_u
    }

    pub fn c(&self) -> &DVector<f64> {
        &self.c
    }

    /// One daily step of the log prices.
    pub fn step(&self, y: &DVector<f64>, rng: &mut SimRng) -> DVector<f64> {
        let d = self.dim();
        let z = DVector::from_iterator(d, (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
        y + &self.pi * y + &self.c + &self.factor * z
    }
}

#[derive(Debug, Clone)]
pub struct VecmEnv {
    spec: VecmSpec,
    model: VecmModel,
    steps: Vec<usize>,
    cost_bound: f64,
}

impl VecmEnv {
    pub fn new(spec: VecmSpec) -> Result<Self> {
        let model = match &spec.params_file {
            Some(p) => VecmModel::load(p)?,
            None => VecmModel::bundled(),
        };
        Self::with_model(spec, model)
    }

    pub fn with_model(spec: VecmSpec, model: VecmModel) -> Result<Self> {
        if spec.horizon == 0 || spec.trading_days < spec.horizon {
            return Err(Error::Config(format!(
                "vecm: need 1 <= horizon ({}) <= trading_days ({})",
                spec.horizon, spec.trading_days
            )));
        }
        let steps = spec.steps_per_period();
        let mut env = Self {
            spec,
            model,
            steps,
            cost_bound: 0.0,
        };
        env.cost_bound = match env.spec.cost_bound {
            Some(c) if c > 0.0 => c,
            Some(c) => {
                return Err(Error::Config(format!(
                    "vecm: cost_bound {c} must be positive"
                )))
            }
            None => 4.0 * pilot_max_wealth(&env, env.model.dim() + 1),
        };
        Ok(env)
    }

    pub fn model(&self) -> &VecmModel {
        &self.model
    }

    pub fn spec(&self) -> &VecmSpec {
        &self.spec
    }
}

impl Environment for VecmEnv {
    fn horizon(&self) -> usize {
        self.spec.horizon
    }

    fn state_dim(&self) -> usize {
        self.model.dim() + 2
    }

    fn action_dim(&self) -> usize {
        self.model.dim()
    }

    fn initial_state(&self, _: &mut SimRng) -> Vec<f64> {
        let mut s = vec![0.0];
        s.extend(std::iter::repeat_n(1.0, self.model.dim()));
        s.push(1.0);
        s
    }

    fn step(&self, t: usize, state: &[f64], raw: &[f64], rng: &mut SimRng) -> (Vec<f64>, f64) {
        let d = self.model.dim();
        let prices = &state[1..=d];
        let wealth = state[d + 1];
        let mut y = DVector::from_iterator(d, prices.iter().map(|s| s.ln()));
        for _ in 0..self.steps[t] {
            y = self.model.step(&y, rng);
        }
        let w = softmax(raw);
        let next: Vec<f64> = y.iter().map(|v| v.exp()).collect();
        let gross: f64 = (0..d).map(|i| w[i] * next[i] / prices[i]).sum();
        let wealth_next = wealth * gross;
        let mut out = Vec::with_capacity(d + 2);
        out.push((t + 1) as f64 / self.spec.horizon as f64);
        out.extend_from_slice(&next);
        out.push(wealth_next);
        (out, wealth - wealth_next)
    }

    fn cost_bound(&self) -> f64 {
        self.cost_bound
    }
}
