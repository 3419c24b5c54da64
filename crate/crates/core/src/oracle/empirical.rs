//! Empirical VaR, CVaR and spectral risk of discrete distributions.
//!
//! Quantiles are left-continuous (smallest `x` with `F(x) >= alpha`) and
//! CVaR is the exact tail integral of that quantile function, so an atom
//! straddling `alpha` contributes only its mass above `alpha`.

use crate::error::{Error, Result};
use crate::risk::Spectrum;

const MASS_TOL: f64 = 1e-12;

/// Finite distribution with atoms sorted by value.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDistribution {
    values: Vec<f64>,
    /// Cumulative probability up to and including each atom.
    cumulative: Vec<f64>,
}

impl DiscreteDistribution {
    /// Equally weighted samples.
    pub fn from_samples(samples: &[f64]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Argument("empty sample".into()));
        }
        if samples.iter().any(|x| !x.is_finite()) {
            return Err(Error::Argument("non-finite sample".into()));
        }
        let mut values = samples.to_vec();
        values.sort_by(f64::total_cmp);
        let n = values.len() as f64;
        let cumulative = (1..=values.len()).map(|i| i as f64 / n).collect();
        Ok(Self { values, cumulative })
    }

    /// Atoms with nonnegative weights, normalized to total mass one.
    pub fn from_weighted(values: &[f64], weights: &[f64]) -> Result<Self> {
        if values.is_empty() || values.len() != weights.len() {
            return Err(Error::Argument(format!(
                "{} values with {} weights",
                values.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite()))
            || values.iter().any(|x| !x.is_finite())
        {
            return Err(Error::Argument(
                "weights must be finite and nonnegative".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::Argument("total weight is zero".into()));
        }
        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
        let mut acc = 0.0;
        let mut sorted = Vec::with_capacity(values.len());
        let mut cumulative = Vec::with_capacity(values.len());
        for i in order {
            acc += weights[i];
            sorted.push(values[i]);
            cumulative.push(acc / total);
        }
        *cumulative.last_mut().unwrap() = 1.0;
        Ok(Self {
            values: sorted,
            cumulative,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mean(&self) -> f64 {
        let mut prev = 0.0;
        let mut acc = 0.0;
        for (x, f) in self.values.iter().zip(&self.cumulative) {
            acc += x * (f - prev);
            prev = *f;
        }
        acc
    }

    /// Left-continuous `alpha`-quantile.
    pub fn var(&self, alpha: f64) -> f64 {
        let idx = self
            .cumulative
            .iter()
            .position(|&f| f >= alpha - MASS_TOL)
            .unwrap_or(self.values.len() - 1);
        self.values[idx]
    }

    /// `1/(1-alpha) * integral_alpha^1 VaR_u du`.
    pub fn cvar(&self, alpha: f64) -> f64 {
        let mut prev = 0.0;
        let mut acc = 0.0;
        for (x, &f) in self.values.iter().zip(&self.cumulative) {
            let lo = if prev > alpha { prev } else { alpha };
            if f > lo {
                acc += x * (f - lo);
            }
            prev = f;
        }
        acc / (1.0 - alpha)
    }

    pub fn spectral(&self, spectrum: &Spectrum) -> f64 {
        spectrum
            .atoms()
            .map(|a| a.weight * self.cvar(a.threshold))
            .sum()
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::Argument(format!("threshold {alpha} outside (0, 1)")))
    }
}

pub fn empirical_var(samples: &[f64], alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok(DiscreteDistribution::from_samples(samples)?.var(alpha))
}

pub fn empirical_cvar(samples: &[f64], alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok(DiscreteDistribution::from_samples(samples)?.cvar(alpha))
}

pub fn empirical_spectral(samples: &[f64], spectrum: &Spectrum) -> Result<f64> {
    Ok(DiscreteDistribution::from_samples(samples)?.spectral(spectrum))
}
