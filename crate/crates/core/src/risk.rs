//! Finite-support spectra and strictly consistent scoring functions for the
//! pair (value-at-risk levels, spectral risk).
//!
//! The scoring functions use the log characterization on costs bounded below
//! by `-C`: the quantile components use constant `G_m`, and the risk
//! component uses `G_k(x) = -log(x + C)`. With that choice the score reads
//!
//! ```text
//! S(a, y) = log((a_k + C) / (y + C)) - a_k / (a_k + C)
//!         + 1/(a_k + C) * sum_m p_m / (1 - alpha_m) * [ (1{y <= a_m} - alpha_m) a_m + 1{y > a_m} y ]
//! ```
//!
//! which for a single atom `{(alpha, 1)}` is the usual joint (VaR, CVaR) score.

use serde::{Deserialize, Serialize};

use crate::error::{BoundArg, Error, Result};

/// Tolerance on the total mass of a spectrum.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

/// One atom `p * delta_alpha` of a finite-support spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumAtom {
    pub threshold: f64,
    pub weight: f64,
}

/// Finite-support spectrum `sum_m p_m delta_{alpha_m}`.
///
/// Thresholds are strictly increasing inside `(0, 1)`, weights are positive
/// and sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<SpectrumAtom>", into = "Vec<SpectrumAtom>")]
pub struct Spectrum {
    thresholds: Vec<f64>,
    weights: Vec<f64>,
}

impl Spectrum {
    pub fn new(thresholds: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        validate_spectrum(&thresholds, &weights)?;
        Ok(Self {
            thresholds,
            weights,
        })
    }

    /// Single atom at `alpha`: the one-step risk is `CVaR_alpha`.
    pub fn cvar(alpha: f64) -> Result<Self> {
        Self::new(vec![alpha], vec![1.0])
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Number of atoms (`k - 1`).
    pub fn len(&self) -> usize {
        self.thresholds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thresholds.is_empty()
    }

    pub fn min_threshold(&self) -> f64 {
        self.thresholds[0]
    }

    pub fn atoms(&self) -> impl Iterator<Item = SpectrumAtom> + '_ {
        self.thresholds
            .iter()
            .zip(&self.weights)
            .map(|(&threshold, &weight)| SpectrumAtom { threshold, weight })
    }
}

impl TryFrom<Vec<SpectrumAtom>> for Spectrum {
    type Error = Error;

    fn try_from(atoms: Vec<SpectrumAtom>) -> Result<Self> {
        let (thresholds, weights) = atoms.iter().map(|a| (a.threshold, a.weight)).unzip();
        Spectrum::new(thresholds, weights)
    }
}

impl From<Spectrum> for Vec<SpectrumAtom> {
    fn from(s: Spectrum) -> Self {
        s.atoms().collect()
    }
}

/// Checks every spectrum invariant and reports all violations at once.
pub fn validate_spectrum(thresholds: &[f64], weights: &[f64]) -> Result<()> {
    let mut violations = Vec::new();
    if thresholds.is_empty() {
        violations.push("spectrum has no atoms".to_string());
    }
    if thresholds.len() != weights.len() {
        violations.push(format!(
            "{} thresholds but {} weights",
            thresholds.len(),
            weights.len()
        ));
    }
    for (i, &a) in thresholds.iter().enumerate() {
        if !(a > 0.0 && a < 1.0) {
            violations.push(format!("threshold[{i}] = {a} is outside (0, 1)"));
        }
    }
    if thresholds.windows(2).any(|w| !(w[0] < w[1])) {
        violations.push("thresholds are not strictly increasing".to_string());
    }
    for (i, &p) in weights.iter().enumerate() {
        if !(p > 0.0 && p <= 1.0) {
            violations.push(format!("weight[{i}] = {p} is outside (0, 1]"));
        }
    }
    let total: f64 = weights.iter().sum();
    if !weights.is_empty() && !((total - 1.0).abs() <= WEIGHT_SUM_TOL) {
        violations.push(format!("weights sum to {total}, not 1"));
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(Error::Spectrum(violations))
    }
}

/// Bound and spectrum defining one strictly consistent score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreParams {
    pub cost_bound: f64,
    pub spectrum: Spectrum,
}

impl ScoreParams {
    pub fn new(cost_bound: f64, spectrum: Spectrum) -> Result<Self> {
        if !(cost_bound > 0.0 && cost_bound.is_finite()) {
            return Err(Error::Argument(format!(
                "cost bound C must be positive and finite, got {cost_bound}"
            )));
        }
        Ok(Self {
            cost_bound,
            spectrum,
        })
    }
}

/// Estimates of `VaR_{alpha_m}` for each atom, plus the spectral risk itself.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskEstimate {
    pub var_levels: Vec<f64>,
    pub risk: f64,
}

impl RiskEstimate {
    pub fn new(var_levels: Vec<f64>, risk: f64) -> Self {
        Self { var_levels, risk }
    }

    /// Whether the VaR levels are ordered and the risk dominates their
    /// spectrum-weighted average.
    pub fn is_admissible(&self, spectrum: &Spectrum) -> bool {
        let ordered = self.var_levels.windows(2).all(|w| w[0] <= w[1]);
        let floor: f64 = self
            .var_levels
            .iter()
            .zip(spectrum.weights())
            .map(|(v, p)| v * p)
            .sum();
        ordered && self.risk >= floor - 1e-12 * floor.abs().max(1.0)
    }
}

#[inline]
fn check_bound(arg: BoundArg, value: f64, c: f64) -> Result<()> {
    if value + c > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain {
            arg,
            value,
            neg_bound: -c,
        })
    }
}

/// `(1{y <= a} - alpha) a + 1{y > a} y`
#[inline]
fn tail_numerator(a: f64, y: f64, alpha: f64) -> f64 {
    if y <= a {
        (1.0 - alpha) * a
    } else {
        -alpha * a + y
    }
}

#[inline]
fn assemble(risk: f64, y: f64, c: f64, tail: f64) -> f64 {
    let shifted = risk + c;
    (shifted / (y + c)).ln() - risk / shifted + tail / shifted
}

/// Joint (VaR, CVaR) score with the log characterization.
pub fn score_cvar(var: f64, cvar: f64, y: f64, alpha: f64, cost_bound: f64) -> Result<f64> {
    check_bound(BoundArg::Realized, y, cost_bound)?;
    check_bound(BoundArg::Risk, cvar, cost_bound)?;
    let tail = tail_numerator(var, y, alpha) / (1.0 - alpha);
    Ok(assemble(cvar, y, cost_bound, tail))
}

/// Joint (VaR levels, spectral risk) score for a finite-support spectrum.
pub fn score_spectral(estimates: &RiskEstimate, y: f64, params: &ScoreParams) -> Result<f64> {
    let spectrum = &params.spectrum;
    if estimates.var_levels.len() != spectrum.len() {
        return Err(Error::Argument(format!(
            "{} VaR levels for a {}-atom spectrum",
            estimates.var_levels.len(),
            spectrum.len()
        )));
    }
    check_bound(BoundArg::Realized, y, params.cost_bound)?;
    check_bound(BoundArg::Risk, estimates.risk, params.cost_bound)?;
    let tail: f64 = estimates
        .var_levels
        .iter()
        .zip(spectrum.atoms())
        .map(|(&a, atom)| {
            atom.weight * tail_numerator(a, y, atom.threshold) / (1.0 - atom.threshold)
        })
        .sum();
    Ok(assemble(estimates.risk, y, params.cost_bound, tail))
}

/// Score and its partial derivatives with respect to the estimates.
///
/// Indicators `1{y <= a_m}` are treated as constants of the evaluation, so the
/// derivative in `a_m` is the almost-everywhere derivative. Writes
/// `dS/da_m` into `grad_var` and returns `(score, dS/d risk)`.
pub fn score_spectral_with_grad(
    var_levels: &[f64],
    risk: f64,
    y: f64,
    params: &ScoreParams,
    grad_var: &mut [f64],
) -> Result<(f64, f64)> {
    let c = params.cost_bound;
    check_bound(BoundArg::Realized, y, c)?;
    check_bound(BoundArg::Risk, risk, c)?;
    let shifted = risk + c;
    let mut tail = 0.0;
    for (m, atom) in params.spectrum.atoms().enumerate() {
        let a = var_levels[m];
        let scale = atom.weight / (1.0 - atom.threshold);
        tail += scale * tail_numerator(a, y, atom.threshold);
        let indicator = if y <= a { 1.0 } else { 0.0 };
        grad_var[m] = scale * (indicator - atom.threshold) / shifted;
    }
    let score = assemble(risk, y, c, tail);
    let d_risk = 1.0 / shifted - c / (shifted * shifted) - tail / (shifted * shifted);
    Ok((score, d_risk))
}
