//! Recovers VaR and CVaR of a small discrete distribution by minimizing the
//! expected score over a grid, for a single CVaR and for a two-level
//! spectrum.
//!
//! cargo run --release --example scoring

use dynrisk::oracle::DiscreteDistribution;
use dynrisk::{score_cvar, score_spectral, RiskEstimate, ScoreParams, Spectrum};

fn main() -> dynrisk::Result<()> {
    let values = [-1.0, 0.5, 2.0, 3.5, 6.0];
    let probs = [0.3, 0.25, 0.2, 0.15, 0.1];
    let dist = DiscreteDistribution::from_weighted(&values, &probs)?;
    let bound = 10.0;
    let grid: Vec<f64> = (0..=800).map(|i| -2.0 + 0.01 * i as f64).collect();

    let alpha = 0.8;
    let mean_score = |a: f64, r: f64| -> dynrisk::Result<f64> {
        let mut s = 0.0;
        for (y, p) in values.iter().zip(&probs) {
            s += p * score_cvar(a, r, *y, alpha, bound)?;
        }
        Ok(s)
    };
    // for fixed r the best a is any alpha-quantile, so scan a first at a
    // reference r and then r at that a
    let mut a_best = (f64::INFINITY, 0.0);
    for &a in &grid {
        let s = mean_score(a, dist.cvar(alpha))?;
        if s < a_best.0 {
            a_best = (s, a);
        }
    }
    let mut r_best = (f64::INFINITY, 0.0);
    for &r in grid.iter().filter(|&&r| r >= a_best.1) {
        let s = mean_score(a_best.1, r)?;
        if s < r_best.0 {
            r_best = (s, r);
        }
    }
    println!(
        "CVaR_{alpha}: score minimizer (VaR {:.2}, CVaR {:.2})",
        a_best.1, r_best.1
    );
    println!(
        "             exact           (VaR {:.2}, CVaR {:.2})",
        dist.var(alpha),
        dist.cvar(alpha)
    );

    let spectrum = Spectrum::new(vec![0.5, 0.9], vec![0.4, 0.6])?;
    let params = ScoreParams::new(bound, spectrum.clone())?;
    let exact: Vec<f64> = spectrum.thresholds().iter().map(|&a| dist.var(a)).collect();
    let expected = |est: &RiskEstimate| -> dynrisk::Result<f64> {
        let mut s = 0.0;
        for (y, p) in values.iter().zip(&probs) {
            s += p * score_spectral(est, *y, &params)?;
        }
        Ok(s)
    };
    let mut best = (f64::INFINITY, 0.0);
    for &r in &grid {
        let est = RiskEstimate::new(exact.clone(), r);
        if !est.is_admissible(&spectrum) {
            continue;
        }
        let s = expected(&est)?;
        if s < best.0 {
            best = (s, r);
        }
    }
    println!(
        "spectral 0.4 CVaR_0.5 + 0.6 CVaR_0.9: score minimizer {:.2}, exact {:.2}",
        best.1,
        dist.spectral(&spectrum)
    );
    Ok(())
}
