//! Fits the elicitable and nested critics to a fixed zero-trade stat-arb
//! policy with two periods and compares both with a nested Monte-Carlo
//! oracle and with the closed form available for this case.
//!
//! cargo run --release --example critic_vs_oracle

use std::time::Instant;

use dynrisk::critic::{train_critic, Critic, CriticConfig, ValueEnsemble};
use dynrisk::envs::{StatArbEnv, StatArbSpec};
use dynrisk::nested::{train_nested_critic, NestedConfig, NestedCritic};
use dynrisk::neural::{ConstantPolicy, StepDecay};
use dynrisk::oracle::nested::GridAxis;
use dynrisk::oracle::{NestedOracle, NestedOracleConfig, StateGrid};
use dynrisk::{Environment, ScoreParams, Spectrum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ALPHA: f64 = 0.8;

/// Risk-to-go of holding `q` units from price `s` at period `t` of two.
fn closed_form(spec: &StatArbSpec, t: usize, s: f64, q: f64) -> f64 {
    let e = (-spec.kappa * spec.dt()).exp();
    let sd = spec.sigma * ((1.0 - e * e) / (2.0 * spec.kappa)).sqrt();
    let z = inverse_normal(ALPHA);
    let k = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt() / (1.0 - ALPHA);
    let drift = if t == 0 { e * e } else { e };
    let spread = if t == 0 { 1.0 + e } else { 1.0 };
    -q * (spec.mu + (s - spec.mu) * drift) + q.abs() * sd * k * spread + q * q * spec.phi2
}

/// Standard normal quantile by bisection on a midpoint-rule cdf.
fn inverse_normal(p: f64) -> f64 {
    let cdf = |x: f64| {
        let n = 20_000;
        let lo = -10.0;
        let h = (x - lo) / n as f64;
        let f = |u: f64| (-0.5 * u * u).exp() / (2.0 * std::f64::consts::PI).sqrt();
        (0..n).map(|i| f(lo + (i as f64 + 0.5) * h)).sum::<f64>() * h
    };
    let (mut a, mut b) = (-10.0, 10.0);
    for _ in 0..80 {
        let m = 0.5 * (a + b);
        if cdf(m) < p {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

fn main() -> dynrisk::Result<()> {
    let spec = StatArbSpec {
        horizon: 2,
        q0_spread: 2.0,
        ..StatArbSpec::default()
    };
    let env = StatArbEnv::new(spec.clone())?;
    let policy = ConstantPolicy::new(vec![0.0]);
    let spectrum = Spectrum::cvar(ALPHA)?;
    let params = ScoreParams::new(env.cost_bound(), spectrum.clone())?;

    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let probes: Vec<(usize, Vec<f64>)> = (0..20)
        .map(|i| {
            let t = i % 2;
            let s = spec.mu + rng.random_range(-0.15..0.15);
            let q = rng.random_range(-1.8..1.8);
            (t, vec![t as f64 / 2.0, s, q])
        })
        .collect();

    let clock = Instant::now();
    let grid = StateGrid {
        axes: vec![
            GridAxis {
                slot: 1,
                lo: 0.4,
                hi: 1.6,
                points: 13,
            },
            GridAxis {
                slot: 2,
                lo: -2.0,
                hi: 2.0,
                points: 41,
            },
        ],
        template: vec![0.0; 3],
    };
    let oracle = NestedOracle::new(
        &env,
        &policy,
        &spectrum,
        NestedOracleConfig {
            inner_m: 10_000,
            outer_n: 4,
            seed: 3,
            grid: Some(grid),
        },
    )?;
    let truth: Vec<_> = probes
        .iter()
        .enumerate()
        .map(|(i, (t, s))| oracle.estimate(i, *t, s))
        .collect();
    println!("oracle: {:.1}s", clock.elapsed().as_secs_f64());

    let clock = Instant::now();
    let cfg = CriticConfig {
        epochs: 2000,
        batch: 1500,
        target_interval: 100,
        ..CriticConfig::default()
    };
    let mut critic = Critic::new(
        ValueEnsemble::new(spectrum.clone(), 3, &cfg.hidden, &mut rng),
        cfg.lr,
    );
    train_critic(
        &mut critic,
        &env,
        &policy,
        &params,
        &cfg,
        5,
        0,
        &mut Vec::new(),
    )?;
    println!("elicitable critic: {:.1}s", clock.elapsed().as_secs_f64());

    let clock = Instant::now();
    let ncfg = CriticConfig {
        epochs: 2000,
        batch: 200,
        target_interval: 100,
        lr: StepDecay {
            initial: 5e-3,
            factor: 0.95,
            interval: 100,
            floor: 0.0,
        },
        ..CriticConfig::default()
    };
    let mut nested = NestedCritic::new(3, &ncfg.hidden, ncfg.lr, &mut rng);
    train_nested_critic(
        &mut nested,
        &env,
        &policy,
        &spectrum,
        &ncfg,
        &NestedConfig::default(),
        6,
        0,
        &mut Vec::new(),
    )?;
    println!("nested critic: {:.1}s", clock.elapsed().as_secs_f64());

    println!(" t      S      q   closed   oracle (se)   elicitable   nested");
    let (mut worst_e, mut worst_n) = (0.0f64, 0.0f64);
    for ((t, s), o) in probes.iter().zip(&truth) {
        let e = critic.ensemble.value(s);
        let n = nested.value(s);
        worst_e = worst_e.max((e - o.value).abs());
        worst_n = worst_n.max((n - o.value).abs());
        println!(
            "{t} {:6.3} {:6.3} {:8.4} {:8.4} ({:.4}) {:10.4} {:8.4}",
            s[1],
            s[2],
            closed_form(&spec, *t, s[1], s[2]),
            o.value,
            o.std_error,
            e,
            n
        );
    }
    println!("max |elicitable - oracle| = {worst_e:.4}, max |nested - oracle| = {worst_n:.4}");
    Ok(())
}
