//! Self-checks run by `dynrisk oracle`: the two-period tree example,
//! coherence identities of the empirical risk measures, and
//! finite-difference checks of every training loss.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::actor::{actor_loss, actor_loss_and_grad};
use crate::critic::{critic_loss, critic_loss_and_grad, ValueEnsemble};
use crate::envs::{simulate_batch, EpisodeBatch, StatArbEnv, StatArbSpec};
use crate::error::{Error, Result};
use crate::neural::{GaussianPolicy, MlpShape, OutputActivation, Policy};
use crate::oracle::empirical::DiscreteDistribution;
use crate::oracle::tree::plan_distribution;
use crate::oracle::{static_precommitment, tree_dynamic_risk, FiniteTreeMdp};
use crate::risk::{ScoreParams, Spectrum};

pub const SUITES: [&str; 3] = ["tree", "cvar", "grad"];

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub suite: &'static str,
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(
        suite: &'static str,
        name: impl Into<String>,
        passed: bool,
        detail: impl Into<String>,
    ) -> Self {
        Self {
            suite,
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }

    /// `suite,check,PASS|FAIL,detail`
    pub fn line(&self) -> String {
        format!(
            "{},{},{},{}",
            self.suite,
            self.name,
            if self.passed { "PASS" } else { "FAIL" },
            self.detail.replace(',', ";")
        )
    }
}

pub fn tree_suite() -> Vec<Check> {
    let mdp = FiniteTreeMdp::two_period_example();
    let mut out = Vec::new();
    let cvar = |a| Spectrum::cvar(a).expect("valid threshold");

    let up_down = plan_distribution(&mdp, &[0, 1])
        .expect("plan covers the tree")
        .cvar(0.9);
    out.push(Check::new(
        "tree",
        "static_up_down_cvar_0.9",
        (up_down + 0.7).abs() < 1e-12,
        format!("value {up_down}"),
    ));
    let (plan, v) = static_precommitment(&mdp, &cvar(0.9));
    out.push(Check::new(
        "tree",
        "precommitment_0.9_is_up_down",
        plan == [0, 1],
        format!("plan {plan:?} value {v}"),
    ));
    let root = 0;
    let upp = mdp.find("s1_up_prime").expect("fixture node");
    for a in [0.7, 0.75, 0.8, 0.85, 0.9, 0.99] {
        let dp = tree_dynamic_risk(&mdp, &cvar(a));
        let ok = dp.actions[root] == Some(0) && dp.actions[upp] == Some(0);
        out.push(Check::new(
            "tree",
            format!("dynamic_{a}_is_up_up"),
            ok,
            format!("root value {}", dp.values[root]),
        ));
    }
    out
}

fn random_samples(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| rng.random_range(-5.0..5.0f64).powi(3) / 10.0)
        .collect()
}

pub fn cvar_suite(cases: usize) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let tol = 1e-9;
    let mut worst = [0.0f64; 6];
    for _ in 0..cases {
        let n = rng.random_range(2..60);
        let x = random_samples(&mut rng, n);
        let y = random_samples(&mut rng, n);
        let alpha = rng.random_range(0.01..0.99);
        let shift = rng.random_range(-3.0..3.0);
        let scale = rng.random_range(0.1..4.0);
        let dx = DiscreteDistribution::from_samples(&x).expect("finite");
        let cx = dx.cvar(alpha);
        let shifted: Vec<f64> = x.iter().map(|v| v + shift).collect();
        let scaled: Vec<f64> = x.iter().map(|v| v * scale).collect();
        let sum: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a + b).collect();
        let ds = DiscreteDistribution::from_samples(&shifted).expect("finite");
        let dk = DiscreteDistribution::from_samples(&scaled).expect("finite");
        let dsum = DiscreteDistribution::from_samples(&sum).expect("finite");
        let dy = DiscreteDistribution::from_samples(&y).expect("finite");
        let a2 = (alpha + rng.random_range(0.0..1.0 - alpha)).min(0.999);
        let w = rng.random_range(0.05..0.95);
        let spectrum = Spectrum::new(vec![alpha, a2.max(alpha + 1e-6)], vec![w, 1.0 - w]);
        let violations = [
            (ds.cvar(alpha) - cx - shift).abs(),
            (dk.cvar(alpha) - scale * cx).abs(),
            (dsum.cvar(alpha) - cx - dy.cvar(alpha)).max(0.0),
            (dx.var(alpha) - cx).max(0.0) + (dx.mean() - cx).max(0.0),
            (dx.cvar(alpha) - dx.cvar(a2)).max(0.0),
            spectrum.map_or(0.0, |s| {
                (dx.spectral(&s)
                    - s.atoms()
                        .map(|m| m.weight * dx.cvar(m.threshold))
                        .sum::<f64>())
                .abs()
            }),
        ];
        for (w, v) in worst.iter_mut().zip(violations) {
            *w = w.max(v);
        }
    }
    let names = [
        "translation",
        "positive_homogeneity",
        "subadditivity",
        "dominates_var_and_mean",
        "monotone_in_alpha",
        "spectral_is_cvar_mixture",
    ];
    names
        .iter()
        .zip(worst)
        .map(|(n, w)| {
            Check::new(
                "cvar",
                *n,
                w <= tol,
                format!("worst violation {w:.3e} over {cases} cases"),
            )
        })
        .collect()
}

/// Central finite differences of `f` at `x`.
pub fn finite_difference(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            let step = h * x[i].abs().max(1.0);
            p[i] = x[i] + step;
            let up = f(&p);
            p[i] = x[i] - step;
            let down = f(&p);
            p[i] = x[i];
            (up - down) / (2.0 * step)
        })
        .collect()
}

fn rel_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / norm(a).max(norm(b)).max(1e-12)
}

/// Synthetic problem for the gradient checks: a short stat-arb batch, a
/// random policy and a random critic, redrawn until no running risk-to-go
/// sits within `margin` of a VaR estimate.
pub struct GradProblem {
    pub env: StatArbEnv,
    pub policy: GaussianPolicy,
    pub ensemble: ValueEnsemble,
    pub params: ScoreParams,
    pub batch: EpisodeBatch,
}

impl GradProblem {
    pub fn new(seed: u64, spectrum: Spectrum, margin: f64) -> Self {
        let env = StatArbEnv::new(StatArbSpec {
            horizon: 3,
            q0_spread: 2.0,
            ..StatArbSpec::default()
        })
        .expect("valid spec");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = MlpShape::new(3, &[6, 6], 1, OutputActivation::Identity);
        let p = shape.init_params(&mut rng);
        let policy = GaussianPolicy::new(shape, p, rng.random_range(-1.0..0.0));
        let params = ScoreParams::new(crate::envs::Environment::cost_bound(&env), spectrum.clone())
            .expect("positive bound");
        for attempt in 0.. {
            let mut ensemble = ValueEnsemble::new(spectrum.clone(), 3, &[6, 6], &mut rng);
            // decouple targets from the trained heads
            let other = ValueEnsemble::new(spectrum.clone(), 3, &[6, 6], &mut rng);
            ensemble = ValueEnsemble::from_nets(
                spectrum.clone(),
                ensemble.nets().to_vec(),
                other.nets().to_vec(),
            )
            .expect("same architecture");
            let batch = simulate_batch(&env, &policy, 4, seed.wrapping_mul(1000) + attempt);
            if min_kink_distance(&ensemble, &batch) > margin {
                return Self {
                    env,
                    policy,
                    ensemble,
                    params,
                    batch,
                };
            }
        }
        unreachable!()
    }
}

fn min_kink_distance(e: &ValueEnsemble, batch: &EpisodeBatch) -> f64 {
    let mut best = f64::INFINITY;
    for ep in batch.episodes() {
        for t in 0..ep.horizon() {
            let y = if t + 1 == ep.horizon() {
                ep.cost(t)
            } else {
                ep.cost(t) + e.target_value(ep.state(t + 1))
            };
            for v in e.evaluate(ep.state(t)).var_levels {
                best = best.min((y - v).abs());
            }
        }
    }
    best
}

/// Relative errors `(critic, actor)` of the analytic gradients against
/// central differences for one synthetic problem.
pub fn gradient_errors(problem: &GradProblem) -> (f64, f64) {
    let GradProblem {
        policy,
        ensemble,
        params,
        batch,
        ..
    } = problem;
    let (_, grads) = critic_loss_and_grad(ensemble, batch, params).expect("bounded costs");
    let mut analytic = Vec::new();
    let mut numeric = Vec::new();
    for (l, g) in grads.iter().enumerate() {
        analytic.extend_from_slice(g);
        let fd = finite_difference(ensemble.nets()[l].params(), 1e-6, |p| {
            let mut e = ensemble.clone();
            e.nets_mut()[l].params_mut().copy_from_slice(p);
            critic_loss(&e, batch, params).expect("bounded costs")
        });
        numeric.extend(fd);
    }
    let critic_err = rel_error(&analytic, &numeric);

    let (_, g) = actor_loss_and_grad(policy, ensemble, batch);
    let fd = finite_difference(policy.params(), 1e-6, |p| {
        let mut q = policy.clone();
        q.params_mut().copy_from_slice(p);
        actor_loss(&q, ensemble, batch)
    });
    (critic_err, rel_error(&g, &fd))
}

pub fn grad_suite(seeds: u64) -> Vec<Check> {
    let mut out = Vec::new();
    let spectra = [
        ("cvar", Spectrum::cvar(0.8).expect("valid")),
        (
            "spectral",
            Spectrum::new(vec![0.5, 0.9], vec![0.4, 0.6]).expect("valid"),
        ),
    ];
    for (label, spectrum) in spectra {
        let mut worst = (0.0f64, 0.0f64);
        for seed in 0..seeds {
            let (c, a) = gradient_errors(&GradProblem::new(seed, spectrum.clone(), 1e-3));
            worst = (worst.0.max(c), worst.1.max(a));
        }
        let (cl, al) = if label == "cvar" {
            ("L1", "L2")
        } else {
            ("L3", "L4")
        };
        out.push(Check::new(
            "grad",
            format!("critic_{label}_{cl}"),
            worst.0 < 1e-3,
            format!("max relative error {:.3e} over {seeds} seeds", worst.0),
        ));
        out.push(Check::new(
            "grad",
            format!("actor_{label}_{al}"),
            worst.1 < 1e-3,
            format!("max relative error {:.3e} over {seeds} seeds", worst.1),
        ));
    }
    out
}

/// Runs one suite by name, or all of them for `"all"`.
pub fn cmd_oracle(suite: &str) -> Result<Vec<Check>> {
    Ok(match suite {
        "tree" => tree_suite(),
        "cvar" => cvar_suite(100),
        "grad" => grad_suite(100),
        "all" => {
            let mut v = tree_suite();
            v.extend(cvar_suite(100));
            v.extend(grad_suite(100));
            v
        }
        other => {
            return Err(Error::Argument(format!(
                "unknown suite {other}; expected one of {} or all",
                SUITES.join(", ")
            )))
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tree_and_cvar_suites_pass() {
        for c in tree_suite().into_iter().chain(cvar_suite(50)) {
            assert!(c.passed, "{}", c.line());
        }
    }

    #[test]
    fn gradients_agree() {
        for c in grad_suite(5) {
            assert!(c.passed, "{}", c.line());
        }
    }

    #[test]
    fn finite_difference_of_a_quadratic() {
        let g = finite_difference(&[1.0, -2.0], 1e-5, |x| x[0] * x[0] + 3.0 * x[1]);
        assert!((g[0] - 2.0).abs() < 1e-8 && (g[1] - 3.0).abs() < 1e-8);
    }

    #[test]
    fn unknown_suite() {
        assert!(cmd_oracle("nope").is_err());
    }
}
