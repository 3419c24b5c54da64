//! Training, evaluation and simulation commands and their artifacts.
//!
//! A training directory holds `config.toml` (the resolved configuration),
//! `checkpoint_initial.txt`, `checkpoint.txt`, `traces.csv`, `ledger.toml`
//! and the evaluation CSVs. `cmd_eval` needs only the directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::actor::{run_actor_critic, RunLedger};
use crate::config::{AnyEnv, CriticModel, Models, RunConfig};
use crate::critic::{Critic, TraceRow, ValueEnsemble};
use crate::envs::{derive_seed, simulate_batch, Environment, EpisodeBatch, StatArbEnv};
use crate::error::{io_err, Error, Result};
use crate::nested::{run_nested, NestedCritic};
use crate::neural::{Checkpoint, ConstantPolicy, GaussianPolicy, Policy};
use crate::oracle::empirical::DiscreteDistribution;
use crate::risk::Spectrum;

pub const CONFIG_FILE: &str = "config.toml";
pub const CHECKPOINT_FILE: &str = "checkpoint.txt";
pub const INITIAL_CHECKPOINT_FILE: &str = "checkpoint_initial.txt";
pub const LEDGER_FILE: &str = "ledger.toml";
pub const TRACES_FILE: &str = "traces.csv";

const EVAL_TAG: u64 = 0xe7a1;
const GRID_POINTS: usize = 21;
const PNL_QUANTILES: [f64; 7] = [0.01, 0.05, 0.25, 0.5, 0.75, 0.95, 0.99];

/// `x` with 9 significant digits, in the style of C's `%.9g`.
pub fn fmt_float(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".into() } else { x.to_string() };
    }
    let exp = x.abs().log10().floor() as i32;
    let trim = |s: String| {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    };
    let sci = format!("{x:.8e}");
    // rounding can push the mantissa to 10.0, so read the exponent back
    let real_exp: i32 = sci
        .split('e')
        .nth(1)
        .and_then(|e| e.parse().ok())
        .unwrap_or(exp);
    if !(-5..9).contains(&real_exp) {
        let (mantissa, e) = sci.split_once('e').expect("scientific format");
        format!("{}e{e}", trim(mantissa.to_string()))
    } else {
        trim(format!("{:.*}", (8 - real_exp).max(0) as usize, x))
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    Ok(csv::Writer::from_writer(file))
}

fn write_table(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

pub fn write_traces(path: &Path, trace: &[TraceRow]) -> Result<()> {
    let rows: Vec<Vec<String>> = trace
        .iter()
        .map(|r| {
            vec![
                r.phase.clone(),
                r.iteration.to_string(),
                r.epoch.to_string(),
                fmt_float(r.loss),
                fmt_float(r.lr),
            ]
        })
        .collect();
    let header = ["phase", "iteration", "epoch", "loss", "lr"].map(String::from);
    write_table(path, &header, &rows)
}

fn write_toml<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = toml::to_string(value).map_err(|e| Error::Config(e.to_string()))?;
    fs::write(path, text).map_err(io_err(path))
}

/// Ledger file contents: counters of one run plus its seed and environment.
#[derive(Debug, Clone, Serialize)]
pub struct LedgerFile<'a> {
    pub env: &'a str,
    pub seed: u64,
    #[serde(flatten)]
    pub ledger: &'a RunLedger,
    pub critic_transitions_per_epoch: f64,
}

pub fn write_ledger(path: &Path, cfg: &RunConfig, ledger: &RunLedger) -> Result<()> {
    let per_epoch = if ledger.critic_epochs == 0 {
        0.0
    } else {
        ledger.critic_transitions as f64 / ledger.critic_epochs as f64
    };
    write_toml(
        path,
        &LedgerFile {
            env: cfg.env.kind(),
            seed: cfg.run.seed,
            ledger,
            critic_transitions_per_epoch: per_epoch,
        },
    )
}

pub fn models_to_checkpoint(cfg: &RunConfig, models: &Models, iteration: usize) -> Checkpoint {
    let mut ck = Checkpoint::new();
    ck.set_meta("method", cfg.run.method.name());
    ck.set_meta("env", cfg.env.kind());
    ck.set_meta("seed", cfg.run.seed);
    ck.set_meta("iteration", iteration);
    ck.set_shape("policy", models.policy.shape());
    ck.set_vec("policy.params", models.policy.params());
    ck.set_adam("policy.adam", &models.policy_opt);
    match &models.critic {
        CriticModel::Elicitable(c) => {
            let e = &c.ensemble;
            ck.set_vec("spectrum.thresholds", e.spectrum().thresholds());
            ck.set_vec("spectrum.weights", e.spectrum().weights());
            for (l, ((net, target), opt)) in
                e.nets().iter().zip(e.targets()).zip(&c.opts).enumerate()
            {
                ck.set_net(&format!("critic.head{l}"), net);
                ck.set_net(&format!("critic.target{l}"), target);
                ck.set_adam(&format!("critic.adam{l}"), opt);
            }
        }
        CriticModel::Nested(c) => {
            ck.set_net("value", &c.net);
            ck.set_net("value.target", &c.target);
            ck.set_adam("value.adam", &c.opt);
        }
    }
    ck
}

pub fn models_from_checkpoint(ck: &Checkpoint) -> Result<Models> {
    let policy =
        GaussianPolicy::from_params(ck.shape("policy")?, ck.vec("policy.params")?.to_vec())?;
    let policy_opt = ck.adam("policy.adam")?;
    let critic = match ck.meta("method")? {
        "elicitable" => {
            let spectrum = Spectrum::new(
                ck.vec("spectrum.thresholds")?.to_vec(),
                ck.vec("spectrum.weights")?.to_vec(),
            )?;
            let k = spectrum.len() + 1;
            let mut nets = Vec::with_capacity(k);
            let mut targets = Vec::with_capacity(k);
            let mut opts = Vec::with_capacity(k);
            for l in 0..k {
                nets.push(ck.net(&format!("critic.head{l}"))?);
                targets.push(ck.net(&format!("critic.target{l}"))?);
                opts.push(ck.adam(&format!("critic.adam{l}"))?);
            }
            let ensemble = ValueEnsemble::from_nets(spectrum, nets, targets)
                .map_err(|e| Error::Checkpoint(e.to_string()))?;
            CriticModel::Elicitable(Critic { ensemble, opts })
        }
        "nested" => CriticModel::Nested(NestedCritic {
            net: ck.net("value")?,
            target: ck.net("value.target")?,
            opt: ck.adam("value.adam")?,
        }),
        other => return Err(Error::Checkpoint(format!("unknown method {other}"))),
    };
    Ok(Models {
        policy,
        policy_opt,
        critic,
    })
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Deterministic policy output on environment-specific axes.
/// Stat-arb: price x inventory x period, with the raw action and the
/// executed trade. Allocation environments: the first two asset prices at
/// `t = 0`, with the portfolio weights.
pub fn policy_grid<P: Policy + ?Sized>(env: &AnyEnv, policy: &P) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut rows = Vec::new();
    match env {
        AnyEnv::Statarb(e) => {
            let s = e.spec();
            let sd = s.stationary_sd().max(1e-3);
            for t in 0..s.horizon {
                for &price in &linspace(s.mu - 3.0 * sd, s.mu + 3.0 * sd, GRID_POINTS) {
                    for &q in &linspace(s.q_min, s.q_max, GRID_POINTS) {
                        let raw = policy.mode(&[t as f64 / s.horizon as f64, price, q])[0];
                        rows.push(vec![t as f64, price, q, raw, e.execute(q, raw).0]);
                    }
                }
            }
            let header = ["period", "price", "inventory", "raw_action", "trade"];
            (header.map(String::from).to_vec(), rows)
        }
        AnyEnv::Portfolio(_) | AnyEnv::Vecm(_) => {
            let d = env.as_dyn().state_dim() - 2;
            let n_w = env.as_dyn().action_dim();
            let axis = linspace(0.8, 1.2, GRID_POINTS);
            let second: Vec<f64> = if d > 1 { axis.clone() } else { vec![1.0] };
            for &s1 in &axis {
                for &s2 in &second {
                    let mut state = vec![1.0; d + 2];
                    state[0] = 0.0;
                    state[1] = s1;
                    if d > 1 {
                        state[2] = s2;
                    }
                    let mut row = vec![0.0, s1, s2];
                    row.extend(crate::envs::portfolio::softmax(&policy.mode(&state)));
                    rows.push(row);
                }
            }
            let mut header = vec!["period".to_string(), "price_1".into(), "price_2".into()];
            header.extend((1..=n_w).map(|i| format!("weight_{i}")));
            (header, rows)
        }
        AnyEnv::Constant(e) => {
            for t in 0..e.horizon() {
                for &x in &linspace(-1.0, 1.0, GRID_POINTS) {
                    rows.push(vec![
                        t as f64,
                        x,
                        policy.mode(&[t as f64 / e.horizon() as f64, x])[0],
                    ]);
                }
            }
            (
                ["period", "feature", "raw_action"]
                    .map(String::from)
                    .to_vec(),
                rows,
            )
        }
    }
}

/// Mean absolute executed trade of the deterministic policy at the
/// inventory bounds, over the price axis of the policy grid and every
/// period.
pub fn mean_abs_edge_trade<P: Policy + ?Sized>(env: &StatArbEnv, policy: &P) -> f64 {
    let s = env.spec();
    let sd = s.stationary_sd().max(1e-3);
    let mut total = 0.0;
    let mut n = 0usize;
    for t in 0..s.horizon {
        for &price in &linspace(s.mu - 3.0 * sd, s.mu + 3.0 * sd, GRID_POINTS) {
            for q in [s.q_min, s.q_max] {
                let raw = policy.mode(&[t as f64 / s.horizon as f64, price, q])[0];
                total += env.execute(q, raw).0.abs();
                n += 1;
            }
        }
    }
    total / n as f64
}

fn write_grid<P: Policy + ?Sized>(path: &Path, env: &AnyEnv, policy: &P) -> Result<()> {
    let (header, rows) = policy_grid(env, policy);
    let rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            r.iter()
                .enumerate()
                .map(|(i, &x)| {
                    if i == 0 {
                        (x as usize).to_string()
                    } else {
                        fmt_float(x)
                    }
                })
                .collect()
        })
        .collect();
    write_table(path, &header, &rows)
}

/// Terminal statistics of an evaluation batch.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSummary {
    pub episodes: usize,
    pub mean_pnl: f64,
    /// `(alpha, VaR, CVaR)` of the terminal cost for every threshold.
    pub tail: Vec<(f64, f64, f64)>,
    pub pnl_quantiles: Vec<f64>,
}

pub fn summarize(batch: &EpisodeBatch, spectrum: &Spectrum) -> Option<EvalSummary> {
    if batch.is_empty() {
        return None;
    }
    let losses: Vec<f64> = batch.episodes().iter().map(|e| e.total_cost()).collect();
    let d = DiscreteDistribution::from_samples(&losses).ok()?;
    let pnl: Vec<f64> = losses.iter().map(|l| -l).collect();
    let dp = DiscreteDistribution::from_samples(&pnl).ok()?;
    Some(EvalSummary {
        episodes: batch.len(),
        mean_pnl: -d.mean(),
        tail: spectrum
            .thresholds()
            .iter()
            .map(|&a| (a, d.var(a), d.cvar(a)))
            .collect(),
        pnl_quantiles: PNL_QUANTILES.iter().map(|&q| dp.var(q)).collect(),
    })
}

/// Writes `risk_summary.csv`, `pnl.csv` and `policy_grid.csv` into `dir`.
pub fn write_evaluation<P: Policy + ?Sized>(
    dir: &Path,
    env: &AnyEnv,
    policy: &P,
    spectrum: &Spectrum,
    episodes: usize,
    seed: u64,
) -> Result<Option<EvalSummary>> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let batch = simulate_batch(
        env.as_dyn(),
        policy,
        episodes,
        derive_seed(seed, EVAL_TAG, 0),
    );
    let summary = summarize(&batch, spectrum);

    let mut header: Vec<String> = ["alpha", "episodes", "mean_pnl", "var", "cvar"]
        .map(String::from)
        .to_vec();
    header.extend(
        PNL_QUANTILES
            .iter()
            .map(|q| format!("pnl_q{:02}", (q * 100.0).round() as usize)),
    );
    let rows: Vec<Vec<String>> = summary
        .iter()
        .flat_map(|s| {
            s.tail.iter().map(move |&(a, var, cvar)| {
                let mut row = vec![fmt_float(a), s.episodes.to_string(), fmt_float(s.mean_pnl)];
                row.push(fmt_float(var));
                row.push(fmt_float(cvar));
                row.extend(s.pnl_quantiles.iter().map(|&x| fmt_float(x)));
                row
            })
        })
        .collect();
    write_table(&dir.join("risk_summary.csv"), &header, &rows)?;

    let mut rows = Vec::with_capacity(batch.transitions() + batch.len());
    for (b, ep) in batch.episodes().iter().enumerate() {
        for (t, w) in ep.pnl_path().into_iter().enumerate() {
            rows.push(vec![b.to_string(), t.to_string(), fmt_float(w)]);
        }
    }
    write_table(
        &dir.join("pnl.csv"),
        &["episode", "period", "wealth"].map(String::from),
        &rows,
    )?;
    write_grid(&dir.join("policy_grid.csv"), env, policy)?;
    Ok(summary)
}

/// Command-line overrides applied on top of a configuration file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub iterations: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(s) = self.seed {
            cfg.run.seed = s;
        }
        if let Some(i) = self.iterations {
            cfg.run.iterations = i;
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub models: Models,
    pub ledger: RunLedger,
    pub summary: Option<EvalSummary>,
}

/// Trains per `cfg` and writes every artifact into `out`.
pub fn train(cfg: &RunConfig, out: &Path) -> Result<TrainOutcome> {
    cfg.validate()?;
    fs::create_dir_all(out).map_err(io_err(out))?;
    fs::write(out.join(CONFIG_FILE), cfg.to_toml()).map_err(io_err(out.join(CONFIG_FILE)))?;
    let env = cfg.env.build()?;
    let envd = env.as_dyn();
    let params = cfg.score_params(envd)?;
    let mut models = cfg.init_models(envd);
    models_to_checkpoint(cfg, &models, 0).save(out.join(INITIAL_CHECKPOINT_FILE))?;

    let snapshots = out.join("snapshots");
    let every = cfg.run.snapshot_every;
    let snapshot = |it: usize, policy: &GaussianPolicy| -> Result<()> {
        if every > 0 && (it + 1) % every == 0 {
            fs::create_dir_all(&snapshots).map_err(io_err(&snapshots))?;
            write_grid(
                &snapshots.join(format!("policy_grid_{:05}.csv", it + 1)),
                &env,
                policy,
            )?;
        }
        Ok(())
    };
    let mut trace = Vec::new();
    let Models {
        policy,
        policy_opt,
        critic,
    } = &mut models;
    let ledger = match critic {
        CriticModel::Elicitable(c) => run_actor_critic(
            envd,
            policy,
            policy_opt,
            c,
            &params,
            &cfg.critic,
            &cfg.actor,
            cfg.run.iterations,
            cfg.run.seed,
            &mut trace,
            &mut |it, p, _| snapshot(it, p),
        )?,
        CriticModel::Nested(c) => run_nested(
            envd,
            policy,
            policy_opt,
            c,
            &cfg.spectrum,
            &cfg.critic,
            &cfg.actor,
            &cfg.nested,
            cfg.run.iterations,
            cfg.run.seed,
            &mut trace,
            &mut |it, p, _| snapshot(it, p),
        )?,
    };
    write_traces(&out.join(TRACES_FILE), &trace)?;
    write_ledger(&out.join(LEDGER_FILE), cfg, &ledger)?;
    if ledger.iterations > 0 {
        models_to_checkpoint(cfg, &models, ledger.iterations).save(out.join(CHECKPOINT_FILE))?;
    }
    let summary = write_evaluation(
        out,
        &env,
        &models.policy,
        &cfg.spectrum,
        cfg.run.eval_episodes,
        cfg.run.seed,
    )?;
    Ok(TrainOutcome {
        models,
        ledger,
        summary,
    })
}

pub fn cmd_train(config: &Path, out: &Path, overrides: &Overrides) -> Result<TrainOutcome> {
    let mut cfg = RunConfig::load(config)?;
    overrides.apply(&mut cfg);
    train(&cfg, out)
}

/// Loads the configuration and latest checkpoint of a training directory.
pub fn load_run(dir: &Path) -> Result<(RunConfig, Models)> {
    let cfg = RunConfig::load(&dir.join(CONFIG_FILE))?;
    let path = [CHECKPOINT_FILE, INITIAL_CHECKPOINT_FILE]
        .iter()
        .map(|f| dir.join(f))
        .find(|p| p.exists())
        .ok_or_else(|| Error::Checkpoint(format!("no checkpoint in {}", dir.display())))?;
    let ck = Checkpoint::load(&path)?;
    let kind = ck.meta("env")?;
    if kind != cfg.env.kind() {
        return Err(Error::Checkpoint(format!(
            "checkpoint was trained on {kind}, configuration names {}",
            cfg.env.kind()
        )));
    }
    let models = models_from_checkpoint(&ck)?;
    Ok((cfg, models))
}

/// Evaluates the policy stored in `dir` on `episodes` fresh episodes and
/// writes the CSVs into `out` (the run directory when `None`).
pub fn cmd_eval(
    dir: &Path,
    out: Option<&Path>,
    episodes: usize,
    seed: u64,
) -> Result<Option<EvalSummary>> {
    let (cfg, models) = load_run(dir)?;
    let env = cfg.env.build()?;
    let (sd, ad) = (env.as_dyn().state_dim(), env.as_dyn().action_dim());
    let shape = models.policy.shape();
    if shape.input_dim() != sd || shape.output_dim() != ad {
        return Err(Error::Checkpoint(format!(
            "policy maps {} inputs to {} actions; environment has {sd} state and {ad} action coordinates",
            shape.input_dim(),
            shape.output_dim()
        )));
    }
    write_evaluation(
        out.unwrap_or(dir),
        &env,
        &models.policy,
        &cfg.spectrum,
        episodes,
        seed,
    )
}

/// Rolls out the environment of `cfg` under the neutral raw action (zero)
/// and writes `paths.csv` with one row per period.
pub fn cmd_simulate(cfg: &RunConfig, episodes: usize, seed: u64, out: &Path) -> Result<PathBuf> {
    let env = cfg.env.build()?;
    let envd = env.as_dyn();
    fs::create_dir_all(out).map_err(io_err(out))?;
    let policy = ConstantPolicy::new(vec![0.0; envd.action_dim()]);
    let batch = simulate_batch(envd, &policy, episodes, seed);
    let mut header = vec!["episode".to_string(), "period".into()];
    header.extend((0..envd.state_dim()).map(|i| format!("state_{i}")));
    header.push("cost".into());
    let mut rows = Vec::new();
    for (b, ep) in batch.episodes().iter().enumerate() {
        for t in 0..=ep.horizon() {
            let mut row = vec![b.to_string(), t.to_string()];
            row.extend(ep.state(t).iter().map(|&x| fmt_float(x)));
            row.push(if t < ep.horizon() {
                fmt_float(ep.cost(t))
            } else {
                String::new()
            });
            rows.push(row);
        }
    }
    let path = out.join("paths.csv");
    write_table(&path, &header, &rows)?;
    Ok(path)
}
