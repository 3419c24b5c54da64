//! Value-function estimation by composite regression on a strictly
//! consistent score.
//!
//! One network per spectrum atom plus one for the excess risk:
//! `VaR_m = H_1 + ... + H_m` and `V = H_k + sum_m p_m VaR_m`. `H_1` has an
//! identity output, the others a softplus, so VaR levels are ordered and the
//! risk dominates their weighted average by construction.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::envs::{derive_seed, simulate_batch, Environment, EpisodeBatch};
use crate::error::{Error, Result};
use crate::neural::{
    sync_target, Adam, Mlp, MlpCache, MlpShape, OutputActivation, Policy, StepDecay,
};
use crate::risk::{score_spectral_with_grad, RiskEstimate, ScoreParams, Spectrum};

/// Episodes per parallel work unit; fixed so sums do not depend on the
/// number of threads.
pub(crate) const CHUNK: usize = 8;

const CRITIC_TAG: u64 = 0xc1;

/// One row of a loss trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub phase: String,
    pub iteration: usize,
    pub epoch: usize,
    pub loss: f64,
    pub lr: f64,
}

/// Anything that reports VaR levels and a risk value at a state.
pub trait RiskCritic: Sync {
    fn spectrum(&self) -> &Spectrum;
    fn evaluate(&self, state: &[f64]) -> RiskEstimate;
}

/// Composes head outputs `h` (one per atom, then the excess head) into
/// VaR levels and the spectral risk.
pub fn compose_value(spectrum: &Spectrum, h: &[f64]) -> RiskEstimate {
    let k = spectrum.len();
    assert_eq!(h.len(), k + 1, "expected {} heads, got {}", k + 1, h.len());
    let mut var_levels = Vec::with_capacity(k);
    let mut acc = 0.0;
    for hl in &h[..k] {
        acc += hl;
        var_levels.push(acc);
    }
    let risk = h[k]
        + var_levels
            .iter()
            .zip(spectrum.weights())
            .map(|(v, p)| p * v)
            .sum::<f64>();
    RiskEstimate { var_levels, risk }
}

/// Chain rule from score derivatives to head derivatives.
fn head_gradients(spectrum: &Spectrum, grad_var: &[f64], d_risk: f64, out: &mut [f64]) {
    let k = spectrum.len();
    let mut acc = 0.0;
    for m in (0..k).rev() {
        acc += grad_var[m] + spectrum.weights()[m] * d_risk;
        out[m] = acc;
    }
    out[k] = d_risk;
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueEnsemble {
    spectrum: Spectrum,
    nets: Vec<Mlp>,
    targets: Vec<Mlp>,
}

impl ValueEnsemble {
    pub fn new<R: Rng + ?Sized>(
        spectrum: Spectrum,
        state_dim: usize,
        hidden: &[usize],
        rng: &mut R,
    ) -> Self {
        let nets: Vec<Mlp> = (0..=spectrum.len())
            .map(|l| {
                let act = if l == 0 {
                    OutputActivation::Identity
                } else {
                    OutputActivation::Softplus
                };
                Mlp::new(MlpShape::new(state_dim, hidden, 1, act), rng)
            })
            .collect();
        let targets = nets.clone();
        Self {
            spectrum,
            nets,
            targets,
        }
    }

    pub fn from_nets(spectrum: Spectrum, nets: Vec<Mlp>, targets: Vec<Mlp>) -> Result<Self> {
        let k = spectrum.len() + 1;
        if nets.len() != k || targets.len() != k {
            return Err(Error::Argument(format!(
                "a {}-atom spectrum needs {k} heads",
                k - 1
            )));
        }
        for (i, n) in nets.iter().enumerate() {
            let s = n.shape();
            let want = if i == 0 {
                OutputActivation::Identity
            } else {
                OutputActivation::Softplus
            };
            if s.output_dim() != 1 || s.output_activation() != want || targets[i].shape() != s {
                return Err(Error::Argument(format!(
                    "head {i} has the wrong architecture"
                )));
            }
        }
        Ok(Self {
            spectrum,
            nets,
            targets,
        })
    }

    pub fn spectrum(&self) -> &Spectrum {
        &self.spectrum
    }

    pub fn nets(&self) -> &[Mlp] {
        &self.nets
    }

    pub fn nets_mut(&mut self) -> &mut [Mlp] {
        &mut self.nets
    }

    pub fn targets(&self) -> &[Mlp] {
        &self.targets
    }

    pub fn state_dim(&self) -> usize {
        self.nets[0].shape().input_dim()
    }

    pub fn heads(&self, state: &[f64]) -> Vec<f64> {
        self.nets.iter().map(|n| n.scalar(state)).collect()
    }

    pub fn evaluate(&self, state: &[f64]) -> RiskEstimate {
        compose_value(&self.spectrum, &self.heads(state))
    }

    pub fn value(&self, state: &[f64]) -> f64 {
        self.evaluate(state).risk
    }

    pub fn target_value(&self, state: &[f64]) -> f64 {
        let h: Vec<f64> = self.targets.iter().map(|n| n.scalar(state)).collect();
        compose_value(&self.spectrum, &h).risk
    }

    pub fn sync_targets(&mut self) {
        for (n, t) in self.nets.iter().zip(&mut self.targets) {
            sync_target(n, t).expect("heads and targets share architectures");
        }
    }
}

impl RiskCritic for ValueEnsemble {
    fn spectrum(&self) -> &Spectrum {
        &self.spectrum
    }

    fn evaluate(&self, state: &[f64]) -> RiskEstimate {
        ValueEnsemble::evaluate(self, state)
    }
}

/// Realized running risk-to-go `c_t + V_target(s_{t+1})`, or `c_{T-1}` at
/// the last period.
fn realized(e: &ValueEnsemble, batch: &EpisodeBatch, b: usize, t: usize) -> f64 {
    let ep = batch.episode(b);
    if t + 1 == ep.horizon() {
        ep.cost(t)
    } else {
        ep.cost(t) + e.target_value(ep.state(t + 1))
    }
}

fn score_error(t: usize, b: usize, source: Error) -> Error {
    Error::ScoreBound {
        period: t,
        episode: b,
        source: Box::new(source),
    }
}

/// Sum over periods and episodes of the score of the current estimates at
/// `s_t` against the realized running risk-to-go.
pub fn critic_loss(e: &ValueEnsemble, batch: &EpisodeBatch, params: &ScoreParams) -> Result<f64> {
    let mut total = 0.0;
    let mut grad_var = vec![0.0; e.spectrum.len()];
    for (b, ep) in batch.episodes().iter().enumerate() {
        for t in 0..ep.horizon() {
            let est = e.evaluate(ep.state(t));
            let y = realized(e, batch, b, t);
            let (s, _) =
                score_spectral_with_grad(&est.var_levels, est.risk, y, params, &mut grad_var)
                    .map_err(|err| score_error(t, b, err))?;
            total += s;
        }
    }
    Ok(total)
}

/// Loss and its gradient with respect to every head's parameters.
pub fn critic_loss_and_grad(
    e: &ValueEnsemble,
    batch: &EpisodeBatch,
    params: &ScoreParams,
) -> Result<(f64, Vec<Vec<f64>>)> {
    let k = e.nets.len();
    let zero = || {
        (
            0.0,
            e.nets
                .iter()
                .map(|n| vec![0.0; n.params().len()])
                .collect::<Vec<_>>(),
        )
    };
    let partials: Vec<Result<(f64, Vec<Vec<f64>>)>> = (0..batch.len())
        .collect::<Vec<_>>()
        .par_chunks(CHUNK)
        .map(|chunk| {
            let (mut loss, mut grads) = zero();
            let mut caches = vec![MlpCache::default(); k];
            let mut grad_var = vec![0.0; k - 1];
            let mut dh = vec![0.0; k];
            let mut h = vec![0.0; k];
            for &b in chunk {
                let ep = batch.episode(b);
                for t in 0..ep.horizon() {
                    let s = ep.state(t);
                    for l in 0..k {
                        h[l] = e.nets[l].forward_cached(s, &mut caches[l])[0];
                    }
                    let est = compose_value(&e.spectrum, &h);
                    let y = realized(e, batch, b, t);
                    let (score, d_risk) = score_spectral_with_grad(
                        &est.var_levels,
                        est.risk,
                        y,
                        params,
                        &mut grad_var,
                    )
                    .map_err(|err| score_error(t, b, err))?;
                    loss += score;
                    head_gradients(&e.spectrum, &grad_var, d_risk, &mut dh);
                    for l in 0..k {
                        e.nets[l].backward(&caches[l], &dh[l..=l], &mut grads[l]);
                    }
                }
            }
            Ok((loss, grads))
        })
        .collect();
    let (mut loss, mut grads) = zero();
    for part in partials {
        let (l, g) = part?;
        loss += l;
        for (acc, gi) in grads.iter_mut().zip(g) {
            for (a, x) in acc.iter_mut().zip(gi) {
                *a += x;
            }
        }
    }
    Ok((loss, grads))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CriticConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch: usize,
    pub target_interval: usize,
    pub lr: StepDecay,
    /// Restart the schedule at the start of every critic phase.
    pub lr_restart: bool,
}

impl Default for CriticConfig {
    fn default() -> Self {
        Self {
            hidden: vec![16; 5],
            epochs: 1000,
            batch: 750,
            target_interval: 400,
            lr: StepDecay {
                initial: 5e-3,
                factor: 0.95,
                interval: 100,
                floor: 0.0,
            },
            lr_restart: true,
        }
    }
}

impl CriticConfig {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if self.batch == 0 {
            bad.push("critic.batch must be positive");
        }
        if self.target_interval == 0 {
            bad.push("critic.target_interval must be positive");
        }
        if self.hidden.contains(&0) {
            bad.push("critic.hidden widths must be positive");
        }
        if !bad.is_empty() {
            return Err(Error::Config(bad.join("; ")));
        }
        self.lr
            .validate()
            .map_err(|e| Error::Config(format!("critic.lr: {e}")))
    }
}

/// Ensemble plus one optimizer per head.
#[derive(Debug, Clone, PartialEq)]
pub struct Critic {
    pub ensemble: ValueEnsemble,
    pub opts: Vec<Adam>,
}

impl Critic {
    pub fn new(ensemble: ValueEnsemble, lr: StepDecay) -> Self {
        let opts = ensemble
            .nets
            .iter()
            .map(|n| Adam::new(n.params().len(), lr))
            .collect();
        Self { ensemble, opts }
    }

    pub fn lr(&self) -> f64 {
        self.opts[0].lr()
    }

    /// One optimizer step on the batch-mean loss. Returns the summed loss.
    pub fn update(&mut self, batch: &EpisodeBatch, params: &ScoreParams) -> Result<f64> {
        let (loss, grads) = critic_loss_and_grad(&self.ensemble, batch, params)?;
        if !loss.is_finite() {
            return Err(Error::Numerical(format!("critic loss is {loss}")));
        }
        let scale = 1.0 / batch.len() as f64;
        for ((net, opt), g) in self.ensemble.nets.iter_mut().zip(&mut self.opts).zip(grads) {
            let g: Vec<f64> = g.into_iter().map(|x| x * scale).collect();
            opt.step(net.params_mut(), &g)?;
            opt.end_epoch();
        }
        Ok(loss)
    }
}

/// `cfg.epochs` epochs of fresh batches, one Adam step each, with target
/// networks replaced every `cfg.target_interval` epochs. Batches are seeded
/// from `(seed, iteration, epoch)`.
#[allow(clippy::too_many_arguments)]
pub fn train_critic<E, P>(
    critic: &mut Critic,
    env: &E,
    policy: &P,
    params: &ScoreParams,
    cfg: &CriticConfig,
    seed: u64,
    iteration: usize,
    trace: &mut Vec<TraceRow>,
) -> Result<()>
where
    E: Environment + ?Sized,
    P: Policy + ?Sized,
{
    if cfg.lr_restart {
        critic.opts.iter_mut().for_each(Adam::restart_schedule);
    }
    for epoch in 0..cfg.epochs {
        let batch_seed = derive_seed(seed, CRITIC_TAG, (iteration as u64) << 32 | epoch as u64);
        let batch = simulate_batch(env, policy, cfg.batch, batch_seed);
        let lr = critic.lr();
        let loss = critic.update(&batch, params).map_err(|err| match err {
            Error::Numerical(msg) => Error::Numerical(format!(
                "critic iteration {iteration} epoch {epoch} (lr {lr}): {msg}"
            )),
            other => other,
        })?;
        trace.push(TraceRow {
            phase: "critic".into(),
            iteration,
            epoch,
            loss: loss / batch.len() as f64,
            lr,
        });
        if (epoch + 1) % cfg.target_interval == 0 {
            critic.ensemble.sync_targets();
        }
    }
    Ok(())
}
