//! Fully connected networks with SiLU hidden layers and a hand-written
//! reverse pass. Parameters live in one flat vector so optimizers and
//! checkpoints can treat every network the same way.
//!
//! Layout per layer: weights row-major `(out, in)` followed by `out` biases.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OutputActivation {
    Identity,
    Softplus,
    /// `lo + (hi - lo) * sigmoid(u)`.
    ScaledSigmoid {
        lo: f64,
        hi: f64,
    },
}

impl OutputActivation {
    fn apply(self, u: f64) -> f64 {
        match self {
            OutputActivation::Identity => u,
            OutputActivation::Softplus => softplus(u),
            OutputActivation::ScaledSigmoid { lo, hi } => lo + (hi - lo) * sigmoid(u),
        }
    }

    fn derivative(self, u: f64) -> f64 {
        match self {
            OutputActivation::Identity => 1.0,
            OutputActivation::Softplus => sigmoid(u),
            OutputActivation::ScaledSigmoid { lo, hi } => {
                let s = sigmoid(u);
                (hi - lo) * s * (1.0 - s)
            }
        }
    }

    pub fn tag(self) -> String {
        match self {
            OutputActivation::Identity => "identity".into(),
            OutputActivation::Softplus => "softplus".into(),
            OutputActivation::ScaledSigmoid { lo, hi } => {
                format!("scaled_sigmoid:{:016x}:{:016x}", lo.to_bits(), hi.to_bits())
            }
        }
    }

    pub fn from_tag(tag: &str) -> Result<Self> {
        let parts: Vec<&str> = tag.split(':').collect();
        let bits = |s: &str| {
            u64::from_str_radix(s, 16)
                .map(f64::from_bits)
                .map_err(|_| Error::Checkpoint(format!("bad activation tag {tag}")))
        };
        match parts.as_slice() {
            ["identity"] => Ok(OutputActivation::Identity),
            ["softplus"] => Ok(OutputActivation::Softplus),
            ["scaled_sigmoid", lo, hi] => Ok(OutputActivation::ScaledSigmoid {
                lo: bits(lo)?,
                hi: bits(hi)?,
            }),
            _ => Err(Error::Checkpoint(format!("bad activation tag {tag}"))),
        }
    }
}

pub fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(u: f64) -> f64 {
    u.max(0.0) + (-u.abs()).exp().ln_1p()
}

fn silu(u: f64) -> f64 {
    u * sigmoid(u)
}

fn silu_derivative(u: f64) -> f64 {
    let s = sigmoid(u);
    s * (1.0 + u * (1.0 - s))
}

/// Architecture without parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpShape {
    sizes: Vec<usize>,
    output: OutputActivation,
}

/// Activations recorded by a forward pass for the reverse pass.
#[derive(Debug, Clone, Default)]
pub struct MlpCache {
    /// Layer inputs; `inputs[0]` is the network input.
    inputs: Vec<Vec<f64>>,
    /// Pre-activations of every layer.
    pre: Vec<Vec<f64>>,
    output: Vec<f64>,
}

impl MlpCache {
    pub fn output(&self) -> &[f64] {
        &self.output
    }
}

impl MlpShape {
    pub fn new(
        input: usize,
        hidden: &[usize],
        output: usize,
        activation: OutputActivation,
    ) -> Self {
        let mut sizes = Vec::with_capacity(hidden.len() + 2);
        sizes.push(input);
        sizes.extend_from_slice(hidden);
        sizes.push(output);
        Self::from_sizes(sizes, activation)
    }

    pub fn from_sizes(sizes: Vec<usize>, output: OutputActivation) -> Self {
        assert!(
            sizes.len() >= 2 && sizes.iter().all(|&n| n > 0),
            "invalid layer sizes {sizes:?}"
        );
        Self { sizes, output }
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn output_activation(&self) -> OutputActivation {
        self.output
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// Glorot-uniform weights and zero biases.
    pub fn init_params<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut params = Vec::with_capacity(self.param_count());
        for w in self.sizes.windows(2) {
            let limit = (6.0 / (w[0] + w[1]) as f64).sqrt();
            for _ in 0..w[0] * w[1] {
                params.push(rng.random_range(-limit..limit));
            }
            params.extend(std::iter::repeat_n(0.0, w[1]));
        }
        params
    }

    fn check(&self, params: &[f64], x: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::Argument(format!(
                "{} parameters for a network of {}",
                params.len(),
                self.param_count()
            )));
        }
        if x.len() != self.input_dim() {
            return Err(Error::Argument(format!(
                "input of length {} for a network of input size {}",
                x.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, params: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        self.check(params, x)?;
        Ok(self.eval(params, x))
    }

    /// Forward pass without dimension checks.
    pub(crate) fn eval(&self, params: &[f64], x: &[f64]) -> Vec<f64> {
        let layers = self.sizes.len() - 1;
        let mut a = x.to_vec();
        let mut off = 0;
        for l in 0..layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &params[off..off + n_in * n_out];
            let b = &params[off + n_in * n_out..off + n_in * n_out + n_out];
            off += n_in * n_out + n_out;
            let last = l + 1 == layers;
            a = (0..n_out)
                .map(|j| {
                    let row = &w[j * n_in..(j + 1) * n_in];
                    let z = b[j] + row.iter().zip(&a).map(|(wi, ai)| wi * ai).sum::<f64>();
                    if last {
                        self.output.apply(z)
                    } else {
                        silu(z)
                    }
                })
                .collect();
        }
        a
    }

    /// Forward pass keeping what the reverse pass needs.
    pub fn forward_cached<'c>(
        &self,
        params: &[f64],
        x: &[f64],
        cache: &'c mut MlpCache,
    ) -> &'c [f64] {
        debug_assert!(self.check(params, x).is_ok());
        let layers = self.sizes.len() - 1;
        cache.inputs.resize(layers, Vec::new());
        cache.pre.resize(layers, Vec::new());
        cache.inputs[0].clear();
        cache.inputs[0].extend_from_slice(x);
        let mut off = 0;
        for l in 0..layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &params[off..off + n_in * n_out];
            let b = &params[off + n_in * n_out..off + n_in * n_out + n_out];
            off += n_in * n_out + n_out;
            let z: Vec<f64> = (0..n_out)
                .map(|j| {
                    let row = &w[j * n_in..(j + 1) * n_in];
                    b[j] + row
                        .iter()
                        .zip(&cache.inputs[l])
                        .map(|(wi, ai)| wi * ai)
                        .sum::<f64>()
                })
                .collect();
            if l + 1 < layers {
                let next = &mut cache.inputs[l + 1];
                next.clear();
                next.extend(z.iter().map(|&u| silu(u)));
            } else {
                cache.output.clear();
                cache.output.extend(z.iter().map(|&u| self.output.apply(u)));
            }
            cache.pre[l] = z;
        }
        &cache.output
    }

    /// Adds `d(dout . output)/d params` into `grad` for the pass in `cache`.
    pub fn backward(&self, params: &[f64], cache: &MlpCache, dout: &[f64], grad: &mut [f64]) {
        let layers = self.sizes.len() - 1;
        let mut offsets = Vec::with_capacity(layers);
        let mut off = 0;
        for w in self.sizes.windows(2) {
            offsets.push(off);
            off += w[0] * w[1] + w[1];
        }
        let mut delta: Vec<f64> = dout
            .iter()
            .zip(&cache.pre[layers - 1])
            .map(|(d, &u)| d * self.output.derivative(u))
            .collect();
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let off = offsets[l];
            let input = &cache.inputs[l];
            for j in 0..n_out {
                let dj = delta[j];
                if dj != 0.0 {
                    let g = &mut grad[off + j * n_in..off + (j + 1) * n_in];
                    for (gi, ai) in g.iter_mut().zip(input) {
                        *gi += dj * ai;
                    }
                }
                grad[off + n_in * n_out + j] += dj;
            }
            if l > 0 {
                let w = &params[off..off + n_in * n_out];
                let mut prev = vec![0.0; n_in];
                for j in 0..n_out {
                    let dj = delta[j];
                    if dj != 0.0 {
                        for (p, wi) in prev.iter_mut().zip(&w[j * n_in..(j + 1) * n_in]) {
                            *p += dj * wi;
                        }
                    }
                }
                for (p, &u) in prev.iter_mut().zip(&cache.pre[l - 1]) {
                    *p *= silu_derivative(u);
                }
                delta = prev;
            }
        }
    }
}

/// A network together with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    shape: MlpShape,
    params: Vec<f64>,
}

impl Mlp {
    pub fn new<R: Rng + ?Sized>(shape: MlpShape, rng: &mut R) -> Self {
        let params = shape.init_params(rng);
        Self { shape, params }
    }

    pub fn zeros(shape: MlpShape) -> Self {
        let params = vec![0.0; shape.param_count()];
        Self { shape, params }
    }

    pub fn from_params(shape: MlpShape, params: Vec<f64>) -> Result<Self> {
        if params.len() != shape.param_count() {
            return Err(Error::Argument(format!(
                "{} parameters for a network of {}",
                params.len(),
                shape.param_count()
            )));
        }
        Ok(Self { shape, params })
    }

    pub fn shape(&self) -> &MlpShape {
        &self.shape
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.shape.forward(&self.params, x)
    }

    /// First output for an input known to have the right size.
    pub(crate) fn scalar(&self, x: &[f64]) -> f64 {
        self.shape.eval(&self.params, x)[0]
    }

    pub fn forward_cached<'c>(&self, x: &[f64], cache: &'c mut MlpCache) -> &'c [f64] {
        self.shape.forward_cached(&self.params, x, cache)
    }

    pub fn backward(&self, cache: &MlpCache, dout: &[f64], grad: &mut [f64]) {
        self.shape.backward(&self.params, cache, dout, grad)
    }
}

/// Hard copy of `source` into `target`.
pub fn sync_target(source: &Mlp, target: &mut Mlp) -> Result<()> {
    if source.shape != target.shape {
        return Err(Error::Argument(format!(
            "target architecture {:?} differs from source {:?}",
            target.shape.sizes, source.shape.sizes
        )));
    }
    target.params.copy_from_slice(&source.params);
    Ok(())
}
