//! Small feedforward function approximator with analytic reverse-mode gradients.
//!
//! The network maps `(x, t, c)` to a velocity vector in data space. Inputs are
//! assembled as `[x.., t, c..]` where `c` is a one-hot context embedding, so
//! `topology[0] = data_dim + 1 + context_dim` and the last width equals
//! `data_dim`. Hidden layers use the configured activation; the output layer
//! is linear.

use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Checkpoint magic string.
pub const CHECKPOINT_MAGIC: &[u8; 6] = b"ADRPO1";

/// Hidden-layer activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    #[default]
    Tanh,
    /// Softplus `ln(1 + e^z)`, a smooth ReLU.
    SmoothRelu,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            // Stable softplus: ln(1+e^z) = max(z,0) + ln(1+e^-|z|).
            Activation::SmoothRelu => z.max(0.0) + (-z.abs()).exp().ln_1p(),
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let th = z.tanh();
                1.0 - th * th
            }
            Activation::SmoothRelu => 1.0 / (1.0 + (-z).exp()),
        }
    }

    fn id(self) -> u8 {
        match self {
            Activation::Tanh => 0,
            Activation::SmoothRelu => 1,
        }
    }

    fn from_id(id: u8) -> Result<Self> {
        match id {
            0 => Ok(Activation::Tanh),
            1 => Ok(Activation::SmoothRelu),
            other => Err(Error::Checkpoint(format!("unknown activation id {other}"))),
        }
    }
}

/// Flat-parameter feedforward velocity/policy network.
///
/// Parameters are stored as one flat vector: for each layer, `out x in`
/// row-major weights followed by `out` biases.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamNet {
    topology: Vec<usize>,
    params: Vec<f64>,
    activation: Activation,
}

/// Number of parameters implied by a topology: sum of `(in + 1) * out`.
pub fn param_count(topology: &[usize]) -> usize {
    topology.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
}

/// Per-layer activations recorded by a forward pass, consumed by `backward`.
///
/// Holding the cache by value makes "backward without a matching forward"
/// unrepresentable.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input vector fed to each layer (index 0 is the assembled input).
    layer_inputs: Vec<Vec<f64>>,
    /// Pre-activation values of each layer.
    pre_acts: Vec<Vec<f64>>,
}

/// Flat gradient aligned with `ParamNet::params`, plus the scalar loss it
/// belongs to. Accumulation over a batch is plain summation.
#[derive(Debug, Clone)]
pub struct GradBuffer {
    pub grad: Vec<f64>,
    pub loss: f64,
}

impl GradBuffer {
    pub fn zeros(len: usize) -> Self {
        Self {
            grad: vec![0.0; len],
            loss: 0.0,
        }
    }

    /// Adds another buffer (gradient linearity over batch samples).
    pub fn accumulate(&mut self, other: &GradBuffer) {
        assert_eq!(
            self.grad.len(),
            other.grad.len(),
            "gradient length mismatch"
        );
        for (g, o) in self.grad.iter_mut().zip(&other.grad) {
            *g += o;
        }
        self.loss += other.loss;
    }

    pub fn scale(&mut self, factor: f64) {
        for g in &mut self.grad {
            *g *= factor;
        }
        self.loss *= factor;
    }

    pub fn is_finite(&self) -> bool {
        self.loss.is_finite() && self.grad.iter().all(|g| g.is_finite())
    }
}

impl ParamNet {
    /// Builds a seeded net for `data_dim`-dimensional points conditioned on a
    /// one-hot context of width `context_dim`, with the given hidden widths.
    ///
    /// Weights and biases are uniform in `(-s, s)` with `s = 1/sqrt(fan_in)`.
    pub fn new(
        data_dim: usize,
        context_dim: usize,
        hidden: &[usize],
        activation: Activation,
        seed: u64,
    ) -> Self {
        let mut topology = Vec::with_capacity(hidden.len() + 2);
        topology.push(data_dim + 1 + context_dim);
        topology.extend_from_slice(hidden);
        topology.push(data_dim);

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(param_count(&topology));
        for w in topology.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let s = 1.0 / (fan_in as f64).sqrt();
            for _ in 0..(fan_in + 1) * fan_out {
                params.push(rng.random_range(-s..s));
            }
        }
        Self {
            topology,
            params,
            activation,
        }
    }

    /// Builds a net from explicit parts, validating the parameter count.
    pub fn from_parts(
        topology: Vec<usize>,
        params: Vec<f64>,
        activation: Activation,
    ) -> Result<Self> {
        if topology.len() < 2 {
            return Err(Error::InvalidConfig(
                "topology needs at least input and output widths".into(),
            ));
        }
        let last = *topology.last().expect("nonempty");
        if topology[0] < last + 1 {
            return Err(Error::InvalidConfig(format!(
                "input width {} cannot host data dim {} plus time",
                topology[0], last
            )));
        }
        let expected = param_count(&topology);
        if params.len() != expected {
            return Err(Error::ShapeMismatch {
                what: "params",
                expected,
                got: params.len(),
            });
        }
        Ok(Self {
            topology,
            params,
            activation,
        })
    }

    /// All-zero parameters: the net outputs the zero velocity everywhere.
    pub fn zeros(
        data_dim: usize,
        context_dim: usize,
        hidden: &[usize],
        activation: Activation,
    ) -> Self {
        let mut net = Self::new(data_dim, context_dim, hidden, activation, 0);
        net.params.iter_mut().for_each(|p| *p = 0.0);
        net
    }

    pub fn topology(&self) -> &[usize] {
        &self.topology
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn data_dim(&self) -> usize {
        *self.topology.last().expect("nonempty topology")
    }

    pub fn context_dim(&self) -> usize {
        self.topology[0] - self.data_dim() - 1
    }

    /// FNV-1a hash of the raw parameter bits. Used to assert reference
    /// immutability across a training run.
    pub fn param_hash(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        for p in &self.params {
            for b in p.to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        }
        h
    }

    fn check_input(&self, x: &[f64], t: f64, c: &[f64]) -> Result<()> {
        if x.len() != self.data_dim() {
            return Err(Error::ShapeMismatch {
                what: "x",
                expected: self.data_dim(),
                got: x.len(),
            });
        }
        if c.len() != self.context_dim() {
            return Err(Error::ShapeMismatch {
                what: "context",
                expected: self.context_dim(),
                got: c.len(),
            });
        }
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::TimeOutOfRange { t });
        }
        Ok(())
    }

    fn assemble_input(&self, x: &[f64], t: f64, c: &[f64]) -> Vec<f64> {
        let mut input = Vec::with_capacity(self.topology[0]);
        input.extend_from_slice(x);
        input.push(t);
        input.extend_from_slice(c);
        input
    }

    /// Evaluates the velocity `v(x, t, c)`.
    pub fn forward(&self, x: &[f64], t: f64, c: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x, t, c)?;
        let mut act = self.assemble_input(x, t, c);
        let mut offset = 0;
        let layers = self.topology.len() - 1;
        for (l, w) in self.topology.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let mut next = vec![0.0; fan_out];
            for (o, out) in next.iter_mut().enumerate() {
                let row = &self.params[offset + o * fan_in..offset + (o + 1) * fan_in];
                let mut z = self.params[offset + fan_in * fan_out + o];
                for (wi, ai) in row.iter().zip(&act) {
                    z += wi * ai;
                }
                *out = if l + 1 == layers {
                    z
                } else {
                    self.activation.apply(z)
                };
            }
            offset += (fan_in + 1) * fan_out;
            act = next;
        }
        Ok(act)
    }

    /// Forward pass that records per-layer state for `backward`.
    pub fn forward_cached(&self, x: &[f64], t: f64, c: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
        self.check_input(x, t, c)?;
        let layers = self.topology.len() - 1;
        let mut cache = ForwardCache {
            layer_inputs: Vec::with_capacity(layers),
            pre_acts: Vec::with_capacity(layers),
        };
        let mut act = self.assemble_input(x, t, c);
        let mut offset = 0;
        for (l, w) in self.topology.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let mut pre = vec![0.0; fan_out];
            for (o, z_out) in pre.iter_mut().enumerate() {
                let row = &self.params[offset + o * fan_in..offset + (o + 1) * fan_in];
                let mut z = self.params[offset + fan_in * fan_out + o];
                for (wi, ai) in row.iter().zip(&act) {
                    z += wi * ai;
                }
                *z_out = z;
            }
            offset += (fan_in + 1) * fan_out;
            cache.layer_inputs.push(act);
            let next = if l + 1 == layers {
                pre.clone()
            } else {
                pre.iter().map(|&z| self.activation.apply(z)).collect()
            };
            cache.pre_acts.push(pre);
            act = next;
        }
        Ok((act, cache))
    }

    /// Accumulates `dL/dparams` into `grad` for a single sample, given the
    /// upstream derivative `dL/doutput`. Linear in `upstream`.
    pub fn backprop_into(
        &self,
        cache: &ForwardCache,
        upstream: &[f64],
        grad: &mut [f64],
    ) -> Result<()> {
        if upstream.len() != self.data_dim() {
            return Err(Error::ShapeMismatch {
                what: "upstream",
                expected: self.data_dim(),
                got: upstream.len(),
            });
        }
        if grad.len() != self.params.len() {
            return Err(Error::ShapeMismatch {
                what: "grad",
                expected: self.params.len(),
                got: grad.len(),
            });
        }
        let layers = self.topology.len() - 1;
        // Parameter offset of each layer.
        let mut offsets = Vec::with_capacity(layers);
        let mut offset = 0;
        for w in self.topology.windows(2) {
            offsets.push(offset);
            offset += (w[0] + 1) * w[1];
        }

        let mut delta = upstream.to_vec();
        for l in (0..layers).rev() {
            let (fan_in, fan_out) = (self.topology[l], self.topology[l + 1]);
            let base = offsets[l];
            let a_in = &cache.layer_inputs[l];
            for o in 0..fan_out {
                let d = delta[o];
                let row = &mut grad[base + o * fan_in..base + (o + 1) * fan_in];
                for (gi, ai) in row.iter_mut().zip(a_in) {
                    *gi += d * ai;
                }
                grad[base + fan_in * fan_out + o] += d;
            }
            if l > 0 {
                let mut prev = vec![0.0; fan_in];
                for (o, &d) in delta.iter().enumerate().take(fan_out) {
                    let row = &self.params[base + o * fan_in..base + (o + 1) * fan_in];
                    for (pi, wi) in prev.iter_mut().zip(row) {
                        *pi += d * wi;
                    }
                }
                let pre_prev = &cache.pre_acts[l - 1];
                for (pi, &z) in prev.iter_mut().zip(pre_prev) {
                    *pi *= self.activation.derivative(z);
                }
                delta = prev;
            }
        }
        Ok(())
    }

    /// Per-sample gradient as a fresh buffer; `loss` is left at zero for the
    /// caller to fill in.
    pub fn backward(&self, cache: &ForwardCache, upstream: &[f64]) -> Result<GradBuffer> {
        let mut buf = GradBuffer::zeros(self.params.len());
        self.backprop_into(cache, upstream, &mut buf.grad)?;
        Ok(buf)
    }
}

/// Plain gradient step `params <- params - lr * grad`.
pub fn sgd_step(net: &mut ParamNet, grad: &GradBuffer, lr: f64) -> Result<()> {
    if lr <= 0.0 || !lr.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "learning rate {lr} must be positive"
        )));
    }
    if grad.grad.len() != net.params.len() {
        return Err(Error::ShapeMismatch {
            what: "grad",
            expected: net.params.len(),
            got: grad.grad.len(),
        });
    }
    if !grad.is_finite() {
        return Err(Error::NonFiniteGrad);
    }
    for (p, g) in net.params.iter_mut().zip(&grad.grad) {
        *p -= lr * g;
    }
    Ok(())
}

/// Optimizer selector for the trainers. SGD is the reference contract; Adam
/// is available as a config switch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    #[default]
    Sgd,
    Adam,
}

#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u32,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl Optimizer {
    pub fn new(kind: OptimizerKind, param_len: usize) -> Self {
        let state_len = match kind {
            OptimizerKind::Sgd => 0,
            OptimizerKind::Adam => param_len,
        };
        Self {
            kind,
            m: vec![0.0; state_len],
            v: vec![0.0; state_len],
            t: 0,
        }
    }

    pub fn step(&mut self, net: &mut ParamNet, grad: &GradBuffer, lr: f64) -> Result<()> {
        match self.kind {
            OptimizerKind::Sgd => sgd_step(net, grad, lr),
            OptimizerKind::Adam => {
                if lr <= 0.0 || !lr.is_finite() {
                    return Err(Error::InvalidConfig(format!(
                        "learning rate {lr} must be positive"
                    )));
                }
                if !grad.is_finite() {
                    return Err(Error::NonFiniteGrad);
                }
                self.t += 1;
                let bc1 = 1.0 - ADAM_BETA1.powi(self.t as i32);
                let bc2 = 1.0 - ADAM_BETA2.powi(self.t as i32);
                for ((p, g), (m, v)) in net
                    .params_mut()
                    .iter_mut()
                    .zip(&grad.grad)
                    .zip(self.m.iter_mut().zip(self.v.iter_mut()))
                {
                    *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                    *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                    let m_hat = *m / bc1;
                    let v_hat = *v / bc2;
                    *p -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
                }
                Ok(())
            }
        }
    }
}

/// Checkpoint floating point encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    F64,
    F32,
}

impl Precision {
    fn id(self) -> u8 {
        match self {
            Precision::F64 => 0,
            Precision::F32 => 1,
        }
    }
}

/// Writes the net in the binary checkpoint format: magic, topology,
/// activation id, precision id, then the little-endian flat parameter array.
pub fn save_checkpoint(net: &ParamNet, path: &Path, precision: Precision) -> Result<()> {
    let mut out: Vec<u8> = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&(net.topology.len() as u32).to_le_bytes());
    for &w in &net.topology {
        out.extend_from_slice(&(w as u32).to_le_bytes());
    }
    out.push(net.activation.id());
    out.push(precision.id());
    out.extend_from_slice(&(net.params.len() as u64).to_le_bytes());
    match precision {
        Precision::F64 => {
            for p in &net.params {
                out.extend_from_slice(&p.to_le_bytes());
            }
        }
        Precision::F32 => {
            for p in &net.params {
                out.extend_from_slice(&(*p as f32).to_le_bytes());
            }
        }
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&out)?;
    Ok(())
}

/// Reads a checkpoint back into a (double precision) net.
pub fn load_checkpoint(path: &Path) -> Result<ParamNet> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut cursor = 0usize;

    let take = |cursor: &mut usize, n: usize| -> Result<&[u8]> {
        if *cursor + n > bytes.len() {
            return Err(Error::Checkpoint("truncated file".into()));
        }
        let s = &bytes[*cursor..*cursor + n];
        *cursor += n;
        Ok(s)
    };

    let magic = take(&mut cursor, 6)?;
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let n_layers = u32::from_le_bytes(take(&mut cursor, 4)?.try_into().unwrap()) as usize;
    if !(2..=64).contains(&n_layers) {
        return Err(Error::Checkpoint(format!(
            "implausible layer count {n_layers}"
        )));
    }
    let mut topology = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        topology.push(u32::from_le_bytes(take(&mut cursor, 4)?.try_into().unwrap()) as usize);
    }
    let activation = Activation::from_id(take(&mut cursor, 1)?[0])?;
    let precision = take(&mut cursor, 1)?[0];
    let count = u64::from_le_bytes(take(&mut cursor, 8)?.try_into().unwrap()) as usize;
    if count != param_count(&topology) {
        return Err(Error::Checkpoint(format!(
            "parameter count {count} does not match topology {topology:?}"
        )));
    }
    let params = match precision {
        0 => {
            let raw = take(&mut cursor, count * 8)?;
            raw.chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect()
        }
        1 => {
            let raw = take(&mut cursor, count * 4)?;
            raw.chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect()
        }
        other => return Err(Error::Checkpoint(format!("unknown precision id {other}"))),
    };
    if cursor != bytes.len() {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    ParamNet::from_parts(topology, params, activation)
}

/// Loads a checkpoint and rejects it when its topology differs from the one
/// the caller expects.
pub fn load_checkpoint_expecting(path: &Path, topology: &[usize]) -> Result<ParamNet> {
    let net = load_checkpoint(path)?;
    if net.topology() != topology {
        return Err(Error::Checkpoint(format!(
            "topology mismatch: file has {:?}, expected {:?}",
            net.topology(),
            topology
        )));
    }
    Ok(net)
}
