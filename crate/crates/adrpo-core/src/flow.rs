//! Conditional flow matching core: straight-line interpolation paths, the
//! CFM regression loss, and an explicit Euler sampler for the learned ODE.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{GradBuffer, ParamNet};

/// One interpolation path sample on the straight line from `x0` to `x1`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowPath {
    pub x0: Vec<f64>,
    pub x1: Vec<f64>,
    pub t: f64,
    /// Interpolant `(1 - t) * x0 + t * x1`.
    pub xt: Vec<f64>,
    /// Target velocity `x1 - x0`.
    pub ut: Vec<f64>,
}

/// Builds the straight-line path point at time `t`.
pub fn make_path(x0: &[f64], x1: &[f64], t: f64) -> Result<FlowPath> {
    if x0.len() != x1.len() {
        return Err(Error::SizeMismatch {
            left: x0.len(),
            right: x1.len(),
        });
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::TimeOutOfRange { t });
    }
    let xt = x0
        .iter()
        .zip(x1)
        .map(|(a, b)| (1.0 - t) * a + t * b)
        .collect();
    let ut = x1.iter().zip(x0).map(|(b, a)| b - a).collect();
    Ok(FlowPath {
        x0: x0.to_vec(),
        x1: x1.to_vec(),
        t,
        xt,
        ut,
    })
}

/// Integration scheme for the sampling ODE.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerScheme {
    #[default]
    Euler,
}

/// ODE sampler configuration: explicit Euler with a fixed step count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    pub num_steps: usize,
    #[serde(default)]
    pub scheme: SamplerScheme,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            num_steps: 64,
            scheme: SamplerScheme::Euler,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_steps < 1 {
            return Err(Error::InvalidConfig("num_steps must be >= 1".into()));
        }
        Ok(())
    }
}

/// Integrates `dx/dt = v(x, t, c)` from the prior draw `x0` to time 1 with
/// explicit Euler: `x_{k+1} = x_k + (1/N) * v(x_k, k/N, c)`.
pub fn sample(net: &ParamNet, c: &[f64], cfg: &SamplerConfig, x0: &[f64]) -> Result<Vec<f64>> {
    cfg.validate()?;
    let n = cfg.num_steps;
    let dt = 1.0 / n as f64;
    let mut x = x0.to_vec();
    for k in 0..n {
        let t = k as f64 / n as f64;
        let v = net.forward(&x, t, c)?;
        for (xi, vi) in x.iter_mut().zip(&v) {
            *xi += dt * vi;
        }
        if x.iter().any(|xi| !xi.is_finite()) {
            return Err(Error::SamplerDiverged { step: k });
        }
    }
    Ok(x)
}

/// Mean over the batch of `|v_theta(xt, t, c) - ut|^2` with its gradient.
///
/// `batch` pairs each path with the one-hot context it was generated under.
pub fn cfm_loss(net: &ParamNet, batch: &[(FlowPath, Vec<f64>)]) -> Result<(f64, GradBuffer)> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch("cfm_loss"));
    }
    let inv_b = 1.0 / batch.len() as f64;
    let mut buf = GradBuffer::zeros(net.params().len());
    for (path, c) in batch {
        let (v, cache) = net.forward_cached(&path.xt, path.t, c)?;
        let mut sq = 0.0;
        let upstream: Vec<f64> = v
            .iter()
            .zip(&path.ut)
            .map(|(vi, ui)| {
                let d = vi - ui;
                sq += d * d;
                2.0 * inv_b * d
            })
            .collect();
        buf.loss += inv_b * sq;
        net.backprop_into(&cache, &upstream, &mut buf.grad)?;
    }
    Ok((buf.loss, buf))
}
