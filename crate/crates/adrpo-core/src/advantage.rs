//! Batch-baseline advantage estimation, advantage clipping, and the adaptive
//! regularization coefficient `beta_tot = beta0 - A_clipped`.
//!
//! This is the mechanism shared by both trainers: the same clipped advantage
//! weights the data term and shrinks or grows the divergence penalty, so
//! high-advantage samples are exploited aggressively while low-advantage
//! samples are pulled back toward the reference policy.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Baseline coefficient and advantage clip range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdaptiveRegConfig {
    pub beta0: f64,
    pub a_min: f64,
    pub a_max: f64,
}

impl AdaptiveRegConfig {
    pub fn new(beta0: f64, a_min: f64, a_max: f64) -> Result<Self> {
        let cfg = Self {
            beta0,
            a_min,
            a_max,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Flow-matching defaults: beta0 = 1, clip [-1, 1].
    pub fn fm_default() -> Self {
        Self {
            beta0: 1.0,
            a_min: -1.0,
            a_max: 1.0,
        }
    }

    /// Discrete policy-gradient defaults: beta0 = 0.04, clip [-0.04, 0.04].
    pub fn pg_default() -> Self {
        Self {
            beta0: 0.04,
            a_min: -0.04,
            a_max: 0.04,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta0.is_finite() && self.beta0 >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "beta0 {} must be finite and nonnegative",
                self.beta0
            )));
        }
        if self.a_min.partial_cmp(&self.a_max) != Some(std::cmp::Ordering::Less) {
            return Err(Error::InvalidConfig(format!(
                "a_min {} must be below a_max {}",
                self.a_min, self.a_max
            )));
        }
        if self.a_min > 0.0 || self.a_max < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "clip range [{}, {}] must contain 0",
                self.a_min, self.a_max
            )));
        }
        Ok(())
    }

    pub fn clip(&self, advantage: f64) -> f64 {
        advantage.clamp(self.a_min, self.a_max)
    }

    /// Adaptive coefficient `beta0 - a_clipped`. The argument must already be
    /// clipped; anything outside the range is a contract violation.
    pub fn beta_tot(&self, a_clipped: f64) -> Result<f64> {
        if !(self.a_min..=self.a_max).contains(&a_clipped) {
            return Err(Error::AdvantageOutOfRange {
                value: a_clipped,
                min: self.a_min,
                max: self.a_max,
            });
        }
        Ok(self.beta0 - a_clipped)
    }

    /// Closed interval all `beta_tot` values fall in.
    pub fn beta_bounds(&self) -> (f64, f64) {
        (self.beta0 - self.a_max, self.beta0 - self.a_min)
    }
}

/// One sample with its reward decomposed against the per-context baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardedSample<S> {
    pub context: usize,
    pub sample: S,
    pub reward: f64,
    pub baseline: f64,
    pub advantage: f64,
    pub clipped: f64,
}

/// Per-context arithmetic-mean baselines `V(c)` over a batch of rewards.
pub fn baseline(rewards_by_context: &BTreeMap<usize, Vec<f64>>) -> Result<BTreeMap<usize, f64>> {
    let mut out = BTreeMap::new();
    for (&context, rewards) in rewards_by_context {
        if rewards.is_empty() {
            return Err(Error::EmptyGroup { context });
        }
        let v = rewards.iter().sum::<f64>() / rewards.len() as f64;
        out.insert(context, v);
    }
    Ok(out)
}

/// Attaches baselines, advantages and clipped advantages to a batch.
///
/// Group advantages per context sum to zero before clipping.
pub fn advantages<S: Clone>(
    batch: &[(usize, S, f64)],
    cfg: &AdaptiveRegConfig,
) -> Result<Vec<RewardedSample<S>>> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch("advantages"));
    }
    let mut grouped: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for (context, _, reward) in batch {
        grouped.entry(*context).or_default().push(*reward);
    }
    let baselines = baseline(&grouped)?;
    Ok(batch
        .iter()
        .map(|(context, sample, reward)| {
            let v = baselines[context];
            let advantage = reward - v;
            RewardedSample {
                context: *context,
                sample: sample.clone(),
                reward: *reward,
                baseline: v,
                advantage,
                clipped: cfg.clip(advantage),
            }
        })
        .collect())
}
