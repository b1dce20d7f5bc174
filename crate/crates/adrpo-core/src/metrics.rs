//! Evaluation metrics: sample diversity, exact empirical Wasserstein-2 via
//! optimal assignment, velocity-field divergence probes, policy entropy, and
//! the reward/diversity trade-off trajectory records logged per iteration.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::ParamNet;

/// Schema tag written into every JSONL record.
pub const METRICS_SCHEMA: &str = "adrpo-metrics/1";

/// Mean pairwise Euclidean distance over all unordered pairs.
pub fn diversity(samples: &[[f64; 2]]) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::GroupTooSmall {
            got: samples.len(),
            min: 2,
        });
    }
    let n = samples.len();
    let mut total = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let dx = samples[i][0] - samples[j][0];
            let dy = samples[i][1] - samples[j][1];
            total += (dx * dx + dy * dy).sqrt();
        }
    }
    Ok(total / (n * (n - 1) / 2) as f64)
}

/// Exact linear assignment on a square cost matrix via shortest augmenting
/// paths with potentials, O(n^3). Returns the minimal total cost.
fn assignment_cost(cost: &[Vec<f64>]) -> f64 {
    let n = cost.len();
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut matched_row = vec![0usize; n + 1]; // column j -> row (1-based, 0 = free)
    let mut way = vec![0usize; n + 1];

    for i in 1..=n {
        matched_row[0] = i;
        let mut j0 = 0usize;
        let mut min_slack = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = matched_row[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < min_slack[j] {
                        min_slack[j] = cur;
                        way[j] = j0;
                    }
                    if min_slack[j] < delta {
                        delta = min_slack[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[matched_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_slack[j] -= delta;
                }
            }
            j0 = j1;
            if matched_row[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            matched_row[j0] = matched_row[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut total = 0.0;
    for j in 1..=n {
        total += cost[matched_row[j] - 1][j - 1];
    }
    total
}

/// Empirical Wasserstein-2 between two equal-size point multisets:
/// the square root of the minimal mean squared pair distance over perfect
/// matchings, solved exactly.
pub fn w2_empirical(a: &[[f64; 2]], b: &[[f64; 2]]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::SizeMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::EmptyBatch("w2_empirical"));
    }
    if a.len() > 1024 {
        return Err(Error::InvalidConfig(format!(
            "w2_empirical supports up to 1024 points, got {}",
            a.len()
        )));
    }
    let n = a.len();
    let cost: Vec<Vec<f64>> = a
        .iter()
        .map(|p| {
            b.iter()
                .map(|q| {
                    let dx = p[0] - q[0];
                    let dy = p[1] - q[1];
                    dx * dx + dy * dy
                })
                .collect()
        })
        .collect();
    let total = assignment_cost(&cost);
    Ok((total / n as f64).max(0.0).sqrt())
}

/// One probe point for comparing two velocity fields.
#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    pub x: [f64; 2],
    pub t: f64,
    pub context: usize,
}

/// Fixed per-run probe set: standard normal positions, uniform times, and
/// contexts cycling through the environment's context set.
pub fn generate_probes(count: usize, num_contexts: usize, seed: u64) -> Vec<Probe> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| Probe {
            x: [rng.sample(StandardNormal), rng.sample(StandardNormal)],
            t: rng.random_range(0.0..1.0),
            context: i % num_contexts,
        })
        .collect()
}

/// Mean squared velocity difference between two fields over a probe set.
pub fn velocity_divergence(net: &ParamNet, reference: &ParamNet, probes: &[Probe]) -> Result<f64> {
    if probes.is_empty() {
        return Err(Error::EmptyBatch("velocity_divergence"));
    }
    let context_dim = net.context_dim();
    let mut total = 0.0;
    for probe in probes {
        let c = crate::one_hot(probe.context, context_dim)?;
        let v = net.forward(&probe.x, probe.t, &c)?;
        let r = reference.forward(&probe.x, probe.t, &c)?;
        total += v
            .iter()
            .zip(&r)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
    }
    Ok(total / probes.len() as f64)
}

/// Shannon entropy of a probability row, in nats.
pub fn entropy(row: &[f64]) -> f64 {
    row.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.ln()).sum()
}

/// Min/mean/max of the adaptive coefficient across one training batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BetaStats {
    pub min: f64,
    pub mean: f64,
    pub max: f64,
}

impl BetaStats {
    pub fn from_values(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyBatch("beta stats"));
        }
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        let mut sum = 0.0;
        for &v in values {
            min = min.min(v);
            max = max.max(v);
            sum += v;
        }
        Ok(Self {
            min,
            mean: sum / values.len() as f64,
            max,
        })
    }
}

/// Per-context slice of an iteration's metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContextMetrics {
    pub context: usize,
    pub count: usize,
    pub reward_mean: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub diversity: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub velocity_divergence: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub kl_ref: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub entropy: Option<f64>,
}

/// One iteration of trade-off logging; serializes to a single JSONL line.
///
/// Wall-clock time is kept in memory only: the serialized stream must be a
/// pure function of (config, seed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsRecord {
    pub schema: String,
    pub iteration: usize,
    pub method: String,
    pub reward_mean: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub diversity: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub w2_ref: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub velocity_divergence: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub kl_ref: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub entropy: Option<f64>,
    pub beta_tot: BetaStats,
    pub per_context: Vec<ContextMetrics>,
    #[serde(skip)]
    pub wall_clock_ms: f64,
}

impl MetricsRecord {
    /// All serialized numbers must be finite, distances nonnegative.
    pub fn validate(&self) -> Result<()> {
        let finite = |v: f64| v.is_finite();
        let mut ok = finite(self.reward_mean)
            && finite(self.beta_tot.min)
            && finite(self.beta_tot.mean)
            && finite(self.beta_tot.max);
        for opt in [
            self.diversity,
            self.w2_ref,
            self.velocity_divergence,
            self.kl_ref,
            self.entropy,
        ]
        .into_iter()
        .flatten()
        {
            ok &= finite(opt);
        }
        if let Some(d) = self.diversity {
            ok &= d >= 0.0;
        }
        if let Some(w) = self.w2_ref {
            ok &= w >= 0.0;
        }
        if !ok {
            return Err(Error::InvalidConfig(format!(
                "non-finite or negative metric at iteration {}",
                self.iteration
            )));
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut line = serde_json::to_string(self).expect("metrics serialize");
        line.push('\n');
        line
    }

    pub fn from_jsonl(line: &str) -> Result<Self> {
        serde_json::from_str(line)
            .map_err(|e| Error::InvalidConfig(format!("bad metrics line: {e}")))
    }
}

/// Secondary axis of the trade-off trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TradeoffAxis {
    Diversity,
    Divergence,
    Entropy,
}

impl TradeoffAxis {
    fn pick(self, record: &MetricsRecord) -> Option<f64> {
        match self {
            TradeoffAxis::Diversity => record.diversity,
            TradeoffAxis::Divergence => record.w2_ref,
            TradeoffAxis::Entropy => record.entropy,
        }
    }
}

/// Dominance verdict between the final checkpoints of two runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DominanceVerdict {
    FirstDominates,
    SecondDominates,
    Tied,
    Incomparable,
}

/// Iteration-ordered (reward, secondary) trajectory of a run.
pub fn pareto_trajectory(records: &[MetricsRecord], axis: TradeoffAxis) -> Result<Vec<(f64, f64)>> {
    if records.is_empty() {
        return Err(Error::EmptyBatch("pareto_trajectory"));
    }
    records
        .iter()
        .map(|r| {
            let secondary = axis.pick(r).ok_or_else(|| {
                Error::InvalidConfig(format!("record {} lacks the {axis:?} axis", r.iteration))
            })?;
            Ok((r.reward_mean, secondary))
        })
        .collect()
}

/// First dominates when it is no worse on both axes and strictly better on
/// at least one; equal finals on both axes are a tie.
pub fn dominance(first: (f64, f64), second: (f64, f64)) -> DominanceVerdict {
    let (ra, da) = first;
    let (rb, db) = second;
    if ra == rb && da == db {
        DominanceVerdict::Tied
    } else if ra >= rb && da >= db {
        DominanceVerdict::FirstDominates
    } else if rb >= ra && db >= da {
        DominanceVerdict::SecondDominates
    } else {
        DominanceVerdict::Incomparable
    }
}
