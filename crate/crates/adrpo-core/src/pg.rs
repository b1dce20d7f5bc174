//! Clipped policy gradient with group-normalized advantages and an adaptive
//! KL penalty, on tabular softmax policies over synthetic contextual bandits.
//!
//! The loss pairs each sample's clipped advantage with that sample's own
//! divergence contribution, so the coefficient acts where the sample acted.
//! Logged metrics use the exact KL sum over the small action space, which
//! keeps estimator variance out of the evaluation. Episodes are one step
//! long: the exploration dynamics come entirely from the regularization
//! mechanism.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::advantage::AdaptiveRegConfig;
use crate::error::{Error, Result};
use crate::metrics::{BetaStats, ContextMetrics, MetricsRecord, METRICS_SCHEMA};

const STD_EPS: f64 = 1e-8;

/// Per-context softmax policy stored as raw logits.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyTable {
    logits: Vec<Vec<f64>>,
}

impl PolicyTable {
    pub fn from_logits(logits: Vec<Vec<f64>>) -> Result<Self> {
        if logits.is_empty() || logits[0].len() < 2 {
            return Err(Error::InvalidConfig(
                "policy table needs at least one context and two actions".into(),
            ));
        }
        let k = logits[0].len();
        for row in &logits {
            if row.len() != k {
                return Err(Error::SizeMismatch {
                    left: k,
                    right: row.len(),
                });
            }
            if row.iter().any(|l| !l.is_finite()) {
                return Err(Error::InvalidConfig("non-finite logit".into()));
            }
        }
        Ok(Self { logits })
    }

    /// Table whose softmax reproduces the given probability rows.
    pub fn from_probs(probs: &[Vec<f64>]) -> Result<Self> {
        let logits = probs
            .iter()
            .map(|row| {
                if row.iter().any(|&p| p <= 0.0) {
                    return Err(Error::InvalidConfig(
                        "reference probabilities must be strictly positive".into(),
                    ));
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidConfig(format!(
                        "probability row sums to {sum}, expected 1"
                    )));
                }
                Ok(row.iter().map(|p| p.ln()).collect())
            })
            .collect::<Result<Vec<Vec<f64>>>>()?;
        Self::from_logits(logits)
    }

    pub fn num_contexts(&self) -> usize {
        self.logits.len()
    }

    pub fn num_actions(&self) -> usize {
        self.logits[0].len()
    }

    pub fn logits(&self) -> &[Vec<f64>] {
        &self.logits
    }

    pub fn logits_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.logits
    }

    /// Softmax probabilities for one context row; strictly positive and
    /// summing to one.
    pub fn probs(&self, context: usize) -> Result<Vec<f64>> {
        let row = self.logits.get(context).ok_or(Error::UnknownContext {
            context,
            num_contexts: self.logits.len(),
        })?;
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|l| (l - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        Ok(exps.into_iter().map(|e| e / sum).collect())
    }
}

/// One group rollout for a single context.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupRollout {
    pub context: usize,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    /// Advantages as consumed by the loss. The trainer normalizes per group
    /// (mean 0, population std 1 pre-clipping) and then clips to the
    /// configured range before both uses.
    pub advantages: Vec<f64>,
    /// Probability each sampled action had under the old policy.
    pub old_probs: Vec<f64>,
}

/// Synthetic contextual bandit standing in for a prompt set plus reward model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BanditSpec {
    /// `reward_table[context][action]`.
    pub reward_table: Vec<Vec<f64>>,
    /// Standard deviation of the seeded reward noise.
    #[serde(default)]
    pub noise_sigma: f64,
    /// Reference policy rows, encoding which actions the reference prefers.
    pub reference_probs: Vec<Vec<f64>>,
}

impl BanditSpec {
    pub fn validate(&self) -> Result<()> {
        if self.reward_table.is_empty() {
            return Err(Error::InvalidConfig(
                "bandit needs at least one context".into(),
            ));
        }
        let k = self.reward_table[0].len();
        if k < 2 {
            return Err(Error::InvalidConfig(
                "bandit needs at least two actions".into(),
            ));
        }
        if self.reference_probs.len() != self.reward_table.len() {
            return Err(Error::SizeMismatch {
                left: self.reference_probs.len(),
                right: self.reward_table.len(),
            });
        }
        for row in &self.reward_table {
            if row.len() != k || row.iter().any(|r| !r.is_finite()) {
                return Err(Error::InvalidConfig(
                    "reward table rows must be finite and equal length".into(),
                ));
            }
        }
        for row in &self.reference_probs {
            if row.len() != k {
                return Err(Error::SizeMismatch {
                    left: row.len(),
                    right: k,
                });
            }
            let sum: f64 = row.iter().sum();
            if row.iter().any(|&p| p <= 0.0) || (sum - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidConfig(
                    "reference rows must be strictly positive and sum to 1".into(),
                ));
            }
        }
        if self.noise_sigma < 0.0 {
            return Err(Error::InvalidConfig(
                "noise_sigma must be nonnegative".into(),
            ));
        }
        Ok(())
    }

    pub fn num_contexts(&self) -> usize {
        self.reward_table.len()
    }

    pub fn num_actions(&self) -> usize {
        self.reward_table[0].len()
    }

    /// Index of the highest-reward action for a context.
    pub fn best_action(&self, context: usize) -> usize {
        let row = &self.reward_table[context];
        let mut best = 0;
        for (a, &r) in row.iter().enumerate() {
            if r > row[best] {
                best = a;
            }
        }
        best
    }

    /// The deceptive bandit: the reference concentrates on a mediocre action
    /// while the globally best action sits at negligible reference mass, so
    /// a fixed KL anchor traps the learner near the local optimum. The other
    /// actions pay the same mediocre reward, leaving reward noise as the only
    /// signal until the best action is discovered.
    pub fn deceptive() -> Self {
        let k = 10;
        let mut rewards = vec![0.5; k]; // mediocre plateau, preferred action at 0
        rewards[k - 1] = 1.0; // global optimum
        let mut probs = vec![0.145 / 8.0; k];
        probs[0] = 0.85;
        probs[k - 1] = 0.005;
        Self {
            reward_table: vec![rewards],
            noise_sigma: 0.05,
            reference_probs: vec![probs],
        }
    }

    /// Null control: every action pays the same, so there is nothing to
    /// exploit and the policies should not move.
    pub fn uniform(k: usize) -> Self {
        Self {
            reward_table: vec![vec![0.5; k]],
            noise_sigma: 0.0,
            reference_probs: vec![vec![1.0 / k as f64; k]],
        }
    }

    /// Two-peaks lookup table with hand-checked values: two good actions of
    /// different heights among flat distractors.
    pub fn two_peaks() -> Self {
        Self {
            reward_table: vec![vec![0.1, 0.8, 0.1, 0.4, 0.1]],
            noise_sigma: 0.0,
            reference_probs: vec![vec![0.2; 5]],
        }
    }
}

/// Group-relative normalization: `(r - mean) / std` with the population
/// standard deviation, or all zeros when the group has no spread.
pub fn grpo_advantage(rewards: &[f64]) -> Result<Vec<f64>> {
    let g = rewards.len();
    if g < 2 {
        return Err(Error::GroupTooSmall { got: g, min: 2 });
    }
    let mean = rewards.iter().sum::<f64>() / g as f64;
    let var = rewards.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / g as f64;
    let std = var.sqrt();
    if std <= STD_EPS {
        return Ok(vec![0.0; g]);
    }
    Ok(rewards.iter().map(|r| (r - mean) / std).collect())
}

fn check_clip_eps(clip_eps: f64) -> Result<()> {
    if !(clip_eps > 0.0 && clip_eps < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "clip epsilon {clip_eps} must lie in (0, 1)"
        )));
    }
    Ok(())
}

/// Clipped surrogate loss for one rollout, with its exact gradient over the
/// context's logit row.
///
/// Per sample: `-min(A * ratio, A * clip(ratio, 1 - eps, 1 + eps))`, averaged
/// over the group, with `ratio = pi_theta(a|c) / pi_old(a|c)`.
pub fn pg_loss(
    policy: &PolicyTable,
    rollout: &GroupRollout,
    clip_eps: f64,
) -> Result<(f64, Vec<f64>)> {
    check_clip_eps(clip_eps)?;
    let g = rollout.actions.len();
    if g == 0 {
        return Err(Error::EmptyBatch("pg_loss"));
    }
    let probs = policy.probs(rollout.context)?;
    let k = probs.len();
    let mut loss = 0.0;
    let mut grad = vec![0.0; k];
    let inv_g = 1.0 / g as f64;
    for i in 0..g {
        let a = rollout.actions[i];
        let adv = rollout.advantages[i];
        let ratio = probs[a] / rollout.old_probs[i];
        let clipped_ratio = ratio.clamp(1.0 - clip_eps, 1.0 + clip_eps);
        let unclipped = adv * ratio;
        let clipped = adv * clipped_ratio;
        loss += -inv_g * unclipped.min(clipped);
        // The min's active branch: the clipped constant contributes no
        // gradient; d ratio / d logit_j = ratio * (1[j = a] - probs[j]).
        if unclipped <= clipped {
            let scale = -inv_g * adv * ratio;
            for (j, gj) in grad.iter_mut().enumerate() {
                let ind = if j == a { 1.0 } else { 0.0 };
                *gj += scale * (ind - probs[j]);
            }
        }
    }
    Ok((loss, grad))
}

/// Exact KL divergence between policy and reference rows for one context.
pub fn kl_exact(policy: &PolicyTable, reference: &PolicyTable, context: usize) -> Result<f64> {
    let p = policy.probs(context)?;
    let r = reference.probs(context)?;
    if p.len() != r.len() {
        return Err(Error::SizeMismatch {
            left: p.len(),
            right: r.len(),
        });
    }
    Ok(p.iter().zip(&r).map(|(pi, ri)| pi * (pi / ri).ln()).sum())
}

/// Full objective: clipped surrogate plus the adaptively weighted divergence.
///
/// Each sample carries its own divergence contribution
/// `d_i = ratio - ln(ratio) - 1` with `ratio = pi_ref(a_i) / pi_theta(a_i)`,
/// the nonnegative estimator whose group mean estimates the exact KL. The
/// sample's clipped advantage sets the coefficient on its own term:
///
/// `loss = pg + mean_i (beta0 - A_clipped_i) * d_i`
///
/// so high-advantage samples move freely while low-advantage samples are
/// anchored to the reference through the actions they took. A shared exact
/// KL would collapse the per-sample coefficients to their mean, which
/// cancels the adaptation. `force_zero_coef` pins the coefficient advantage
/// at zero, which is exactly the fixed-beta baseline.
pub fn adrpo_grpo_loss(
    policy: &PolicyTable,
    reference: &PolicyTable,
    rollout: &GroupRollout,
    reg: &AdaptiveRegConfig,
    clip_eps: f64,
    force_zero_coef: bool,
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let (pg, pg_grad) = pg_loss(policy, rollout, clip_eps)?;
    let probs = policy.probs(rollout.context)?;
    let ref_probs = reference.probs(rollout.context)?;
    let g = rollout.actions.len();
    let inv_g = 1.0 / g as f64;

    let coefs: Vec<f64> = rollout
        .advantages
        .iter()
        .map(|&a| {
            let a_coef = if force_zero_coef { 0.0 } else { reg.clip(a) };
            reg.beta_tot(a_coef)
        })
        .collect::<Result<Vec<f64>>>()?;

    let mut loss = pg;
    let mut grad = pg_grad;
    for (i, &a) in rollout.actions.iter().enumerate() {
        let ratio = ref_probs[a] / probs[a];
        let d = ratio - ratio.ln() - 1.0;
        loss += inv_g * coefs[i] * d;
        // d(d_i)/d(logit_j) = (1 - ratio) * (1[j = a] - probs[j]).
        let scale = inv_g * coefs[i] * (1.0 - ratio);
        for (j, gj) in grad.iter_mut().enumerate() {
            let ind = if j == a { 1.0 } else { 0.0 };
            *gj += scale * (ind - probs[j]);
        }
    }
    Ok((loss, grad, coefs))
}

/// Method selector for the bandit trainer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PgMethod {
    AdrpoGrpo,
    GrpoFixed,
}

impl PgMethod {
    pub fn name(self) -> &'static str {
        match self {
            PgMethod::AdrpoGrpo => "adrpo-grpo",
            PgMethod::GrpoFixed => "grpo-fixed",
        }
    }
}

/// Bandit trainer configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PgConfig {
    pub method: PgMethod,
    pub reg: AdaptiveRegConfig,
    pub clip_eps: f64,
    pub group_size: usize,
    pub lr: f64,
    pub seed: u64,
    /// Pins the coefficient advantage at zero while leaving the policy
    /// gradient untouched (the fixed-beta reduction).
    #[serde(default)]
    pub force_zero_coef_advantage: bool,
}

impl Default for PgConfig {
    fn default() -> Self {
        Self {
            method: PgMethod::AdrpoGrpo,
            reg: AdaptiveRegConfig::pg_default(),
            clip_eps: 0.2,
            group_size: 8,
            // Advantage clipping caps the policy-gradient weights at a_max,
            // so logit updates need a correspondingly large step size.
            lr: 2.5,
            seed: 0,
            force_zero_coef_advantage: false,
        }
    }
}

impl PgConfig {
    pub fn validate(&self) -> Result<()> {
        self.reg.validate()?;
        check_clip_eps(self.clip_eps)?;
        if self.group_size < 2 {
            return Err(Error::GroupTooSmall {
                got: self.group_size,
                min: 2,
            });
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "lr {} must be nonnegative",
                self.lr
            )));
        }
        Ok(())
    }
}

/// One bandit fine-tuning run: policy, frozen reference, and RNG stream.
#[derive(Debug, Clone)]
pub struct PgTrainer {
    spec: BanditSpec,
    cfg: PgConfig,
    policy: PolicyTable,
    reference: PolicyTable,
    rng: ChaCha8Rng,
    iteration: usize,
}

impl PgTrainer {
    pub fn new(spec: BanditSpec, cfg: PgConfig) -> Result<Self> {
        spec.validate()?;
        cfg.validate()?;
        let reference = PolicyTable::from_probs(&spec.reference_probs)?;
        let policy = reference.clone();
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        Ok(Self {
            spec,
            cfg,
            policy,
            reference,
            rng,
            iteration: 0,
        })
    }

    pub fn policy(&self) -> &PolicyTable {
        &self.policy
    }

    pub fn reference(&self) -> &PolicyTable {
        &self.reference
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    fn sample_action(probs: &[f64], u: f64) -> usize {
        let mut acc = 0.0;
        for (a, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return a;
            }
        }
        probs.len() - 1
    }

    /// Runs one iteration: snapshot the old policy, roll out a group per
    /// context, take one gradient step, and log metrics. The state does not
    /// advance when the step fails.
    pub fn step(&mut self) -> Result<MetricsRecord> {
        let started = std::time::Instant::now();
        let old = self.policy.clone();
        let g = self.cfg.group_size;
        let num_contexts = self.spec.num_contexts();

        let mut grads: Vec<Vec<f64>> = Vec::with_capacity(num_contexts);
        let mut all_coefs: Vec<f64> = Vec::new();
        let mut per_context = Vec::with_capacity(num_contexts);
        let mut reward_sum = 0.0;

        for context in 0..num_contexts {
            let old_probs_row = old.probs(context)?;
            let mut actions = Vec::with_capacity(g);
            let mut rewards = Vec::with_capacity(g);
            let mut old_probs = Vec::with_capacity(g);
            for _ in 0..g {
                let u: f64 = self.rng.random_range(0.0..1.0);
                let a = Self::sample_action(&old_probs_row, u);
                let noise: f64 = if self.spec.noise_sigma > 0.0 {
                    let n: f64 = self.rng.sample(StandardNormal);
                    self.spec.noise_sigma * n
                } else {
                    0.0
                };
                actions.push(a);
                rewards.push(self.spec.reward_table[context][a] + noise);
                old_probs.push(old_probs_row[a]);
            }
            let normalized = grpo_advantage(&rewards)?;
            let clipped: Vec<f64> = normalized.iter().map(|&a| self.cfg.reg.clip(a)).collect();
            let rollout = GroupRollout {
                context,
                actions,
                rewards: rewards.clone(),
                advantages: clipped,
                old_probs,
            };
            let force_zero =
                self.cfg.force_zero_coef_advantage || self.cfg.method == PgMethod::GrpoFixed;
            let (_, grad, coefs) = adrpo_grpo_loss(
                &self.policy,
                &self.reference,
                &rollout,
                &self.cfg.reg,
                self.cfg.clip_eps,
                force_zero,
            )?;
            if grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Divergence {
                    iteration: self.iteration,
                });
            }
            grads.push(grad);
            all_coefs.extend(coefs);
            reward_sum += rewards.iter().sum::<f64>();

            per_context.push((context, rewards));
        }

        // Commit the step only after every context produced a finite gradient.
        let scale = self.cfg.lr / num_contexts as f64;
        for (context, grad) in grads.iter().enumerate() {
            for (l, g) in self.policy.logits_mut()[context].iter_mut().zip(grad) {
                *l -= scale * g;
            }
        }
        self.iteration += 1;

        let mut context_metrics = Vec::with_capacity(num_contexts);
        let mut entropy_sum = 0.0;
        let mut kl_sum = 0.0;
        for (context, rewards) in per_context {
            let probs = self.policy.probs(context)?;
            let ent = crate::metrics::entropy(&probs);
            let kl = kl_exact(&self.policy, &self.reference, context)?;
            entropy_sum += ent;
            kl_sum += kl;
            context_metrics.push(ContextMetrics {
                context,
                count: g,
                reward_mean: rewards.iter().sum::<f64>() / g as f64,
                diversity: None,
                velocity_divergence: None,
                kl_ref: Some(kl),
                entropy: Some(ent),
            });
        }

        let record = MetricsRecord {
            schema: METRICS_SCHEMA.to_string(),
            iteration: self.iteration - 1,
            method: self.cfg.method.name().to_string(),
            reward_mean: reward_sum / (num_contexts * g) as f64,
            diversity: None,
            w2_ref: None,
            velocity_divergence: None,
            kl_ref: Some(kl_sum / num_contexts as f64),
            entropy: Some(entropy_sum / num_contexts as f64),
            beta_tot: BetaStats::from_values(&all_coefs)?,
            per_context: context_metrics,
            wall_clock_ms: started.elapsed().as_secs_f64() * 1e3,
        };
        record.validate()?;
        let (lo, hi) = self.cfg.reg.beta_bounds();
        assert!(
            record.beta_tot.min >= lo && record.beta_tot.max <= hi,
            "beta_tot [{}, {}] escaped [{lo}, {hi}]",
            record.beta_tot.min,
            record.beta_tot.max
        );
        Ok(record)
    }
}

/// Convenience driver: runs `budget` iterations and returns the trajectory
/// together with the final policy.
pub fn run_bandit(
    spec: &BanditSpec,
    cfg: &PgConfig,
    budget: usize,
) -> Result<(Vec<MetricsRecord>, PolicyTable)> {
    let mut trainer = PgTrainer::new(spec.clone(), cfg.clone())?;
    let mut records = Vec::with_capacity(budget);
    for _ in 0..budget {
        records.push(trainer.step()?);
    }
    Ok((records, trainer.policy.clone()))
}
