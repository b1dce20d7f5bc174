//! Desk-scale laboratory for adaptive divergence regularized policy
//! optimization (ADRPO).
//!
//! The crate trains two families of policies against synthetic rewards:
//!
//! * a conditional flow-matching model over 2-D points, fine-tuned online
//!   with advantage-weighted regression and an adaptive Wasserstein-style
//!   velocity regularizer ([`fm`]);
//! * a tabular softmax policy on contextual bandits, fine-tuned with a
//!   clipped policy gradient and an adaptive KL penalty ([`pg`]).
//!
//! Both share the same mechanism: the regularization coefficient
//! `beta_tot = beta0 - A_clipped` shrinks for high-advantage samples and
//! grows for low-advantage ones ([`advantage`]). Fixed-coefficient baselines
//! fall out as the `A = 0` special case.

pub mod advantage;
pub mod env;
pub mod error;
pub mod flow;
pub mod fm;
pub mod metrics;
pub mod net;
pub mod pg;

pub use advantage::{advantages, baseline, AdaptiveRegConfig, RewardedSample};
pub use env::{RewardEnv, TargetDist};
pub use error::{Error, Result};
pub use flow::{cfm_loss, make_path, sample, FlowPath, SamplerConfig, SamplerScheme};
pub use fm::{
    adrpo_fm_loss, orw_w2_loss, pretrain_reference, raft_loss, FmBatchSample, FmConfig, FmMethod,
    FmTrainer, PretrainConfig,
};
pub use metrics::{
    diversity, dominance, entropy, pareto_trajectory, velocity_divergence, w2_empirical, BetaStats,
    DominanceVerdict, MetricsRecord, Probe, TradeoffAxis, METRICS_SCHEMA,
};
pub use net::{
    load_checkpoint, load_checkpoint_expecting, param_count, save_checkpoint, sgd_step, Activation,
    ForwardCache, GradBuffer, Optimizer, OptimizerKind, ParamNet, Precision,
};
pub use pg::{
    adrpo_grpo_loss, grpo_advantage, kl_exact, pg_loss, run_bandit, BanditSpec, GroupRollout,
    PgConfig, PgMethod, PgTrainer, PolicyTable,
};

/// One-hot context embedding of width `len`.
pub fn one_hot(index: usize, len: usize) -> Result<Vec<f64>> {
    if index >= len {
        return Err(Error::UnknownContext {
            context: index,
            num_contexts: len,
        });
    }
    let mut v = vec![0.0; len];
    v[index] = 1.0;
    Ok(v)
}
