//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by trainers, samplers and metric computations.
#[derive(Debug, Error)]
pub enum Error {
    /// An input vector had the wrong length for the operation.
    #[error("shape mismatch in {what}: expected {expected}, got {got}")]
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    /// A time argument fell outside the unit interval.
    #[error("time {t} outside [0, 1]")]
    TimeOutOfRange { t: f64 },

    /// An operation that requires samples was handed none.
    #[error("empty batch in {0}")]
    EmptyBatch(&'static str),

    /// A reward group for a context contained no samples.
    #[error("empty reward group for context {context}")]
    EmptyGroup { context: usize },

    /// A context id not covered by the environment.
    #[error("unknown context {context}: environment defines {num_contexts}")]
    UnknownContext { context: usize, num_contexts: usize },

    /// A clipped advantage was outside the configured clip range.
    #[error("clipped advantage {value} outside [{min}, {max}]")]
    AdvantageOutOfRange { value: f64, min: f64, max: f64 },

    /// Gradient or loss became non-finite during training.
    #[error("training diverged at iteration {iteration}: non-finite gradient")]
    Divergence { iteration: usize },

    /// A gradient handed to the optimizer was non-finite.
    #[error("non-finite gradient")]
    NonFiniteGrad,

    /// The ODE sampler produced a non-finite state.
    #[error("sampler diverged at step {step}")]
    SamplerDiverged { step: usize },

    /// Reference pretraining failed to reach the configured transport quality.
    #[error("pretraining failed: final W2 {w2} above threshold {threshold}")]
    PretrainingFailed { w2: f64, threshold: f64 },

    /// A rollout group was too small for normalization.
    #[error("group size {got} below minimum {min}")]
    GroupTooSmall { got: usize, min: usize },

    /// Two point sets that must match in size did not.
    #[error("size mismatch: {left} vs {right}")]
    SizeMismatch { left: usize, right: usize },

    /// A configuration value violated an invariant.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// A checkpoint file was malformed or inconsistent.
    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
