//! Experiment configuration: TOML parsing, defaults, and validation.
//!
//! A parsed config is fully materialized: serializing it and parsing the
//! result is the identity. Unknown keys anywhere in the document are
//! rejected.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use adrpo_core::env::{MixtureComponent, MixtureSpec};
use adrpo_core::{
    Activation, AdaptiveRegConfig, BanditSpec, FmMethod, OptimizerKind, PgMethod, PretrainConfig,
    RewardEnv, SamplerConfig, TargetDist,
};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config field `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
}

pub type ConfigResult<T> = std::result::Result<T, ConfigError>;

fn invalid(field: &'static str, reason: impl ToString) -> ConfigError {
    ConfigError::Invalid {
        field,
        reason: reason.to_string(),
    }
}

/// Experiment family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Fm,
    Pg,
}

/// Method selector spanning both experiment kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Adrpo,
    OrwW2Fixed,
    Raft,
    AdvFixedBeta,
    AdrpoGrpo,
    GrpoFixed,
}

impl Method {
    pub fn parse_name(name: &str) -> Option<Method> {
        match name {
            "adrpo" => Some(Method::Adrpo),
            "orw-w2-fixed" => Some(Method::OrwW2Fixed),
            "raft" => Some(Method::Raft),
            "adv-fixed-beta" => Some(Method::AdvFixedBeta),
            "adrpo-grpo" => Some(Method::AdrpoGrpo),
            "grpo-fixed" => Some(Method::GrpoFixed),
            _ => None,
        }
    }

    pub fn as_fm(self) -> Option<FmMethod> {
        match self {
            Method::Adrpo => Some(FmMethod::Adrpo),
            Method::OrwW2Fixed => Some(FmMethod::OrwW2Fixed),
            Method::Raft => Some(FmMethod::Raft),
            Method::AdvFixedBeta => Some(FmMethod::AdvFixedBeta),
            _ => None,
        }
    }

    pub fn as_pg(self) -> Option<PgMethod> {
        match self {
            Method::AdrpoGrpo => Some(PgMethod::AdrpoGrpo),
            Method::GrpoFixed => Some(PgMethod::GrpoFixed),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Adrpo => "adrpo",
            Method::OrwW2Fixed => "orw-w2-fixed",
            Method::Raft => "raft",
            Method::AdvFixedBeta => "adv-fixed-beta",
            Method::AdrpoGrpo => "adrpo-grpo",
            Method::GrpoFixed => "grpo-fixed",
        }
    }
}

/// Velocity network architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetSection {
    pub hidden: Vec<usize>,
    pub activation: Activation,
}

impl Default for NetSection {
    fn default() -> Self {
        Self {
            hidden: vec![32, 32],
            activation: Activation::Tanh,
        }
    }
}

/// Optimization settings; `batch_size`/`optimizer` apply to flow runs,
/// `group_size`/`clip_eps` to bandit runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimSection {
    pub lr: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub batch_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub optimizer: Option<OptimizerKind>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub group_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub clip_eps: Option<f64>,
}

/// Fully resolved experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub name: String,
    pub method: Method,
    pub seeds: Vec<u64>,
    pub budget: usize,
    pub checkpoint_every: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub out_dir: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub probe_count: Option<usize>,
    pub reg: AdaptiveRegConfig,
    pub optim: OptimSection,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub env: Option<RewardEnv>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub target: Option<TargetDist>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub net: Option<NetSection>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sampler: Option<SamplerConfig>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub pretrain: Option<PretrainConfig>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub bandit: Option<BanditSpec>,
}

/// Raw document: everything optional except the kind, defaults filled by
/// `resolve`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    kind: ExperimentKind,
    name: Option<String>,
    method: Option<Method>,
    seeds: Option<Vec<u64>>,
    budget: Option<usize>,
    checkpoint_every: Option<usize>,
    out_dir: Option<String>,
    probe_count: Option<usize>,
    reg: Option<AdaptiveRegConfig>,
    optim: Option<RawOptim>,
    env: Option<RewardEnv>,
    target: Option<TargetDist>,
    net: Option<NetSection>,
    sampler: Option<SamplerConfig>,
    pretrain: Option<PretrainConfig>,
    bandit: Option<BanditSpec>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOptim {
    lr: Option<f64>,
    batch_size: Option<usize>,
    optimizer: Option<OptimizerKind>,
    group_size: Option<usize>,
    clip_eps: Option<f64>,
}

/// The standard two-mode reference target used when a flow config does not
/// name one.
pub fn default_two_mode_target() -> TargetDist {
    TargetDist::Mixture(MixtureSpec {
        components: vec![
            MixtureComponent {
                weight: 1.0,
                mean: [-1.2, 0.0],
                sigma: 0.4,
            },
            MixtureComponent {
                weight: 1.0,
                mean: [1.2, 0.0],
                sigma: 0.4,
            },
        ],
    })
}

impl RawConfig {
    fn resolve(self) -> ConfigResult<ExperimentConfig> {
        let kind = self.kind;
        let raw_optim = self.optim.unwrap_or_default();
        let cfg = match kind {
            ExperimentKind::Fm => ExperimentConfig {
                kind,
                name: self.name.unwrap_or_else(|| "experiment".into()),
                method: self.method.unwrap_or(Method::Adrpo),
                seeds: self.seeds.unwrap_or_else(|| vec![0]),
                budget: self.budget.unwrap_or(400),
                checkpoint_every: self.checkpoint_every.unwrap_or(0),
                out_dir: self.out_dir,
                probe_count: Some(self.probe_count.unwrap_or(256)),
                reg: self.reg.unwrap_or_else(AdaptiveRegConfig::fm_default),
                optim: OptimSection {
                    lr: raw_optim.lr.unwrap_or(0.05),
                    batch_size: Some(raw_optim.batch_size.unwrap_or(64)),
                    optimizer: Some(raw_optim.optimizer.unwrap_or(OptimizerKind::Sgd)),
                    group_size: None,
                    clip_eps: None,
                },
                env: self.env,
                target: Some(self.target.unwrap_or_else(default_two_mode_target)),
                net: Some(self.net.unwrap_or_default()),
                sampler: Some(self.sampler.unwrap_or_default()),
                pretrain: Some(self.pretrain.unwrap_or_default()),
                bandit: self.bandit,
            },
            ExperimentKind::Pg => ExperimentConfig {
                kind,
                name: self.name.unwrap_or_else(|| "experiment".into()),
                method: self.method.unwrap_or(Method::AdrpoGrpo),
                seeds: self.seeds.unwrap_or_else(|| vec![0]),
                budget: self.budget.unwrap_or(3000),
                checkpoint_every: self.checkpoint_every.unwrap_or(0),
                out_dir: self.out_dir,
                probe_count: self.probe_count,
                reg: self.reg.unwrap_or_else(AdaptiveRegConfig::pg_default),
                optim: OptimSection {
                    lr: raw_optim.lr.unwrap_or(2.5),
                    batch_size: None,
                    optimizer: None,
                    group_size: Some(raw_optim.group_size.unwrap_or(8)),
                    clip_eps: Some(raw_optim.clip_eps.unwrap_or(0.2)),
                },
                env: self.env,
                target: self.target,
                net: self.net,
                sampler: self.sampler,
                pretrain: self.pretrain,
                bandit: Some(self.bandit.unwrap_or_else(BanditSpec::deceptive)),
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> ConfigResult<()> {
        if self.seeds.is_empty() {
            return Err(invalid("seeds", "at least one seed is required"));
        }
        if self.budget < 1 {
            return Err(invalid("budget", "must be >= 1"));
        }
        self.reg.validate().map_err(|e| invalid("reg", e))?;
        if !(self.optim.lr >= 0.0 && self.optim.lr.is_finite()) {
            return Err(invalid("optim.lr", "must be nonnegative and finite"));
        }
        match self.kind {
            ExperimentKind::Fm => {
                if self.method.as_fm().is_none() {
                    return Err(invalid(
                        "method",
                        format!("`{}` is not a flow-matching method", self.method.name()),
                    ));
                }
                let env = self
                    .env
                    .as_ref()
                    .ok_or_else(|| invalid("env", "flow experiments need a reward env"))?;
                env.validate().map_err(|e| invalid("env", e))?;
                let target = self
                    .target
                    .as_ref()
                    .ok_or_else(|| invalid("target", "missing"))?;
                target.validate().map_err(|e| invalid("target", e))?;
                let net = self.net.as_ref().ok_or_else(|| invalid("net", "missing"))?;
                if net.hidden.contains(&0) {
                    return Err(invalid("net.hidden", "layer widths must be positive"));
                }
                let sampler = self
                    .sampler
                    .as_ref()
                    .ok_or_else(|| invalid("sampler", "missing"))?;
                sampler.validate().map_err(|e| invalid("sampler", e))?;
                let pretrain = self
                    .pretrain
                    .as_ref()
                    .ok_or_else(|| invalid("pretrain", "missing"))?;
                pretrain
                    .sampler
                    .validate()
                    .map_err(|e| invalid("pretrain.sampler", e))?;
                if pretrain.batch_size == 0 {
                    return Err(invalid("pretrain.batch_size", "must be >= 1"));
                }
                let batch = self
                    .optim
                    .batch_size
                    .ok_or_else(|| invalid("optim.batch_size", "missing"))?;
                if batch < 2 {
                    return Err(invalid("optim.batch_size", "must be >= 2"));
                }
                if self.probe_count == Some(0) {
                    return Err(invalid("probe_count", "must be >= 1"));
                }
                if self.bandit.is_some() {
                    return Err(invalid("bandit", "not applicable to flow experiments"));
                }
            }
            ExperimentKind::Pg => {
                if self.method.as_pg().is_none() {
                    return Err(invalid(
                        "method",
                        format!("`{}` is not a policy-gradient method", self.method.name()),
                    ));
                }
                let bandit = self
                    .bandit
                    .as_ref()
                    .ok_or_else(|| invalid("bandit", "missing"))?;
                bandit.validate().map_err(|e| invalid("bandit", e))?;
                let group = self
                    .optim
                    .group_size
                    .ok_or_else(|| invalid("optim.group_size", "missing"))?;
                if group < 2 {
                    return Err(invalid("optim.group_size", "must be >= 2"));
                }
                let eps = self
                    .optim
                    .clip_eps
                    .ok_or_else(|| invalid("optim.clip_eps", "missing"))?;
                if !(eps > 0.0 && eps < 1.0) {
                    return Err(invalid("optim.clip_eps", "must lie in (0, 1)"));
                }
                for (field, present) in [
                    ("env", self.env.is_some()),
                    ("target", self.target.is_some()),
                    ("net", self.net.is_some()),
                    ("sampler", self.sampler.is_some()),
                    ("pretrain", self.pretrain.is_some()),
                ] {
                    if present {
                        return Err(ConfigError::Invalid {
                            field: "kind",
                            reason: format!("`{field}` is not applicable to bandit experiments"),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// Parses and validates a TOML experiment config.
pub fn parse_config(bytes: &str) -> ConfigResult<ExperimentConfig> {
    let raw: RawConfig = toml::from_str(bytes)?;
    raw.resolve()
}

#[cfg(test)]
mod tests {
    use super::*;

    const MIN_FM: &str = r#"
kind = "fm"

[env.region]
centers = [[-1.2, 0.0]]
"#;

    #[test]
    fn minimal_fm_fills_defaults() {
        let cfg = parse_config(MIN_FM).unwrap();
        assert_eq!(cfg.kind, ExperimentKind::Fm);
        assert_eq!(cfg.method, Method::Adrpo);
        assert_eq!(cfg.reg.beta0, 1.0);
        assert_eq!(cfg.reg.a_min, -1.0);
        assert_eq!(cfg.reg.a_max, 1.0);
        assert_eq!(cfg.seeds, vec![0]);
        assert_eq!(cfg.budget, 400);
        assert_eq!(cfg.optim.batch_size, Some(64));
        assert_eq!(cfg.sampler.unwrap().num_steps, 64);
        assert!(cfg.target.is_some());
        assert_eq!(cfg.probe_count, Some(256));
    }

    #[test]
    fn minimal_pg_fills_defaults() {
        let cfg = parse_config("kind = \"pg\"\n").unwrap();
        assert_eq!(cfg.method, Method::AdrpoGrpo);
        assert_eq!(cfg.reg.beta0, 0.04);
        assert_eq!(cfg.reg.a_min, -0.04);
        assert_eq!(cfg.reg.a_max, 0.04);
        assert_eq!(cfg.optim.clip_eps, Some(0.2));
        assert_eq!(cfg.optim.group_size, Some(8));
        assert!(cfg.bandit.is_some());
    }

    #[test]
    fn unknown_key_names_the_typo() {
        let text = format!("{MIN_FM}\n[reg]\nbetaO = 1.0\n");
        let err = parse_config(&text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("betaO"), "message was: {msg}");
    }

    #[test]
    fn inverted_clip_range_rejected() {
        let text = format!("{MIN_FM}\n[reg]\nbeta0 = 1.0\na_min = 1.0\na_max = -1.0\n");
        let err = parse_config(&text).unwrap_err();
        assert!(err.to_string().contains("a_min"), "{err}");
    }

    #[test]
    fn fm_method_mismatch_rejected() {
        let err = parse_config(
            "kind = \"fm\"\nmethod = \"adrpo-grpo\"\n\n[env.region]\ncenters = [[0.0, 0.0]]\n",
        )
        .unwrap_err();
        assert!(err.to_string().contains("method"), "{err}");
    }

    #[test]
    fn roundtrip_is_idempotent() {
        let cfg = parse_config(MIN_FM).unwrap();
        let text = cfg.to_toml();
        let again = parse_config(&text).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(text, again.to_toml());

        let pg = parse_config("kind = \"pg\"\nseeds = [3, 4]\n").unwrap();
        let text = pg.to_toml();
        let again = parse_config(&text).unwrap();
        assert_eq!(pg, again);
    }

    #[test]
    fn ring_target_parses() {
        let cfg = parse_config(
            "kind = \"fm\"\n\n[env.target-point]\ncenters = [[0.0, 0.0]]\n\n[target.ring]\nradius = 2.0\nsigma = 0.1\n",
        )
        .unwrap();
        match cfg.target.unwrap() {
            adrpo_core::TargetDist::Ring(r) => {
                assert_eq!(r.radius, 2.0);
                assert_eq!(r.sigma, 0.1);
            }
            other => panic!("unexpected target {other:?}"),
        }
    }

    #[test]
    fn missing_env_is_named() {
        let err = parse_config("kind = \"fm\"\n").unwrap_err();
        assert!(err.to_string().contains("env"), "{err}");
    }

    #[test]
    fn empty_seeds_rejected() {
        let err =
            parse_config("kind = \"fm\"\nseeds = []\n\n[env.region]\ncenters = [[0.0, 0.0]]\n")
                .unwrap_err();
        assert!(err.to_string().contains("seeds"), "{err}");
    }

    #[test]
    fn parse_error_reports_location() {
        let err = parse_config("kind = fm\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line"), "{msg}");
    }
}
