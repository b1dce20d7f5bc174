//! Seeded multi-run execution and on-disk artifacts.
//!
//! One run directory per experiment: the resolved config snapshot, one
//! metrics JSONL stream per seed (flushed every iteration), checkpoints in
//! the binary net format, and a JSON summary recomputable from the JSONL
//! files alone. A failed sub-run leaves its partial artifacts plus a FAILED
//! marker file.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use adrpo_core::{
    pretrain_reference, save_checkpoint, FmConfig, FmTrainer, MetricsRecord, PgConfig, PgTrainer,
    Precision,
};

use crate::config::{ExperimentConfig, ExperimentKind};

/// Environment variable naming the default output root.
pub const OUT_ENV_VAR: &str = "ADRPO_OUT";

/// Artifacts of one seed's run.
#[derive(Debug, Clone)]
pub struct SeedArtifacts {
    pub seed: u64,
    pub metrics_path: PathBuf,
    pub checkpoint_paths: Vec<PathBuf>,
    pub final_record: MetricsRecord,
    /// Final per-context action probabilities (bandit runs only).
    pub final_policy: Option<Vec<Vec<f64>>>,
}

/// Everything a finished experiment leaves on disk.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub run_dir: PathBuf,
    pub config_path: PathBuf,
    pub summary_path: PathBuf,
    pub seed_runs: Vec<SeedArtifacts>,
    pub summary: RunSummary,
}

/// Mean and population standard deviation across seeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn from_values(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Self {
            mean,
            std: var.sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub final_reward: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub final_diversity: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub final_w2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub final_entropy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub final_kl: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub final_policy: Option<Vec<Vec<f64>>>,
}

/// Final-checkpoint statistics across seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub name: String,
    pub kind: String,
    pub method: String,
    pub seeds: Vec<u64>,
    pub budget: usize,
    pub final_reward: Stat,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub final_diversity: Option<Stat>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub final_w2: Option<Stat>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub final_entropy: Option<Stat>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub final_kl: Option<Stat>,
    pub per_seed: Vec<SeedSummary>,
}

/// Output root resolution: explicit flag, then the config, then `ADRPO_OUT`,
/// then `./adrpo-runs`.
pub fn resolve_out_root(flag: Option<&Path>, config: &ExperimentConfig) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Some(p) = &config.out_dir {
        return PathBuf::from(p);
    }
    if let Ok(p) = std::env::var(OUT_ENV_VAR) {
        if !p.is_empty() {
            return PathBuf::from(p);
        }
    }
    PathBuf::from("adrpo-runs")
}

fn metrics_file_name(index: usize, seed: u64) -> String {
    format!("metrics_{index:02}_seed{seed}.jsonl")
}

/// Executes every seed of the experiment sequentially and writes artifacts
/// under `<out_root>/<name>`.
pub fn run(config: &ExperimentConfig, out_root: &Path) -> Result<RunArtifacts> {
    config
        .validate()
        .with_context(|| "config failed validation")?;
    let run_dir = out_root.join(&config.name);
    std::fs::create_dir_all(&run_dir).with_context(|| format!("creating {}", run_dir.display()))?;

    let config_path = run_dir.join("config.toml");
    std::fs::write(&config_path, config.to_toml())?;

    let mut seed_runs = Vec::with_capacity(config.seeds.len());
    for (index, &seed) in config.seeds.iter().enumerate() {
        match run_one_seed(config, &run_dir, index, seed) {
            Ok(artifacts) => seed_runs.push(artifacts),
            Err(err) => {
                let marker = run_dir.join("FAILED");
                let _ = std::fs::write(
                    &marker,
                    format!("seed {seed} (run {index:02}) failed: {err:#}\n"),
                );
                return Err(err.context(format!(
                    "seed {seed} failed; marker at {}",
                    marker.display()
                )));
            }
        }
    }

    let summary = summarize(config, &seed_runs);
    let summary_path = run_dir.join("summary.json");
    std::fs::write(&summary_path, serde_json::to_string_pretty(&summary)?)?;

    Ok(RunArtifacts {
        run_dir,
        config_path,
        summary_path,
        seed_runs,
        summary,
    })
}

fn run_one_seed(
    config: &ExperimentConfig,
    run_dir: &Path,
    index: usize,
    seed: u64,
) -> Result<SeedArtifacts> {
    let metrics_path = run_dir.join(metrics_file_name(index, seed));
    let file = File::create(&metrics_path)
        .with_context(|| format!("creating {}", metrics_path.display()))?;
    let mut writer = BufWriter::new(file);
    let mut checkpoint_paths = Vec::new();
    let mut last_record: Option<MetricsRecord> = None;
    let mut final_policy = None;

    match config.kind {
        ExperimentKind::Fm => {
            let env = config.env.clone().expect("validated");
            let target = config.target.clone().expect("validated");
            let net_section = config.net.clone().expect("validated");
            let pretrain_cfg = config.pretrain.clone().expect("validated");
            let (reference, _) = pretrain_reference(
                &target,
                env.num_contexts(),
                &net_section.hidden,
                net_section.activation,
                &pretrain_cfg,
                seed,
            )?;
            let fm_cfg = FmConfig {
                method: config.method.as_fm().expect("validated"),
                reg: config.reg,
                batch_size: config.optim.batch_size.expect("validated"),
                lr: config.optim.lr,
                optimizer: config.optim.optimizer.expect("validated"),
                sampler: config.sampler.expect("validated"),
                seed,
                probe_count: config.probe_count.expect("validated"),
                force_zero_coef_advantage: false,
            };
            let mut trainer = FmTrainer::new(env, reference, fm_cfg)?;
            for iter in 0..config.budget {
                let record = trainer.step()?;
                writer.write_all(record.to_jsonl().as_bytes())?;
                writer.flush()?;
                if config.checkpoint_every > 0 && (iter + 1) % config.checkpoint_every == 0 {
                    let path = run_dir.join(format!(
                        "checkpoint_{index:02}_seed{seed}_iter{:06}.ckpt",
                        iter + 1
                    ));
                    save_checkpoint(trainer.net(), &path, Precision::F64)?;
                    checkpoint_paths.push(path);
                }
                last_record = Some(record);
            }
            let final_path = run_dir.join(format!("checkpoint_{index:02}_seed{seed}_final.ckpt"));
            save_checkpoint(trainer.net(), &final_path, Precision::F64)?;
            checkpoint_paths.push(final_path);
        }
        ExperimentKind::Pg => {
            let bandit = config.bandit.clone().expect("validated");
            let pg_cfg = PgConfig {
                method: config.method.as_pg().expect("validated"),
                reg: config.reg,
                clip_eps: config.optim.clip_eps.expect("validated"),
                group_size: config.optim.group_size.expect("validated"),
                lr: config.optim.lr,
                seed,
                force_zero_coef_advantage: false,
            };
            let mut trainer = PgTrainer::new(bandit, pg_cfg)?;
            for _ in 0..config.budget {
                let record = trainer.step()?;
                writer.write_all(record.to_jsonl().as_bytes())?;
                writer.flush()?;
                last_record = Some(record);
            }
            let probs: Vec<Vec<f64>> = (0..trainer.policy().num_contexts())
                .map(|c| trainer.policy().probs(c))
                .collect::<adrpo_core::Result<_>>()?;
            final_policy = Some(probs);
        }
    }

    let final_record = last_record.expect("budget >= 1");
    Ok(SeedArtifacts {
        seed,
        metrics_path,
        checkpoint_paths,
        final_record,
        final_policy,
    })
}

fn summarize(config: &ExperimentConfig, seed_runs: &[SeedArtifacts]) -> RunSummary {
    let rewards: Vec<f64> = seed_runs
        .iter()
        .map(|s| s.final_record.reward_mean)
        .collect();
    let collect = |f: fn(&MetricsRecord) -> Option<f64>| -> Option<Stat> {
        let vals: Vec<f64> = seed_runs
            .iter()
            .filter_map(|s| f(&s.final_record))
            .collect();
        if vals.len() == seed_runs.len() {
            Some(Stat::from_values(&vals))
        } else {
            None
        }
    };
    RunSummary {
        name: config.name.clone(),
        kind: match config.kind {
            ExperimentKind::Fm => "fm".into(),
            ExperimentKind::Pg => "pg".into(),
        },
        method: config.method.name().into(),
        seeds: config.seeds.clone(),
        budget: config.budget,
        final_reward: Stat::from_values(&rewards),
        final_diversity: collect(|r| r.diversity),
        final_w2: collect(|r| r.w2_ref),
        final_entropy: collect(|r| r.entropy),
        final_kl: collect(|r| r.kl_ref),
        per_seed: seed_runs
            .iter()
            .map(|s| SeedSummary {
                seed: s.seed,
                final_reward: s.final_record.reward_mean,
                final_diversity: s.final_record.diversity,
                final_w2: s.final_record.w2_ref,
                final_entropy: s.final_record.entropy,
                final_kl: s.final_record.kl_ref,
                final_policy: s.final_policy.clone(),
            })
            .collect(),
    }
}

/// A run directory loaded back from disk.
#[derive(Debug, Clone)]
pub struct LoadedRun {
    pub run_dir: PathBuf,
    pub config: ExperimentConfig,
    /// `(seed, records)` per metrics file, in file order.
    pub seeds: Vec<(u64, Vec<MetricsRecord>)>,
}

/// Reads config and metrics streams back; an empty metrics file is an error
/// naming the file.
pub fn load_run(run_dir: &Path) -> Result<LoadedRun> {
    let config_path = run_dir.join("config.toml");
    let text = std::fs::read_to_string(&config_path)
        .with_context(|| format!("reading {}", config_path.display()))?;
    let config = crate::config::parse_config(&text)?;

    let mut metric_files: Vec<PathBuf> = std::fs::read_dir(run_dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .map(|n| n.starts_with("metrics_") && n.ends_with(".jsonl"))
                .unwrap_or(false)
        })
        .collect();
    metric_files.sort();
    if metric_files.is_empty() {
        bail!("no metrics files in {}", run_dir.display());
    }

    let mut seeds = Vec::with_capacity(metric_files.len());
    for path in metric_files {
        let contents = std::fs::read_to_string(&path)?;
        let records: Vec<MetricsRecord> = contents
            .lines()
            .map(MetricsRecord::from_jsonl)
            .collect::<adrpo_core::Result<_>>()
            .with_context(|| format!("parsing {}", path.display()))?;
        if records.is_empty() {
            bail!("empty metrics file: {}", path.display());
        }
        let seed = path
            .file_stem()
            .and_then(|n| n.to_str())
            .and_then(|n| n.rsplit("seed").next())
            .and_then(|s| s.parse::<u64>().ok())
            .with_context(|| format!("cannot parse seed from {}", path.display()))?;
        seeds.push((seed, records));
    }
    Ok(LoadedRun {
        run_dir: run_dir.to_path_buf(),
        config,
        seeds,
    })
}
