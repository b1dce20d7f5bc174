use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use adrpo_cli::config::{parse_config, ExperimentConfig, ExperimentKind, Method};
use adrpo_cli::runner::{load_run, resolve_out_root, run};
use adrpo_cli::{compare, plot};
use adrpo_core::{pretrain_reference, save_checkpoint, Precision};

#[derive(Parser)]
#[command(
    name = "adrpo",
    version,
    about = "Adaptive divergence regularized policy optimization lab"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a config, printing the fully resolved document.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Pretrain the reference flow for each seed and save checkpoints.
    Pretrain {
        #[arg(long)]
        config: PathBuf,
        /// Output root (defaults to the config's out_dir, then $ADRPO_OUT).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated seed override.
        #[arg(long)]
        seeds: Option<String>,
    },
    /// Execute the experiment: one run per seed, metrics to JSONL.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated seed override.
        #[arg(long)]
        seeds: Option<String>,
        /// Method override (e.g. adrpo, orw-w2-fixed, raft, grpo-fixed).
        #[arg(long)]
        method: Option<String>,
    },
    /// Compare two finished runs: dominance verdicts, final table, SVG.
    Compare {
        run_a: PathBuf,
        run_b: PathBuf,
        /// Directory for compare.svg and compare.txt (default: current dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render one run's trajectory SVG.
    Plot {
        run: PathBuf,
        /// Output file (default: <run>/trajectory.svg).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<u64>()
                .with_context(|| format!("bad seed `{s}`"))
        })
        .collect()
}

fn load_config(
    path: &PathBuf,
    seeds: Option<&String>,
    method: Option<&String>,
) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let mut config = parse_config(&text)?;
    if let Some(seeds) = seeds {
        config.seeds = parse_seeds(seeds)?;
    }
    if let Some(name) = method {
        config.method =
            Method::parse_name(name).with_context(|| format!("unknown method `{name}`"))?;
    }
    config.validate()?;
    Ok(config)
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Validate { config } => {
            let config = load_config(&config, None, None)?;
            print!("{}", config.to_toml());
        }
        Command::Pretrain { config, out, seeds } => {
            let config = load_config(&config, seeds.as_ref(), None)?;
            if config.kind != ExperimentKind::Fm {
                anyhow::bail!("pretrain only applies to flow experiments");
            }
            let root = resolve_out_root(out.as_deref(), &config);
            let dir = root.join(&config.name);
            std::fs::create_dir_all(&dir)?;
            let env = config.env.as_ref().expect("validated");
            let net_section = config.net.as_ref().expect("validated");
            let pretrain_cfg = config.pretrain.as_ref().expect("validated");
            for (index, &seed) in config.seeds.iter().enumerate() {
                let (net, w2) = pretrain_reference(
                    config.target.as_ref().expect("validated"),
                    env.num_contexts(),
                    &net_section.hidden,
                    net_section.activation,
                    pretrain_cfg,
                    seed,
                )?;
                let path = dir.join(format!("reference_{index:02}_seed{seed}.ckpt"));
                save_checkpoint(&net, &path, Precision::F64)?;
                println!(
                    "seed {seed}: W2 {w2:.4} (threshold {:.4}) -> {}",
                    pretrain_cfg.w2_threshold,
                    path.display()
                );
            }
        }
        Command::Run {
            config,
            out,
            seeds,
            method,
        } => {
            let config = load_config(&config, seeds.as_ref(), method.as_ref())?;
            let root = resolve_out_root(out.as_deref(), &config);
            let artifacts = run(&config, &root)?;
            println!(
                "{} [{}] finished: {} seeds, budget {}",
                config.name,
                config.method.name(),
                config.seeds.len(),
                config.budget
            );
            println!(
                "final reward {:.4} +/- {:.4}",
                artifacts.summary.final_reward.mean, artifacts.summary.final_reward.std
            );
            if let Some(d) = artifacts.summary.final_diversity {
                println!("final diversity {:.4} +/- {:.4}", d.mean, d.std);
            }
            if let Some(e) = artifacts.summary.final_entropy {
                println!("final entropy {:.4} +/- {:.4}", e.mean, e.std);
            }
            println!("artifacts in {}", artifacts.run_dir.display());
        }
        Command::Compare { run_a, run_b, out } => {
            let a = load_run(&run_a)?;
            let b = load_run(&run_b)?;
            let outcome = compare(&a, &b)?;
            let out_dir = out.unwrap_or_else(|| PathBuf::from("."));
            std::fs::create_dir_all(&out_dir)?;
            std::fs::write(out_dir.join("compare.txt"), &outcome.report)?;
            std::fs::write(out_dir.join("compare.svg"), &outcome.svg)?;
            print!("{}", outcome.report);
            println!("wrote {}", out_dir.join("compare.svg").display());
        }
        Command::Plot { run, out } => {
            let loaded = load_run(&run)?;
            let svg = plot(&loaded)?;
            let out_path = out.unwrap_or_else(|| run.join("trajectory.svg"));
            std::fs::write(&out_path, svg)?;
            println!("wrote {}", out_path.display());
        }
    }
    Ok(())
}
