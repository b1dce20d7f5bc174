//! Comparison reports: per-seed dominance verdicts, final-metric tables,
//! and trajectory SVGs.

use anyhow::{bail, Result};

use adrpo_core::{dominance, pareto_trajectory, DominanceVerdict, TradeoffAxis};

use crate::config::ExperimentKind;
use crate::runner::{LoadedRun, Stat};
use crate::svg::{trajectory_svg, TrajectorySeries};

const COLOR_A: (u8, u8, u8) = (31, 119, 180);
const COLOR_B: (u8, u8, u8) = (214, 39, 40);

fn axis_for(kind: ExperimentKind) -> (TradeoffAxis, &'static str) {
    match kind {
        ExperimentKind::Fm => (
            TradeoffAxis::Diversity,
            "diversity (mean pairwise distance)",
        ),
        ExperimentKind::Pg => (TradeoffAxis::Entropy, "entropy (nats)"),
    }
}

fn verdict_text(v: DominanceVerdict, a: &str, b: &str) -> String {
    match v {
        DominanceVerdict::FirstDominates => format!("{a} dominates"),
        DominanceVerdict::SecondDominates => format!("{b} dominates"),
        DominanceVerdict::Tied => "tied".into(),
        DominanceVerdict::Incomparable => "incomparable".into(),
    }
}

/// Everything `compare` produces.
#[derive(Debug, Clone)]
pub struct CompareOutcome {
    pub verdicts: Vec<(u64, DominanceVerdict)>,
    pub report: String,
    pub svg: String,
}

fn series_for_run(
    run: &LoadedRun,
    axis: TradeoffAxis,
    color: (u8, u8, u8),
    tag: &str,
) -> Result<Vec<TrajectorySeries>> {
    run.seeds
        .iter()
        .map(|(seed, records)| {
            let traj = pareto_trajectory(records, axis)?;
            Ok(TrajectorySeries {
                label: format!("{tag} {} seed {seed}", run.config.method.name()),
                rgb: color,
                // x = secondary metric, y = reward.
                points: traj
                    .into_iter()
                    .map(|(reward, sec)| (sec, reward))
                    .collect(),
            })
        })
        .collect()
}

fn final_stats(run: &LoadedRun, axis: TradeoffAxis) -> Result<(Stat, Stat)> {
    let mut rewards = Vec::new();
    let mut secondary = Vec::new();
    for (_, records) in &run.seeds {
        let traj = pareto_trajectory(records, axis)?;
        let &(reward, sec) = traj.last().expect("nonempty records");
        rewards.push(reward);
        secondary.push(sec);
    }
    Ok((Stat::from_values(&rewards), Stat::from_values(&secondary)))
}

/// Compares two runs of the same kind seed-by-seed (paired by file order).
pub fn compare(a: &LoadedRun, b: &LoadedRun) -> Result<CompareOutcome> {
    if a.config.kind != b.config.kind {
        bail!(
            "experiment kind mismatch: {} is {:?}, {} is {:?}",
            a.run_dir.display(),
            a.config.kind,
            b.run_dir.display(),
            b.config.kind
        );
    }
    let (axis, axis_label) = axis_for(a.config.kind);
    let name_a = format!("run A ({})", a.config.method.name());
    let name_b = format!("run B ({})", b.config.method.name());

    let mut verdicts = Vec::new();
    let mut lines = Vec::new();
    lines.push(format!(
        "compare: {} vs {}",
        a.run_dir.display(),
        b.run_dir.display()
    ));
    lines.push(String::new());
    lines.push("per-seed dominance at final checkpoint (reward, secondary):".into());
    for ((seed_a, rec_a), (seed_b, rec_b)) in a.seeds.iter().zip(&b.seeds) {
        let fa = *pareto_trajectory(rec_a, axis)?.last().expect("nonempty");
        let fb = *pareto_trajectory(rec_b, axis)?.last().expect("nonempty");
        let v = dominance(fa, fb);
        lines.push(format!(
            "  seed {seed_a}/{seed_b}: A = ({:.4}, {:.4}), B = ({:.4}, {:.4}) -> {}",
            fa.0,
            fa.1,
            fb.0,
            fb.1,
            verdict_text(v, &name_a, &name_b)
        ));
        verdicts.push((*seed_a, v));
    }

    let (ra, sa) = final_stats(a, axis)?;
    let (rb, sb) = final_stats(b, axis)?;
    lines.push(String::new());
    lines.push(format!("final means +/- stddev over seeds ({axis_label}):"));
    lines.push(format!(
        "  {:<22} {:>10} {:>10}   {:>10} {:>10}",
        "method", "reward", "+/-", "secondary", "+/-"
    ));
    lines.push(format!(
        "  {:<22} {:>10.4} {:>10.4}   {:>10.4} {:>10.4}",
        name_a, ra.mean, ra.std, sa.mean, sa.std
    ));
    lines.push(format!(
        "  {:<22} {:>10.4} {:>10.4}   {:>10.4} {:>10.4}",
        name_b, rb.mean, rb.std, sb.mean, sb.std
    ));

    let mut series = series_for_run(a, axis, COLOR_A, "A")?;
    series.extend(series_for_run(b, axis, COLOR_B, "B")?);
    let svg = trajectory_svg(
        &format!(
            "{} vs {} ({})",
            a.config.method.name(),
            b.config.method.name(),
            a.config.name
        ),
        axis_label,
        "reward",
        &series,
    );

    Ok(CompareOutcome {
        verdicts,
        report: lines.join("\n") + "\n",
        svg,
    })
}

/// Renders a single run's trajectories.
pub fn plot(run: &LoadedRun) -> Result<String> {
    let (axis, axis_label) = axis_for(run.config.kind);
    let series = series_for_run(run, axis, COLOR_A, "")?;
    Ok(trajectory_svg(
        &format!("{} ({})", run.config.method.name(), run.config.name),
        axis_label,
        "reward",
        &series,
    ))
}
