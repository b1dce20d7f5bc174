//! Acceptance suite: one test per criterion, each printing a PASS line with
//! the measured numbers (visible with `--nocapture`). The two long-running
//! experiments are shared between criteria through `OnceLock` fixtures.

use std::sync::OnceLock;
use std::time::{Duration, Instant};

use adrpo_cli::config::parse_config;
use adrpo_cli::runner;
use adrpo_core::env::{MixtureComponent, MixtureSpec, RegionEnv};
use adrpo_core::{
    adrpo_fm_loss, adrpo_grpo_loss, cfm_loss, dominance, make_path, pg_loss, pretrain_reference,
    w2_empirical, Activation, AdaptiveRegConfig, BanditSpec, DominanceVerdict, FlowPath,
    FmBatchSample, FmConfig, FmMethod, FmTrainer, GroupRollout, MetricsRecord, OptimizerKind,
    ParamNet, PgConfig, PgMethod, PgTrainer, PolicyTable, RewardEnv, SamplerConfig, TargetDist,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const PAIRED_SEEDS: u64 = 10;

// ---------------------------------------------------------------------------
// Shared fixtures
// ---------------------------------------------------------------------------

fn two_mode_target() -> TargetDist {
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

fn region_env() -> RewardEnv {
    RewardEnv::Region(RegionEnv {
        centers: vec![[-1.2, 0.0]],
        radius: 1.0,
        noise_sigma: 0.1,
    })
}

fn region_pretrain() -> adrpo_core::PretrainConfig {
    adrpo_core::PretrainConfig {
        steps: 6000,
        batch_size: 128,
        lr: 0.01,
        optimizer: OptimizerKind::Adam,
        w2_threshold: 0.7,
        eval_samples: 256,
        sampler: SamplerConfig {
            num_steps: 32,
            ..SamplerConfig::default()
        },
    }
}

fn region_trainer_config(method: FmMethod, seed: u64) -> FmConfig {
    FmConfig {
        method,
        reg: AdaptiveRegConfig::fm_default(),
        batch_size: 64,
        lr: 0.05,
        optimizer: OptimizerKind::Sgd,
        sampler: SamplerConfig {
            num_steps: 32,
            ..SamplerConfig::default()
        },
        seed,
        probe_count: 64,
        force_zero_coef_advantage: false,
    }
}

struct MethodFinal {
    reward: f64,
    diversity: f64,
}

struct RegionSeed {
    adrpo: MethodFinal,
    orw: MethodFinal,
    raft: MethodFinal,
}

struct RegionOutcome {
    seeds: Vec<RegionSeed>,
    records: Vec<MetricsRecord>,
    elapsed: Duration,
}

const REGION_BUDGET: usize = 600;

fn run_region_method(
    env: &RewardEnv,
    reference: ParamNet,
    method: FmMethod,
    seed: u64,
    records: &mut Vec<MetricsRecord>,
) -> MethodFinal {
    let cfg = region_trainer_config(method, seed);
    let mut trainer = FmTrainer::new(env.clone(), reference, cfg).expect("trainer");
    let mut last = None;
    for _ in 0..REGION_BUDGET {
        let record = trainer.step().expect("step");
        last = Some((record.reward_mean, record.diversity.expect("fm diversity")));
        records.push(record);
    }
    let (reward, diversity) = last.expect("budget > 0");
    MethodFinal { reward, diversity }
}

fn region_experiment() -> &'static RegionOutcome {
    static CELL: OnceLock<RegionOutcome> = OnceLock::new();
    CELL.get_or_init(|| {
        let started = Instant::now();
        let env = region_env();
        let target = two_mode_target();
        let pre = region_pretrain();
        let mut seeds = Vec::new();
        let mut records = Vec::new();
        for seed in 0..PAIRED_SEEDS {
            let (reference, _) =
                pretrain_reference(&target, 1, &[32, 32], Activation::Tanh, &pre, seed)
                    .expect("pretraining");
            let adrpo =
                run_region_method(&env, reference.clone(), FmMethod::Adrpo, seed, &mut records);
            let orw = run_region_method(
                &env,
                reference.clone(),
                FmMethod::OrwW2Fixed,
                seed,
                &mut records,
            );
            let raft = run_region_method(&env, reference, FmMethod::Raft, seed, &mut records);
            seeds.push(RegionSeed { adrpo, orw, raft });
        }
        RegionOutcome {
            seeds,
            records,
            elapsed: started.elapsed(),
        }
    })
}

struct BanditSeed {
    adrpo_reward: f64,
    grpo_reward: f64,
    adrpo_best_prob: f64,
    grpo_best_prob: f64,
}

struct BanditOutcome {
    seeds: Vec<BanditSeed>,
    records: Vec<MetricsRecord>,
    elapsed: Duration,
}

const BANDIT_BUDGET: usize = 3000;

fn run_bandit_method(
    spec: &BanditSpec,
    method: PgMethod,
    seed: u64,
    records: &mut Vec<MetricsRecord>,
) -> (f64, f64) {
    let cfg = PgConfig {
        method,
        reg: AdaptiveRegConfig::pg_default(),
        clip_eps: 0.2,
        group_size: 8,
        lr: 2.5,
        seed,
        force_zero_coef_advantage: false,
    };
    let mut trainer = PgTrainer::new(spec.clone(), cfg).expect("trainer");
    let mut rewards = Vec::with_capacity(BANDIT_BUDGET);
    for _ in 0..BANDIT_BUDGET {
        let record = trainer.step().expect("step");
        rewards.push(record.reward_mean);
        records.push(record);
    }
    // Final mean reward over the trailing 10% window; a single 8-sample
    // iteration would be dominated by sampling noise.
    let tail = BANDIT_BUDGET / 10;
    let final_reward = rewards[BANDIT_BUDGET - tail..].iter().sum::<f64>() / tail as f64;
    let best = spec.best_action(0);
    let best_prob = trainer.policy().probs(0).expect("probs")[best];
    (final_reward, best_prob)
}

fn bandit_experiment() -> &'static BanditOutcome {
    static CELL: OnceLock<BanditOutcome> = OnceLock::new();
    CELL.get_or_init(|| {
        let started = Instant::now();
        let spec = BanditSpec::deceptive();
        let mut seeds = Vec::new();
        let mut records = Vec::new();
        for seed in 0..PAIRED_SEEDS {
            let (adrpo_reward, adrpo_best_prob) =
                run_bandit_method(&spec, PgMethod::AdrpoGrpo, seed, &mut records);
            let (grpo_reward, grpo_best_prob) =
                run_bandit_method(&spec, PgMethod::GrpoFixed, seed, &mut records);
            seeds.push(BanditSeed {
                adrpo_reward,
                grpo_reward,
                adrpo_best_prob,
                grpo_best_prob,
            });
        }
        BanditOutcome {
            seeds,
            records,
            elapsed: started.elapsed(),
        }
    })
}

struct DeterminismOutcome {
    fm_identical: bool,
    pg_identical: bool,
    records: Vec<MetricsRecord>,
}

const FM_SMALL_CONFIG: &str = r#"
kind = "fm"
name = "det-fm"
seeds = [5]
budget = 6

[env.region]
centers = [[-1.2, 0.0]]
radius = 1.0
noise_sigma = 0.1

[optim]
lr = 0.05
batch_size = 8

[sampler]
num_steps = 16

[pretrain]
steps = 300
batch_size = 32
lr = 0.01
optimizer = "adam"
w2_threshold = 10.0
eval_samples = 32
sampler = { num_steps = 16 }
"#;

const PG_SMALL_CONFIG: &str = r#"
kind = "pg"
name = "det-pg"
seeds = [5]
budget = 40
"#;

fn replay_bytes(config_text: &str) -> (Vec<u8>, Vec<u8>, Vec<MetricsRecord>) {
    let config = parse_config(config_text).expect("config");
    let dir_a = tempfile::tempdir().expect("tempdir");
    let dir_b = tempfile::tempdir().expect("tempdir");
    let a = runner::run(&config, dir_a.path()).expect("run a");
    let b = runner::run(&config, dir_b.path()).expect("run b");
    let bytes_a = std::fs::read(&a.seed_runs[0].metrics_path).expect("read");
    let bytes_b = std::fs::read(&b.seed_runs[0].metrics_path).expect("read");
    let records = String::from_utf8(bytes_a.clone())
        .expect("utf8")
        .lines()
        .map(|l| MetricsRecord::from_jsonl(l).expect("record"))
        .collect();
    (bytes_a, bytes_b, records)
}

fn determinism_runs() -> &'static DeterminismOutcome {
    static CELL: OnceLock<DeterminismOutcome> = OnceLock::new();
    CELL.get_or_init(|| {
        let (fa, fb, mut records) = replay_bytes(FM_SMALL_CONFIG);
        let (pa, pb, pg_records) = replay_bytes(PG_SMALL_CONFIG);
        let fm_identical = fa == fb;
        let pg_identical = pa == pb;
        records.extend(pg_records);
        DeterminismOutcome {
            fm_identical,
            pg_identical,
            records,
        }
    })
}

// ---------------------------------------------------------------------------
// Criterion 1: gradient correctness
// ---------------------------------------------------------------------------

fn max_rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .filter(|(a, _)| a.abs() > 1e-8)
        .map(|(a, n)| ((a - n) / a).abs())
        .fold(0.0, f64::max)
}

/// Five-point central difference; the plain two-point stencil's truncation
/// floor sits right at the 1e-6 tolerance for small coordinates.
fn central_diff(mut eval: impl FnMut(f64) -> f64, x: f64, h: f64) -> f64 {
    let f2p = eval(x + 2.0 * h);
    let f1p = eval(x + h);
    let f1m = eval(x - h);
    let f2m = eval(x - 2.0 * h);
    (-f2p + 8.0 * f1p - 8.0 * f1m + f2m) / (12.0 * h)
}

fn random_fm_batch(rng: &mut ChaCha8Rng, contexts: usize, n: usize) -> Vec<FmBatchSample> {
    (0..n)
        .map(|_| {
            let x0 = [rng.sample(StandardNormal), rng.sample(StandardNormal)];
            let x1 = [rng.sample(StandardNormal), rng.sample(StandardNormal)];
            let t: f64 = rng.random_range(0.0..1.0);
            FmBatchSample {
                path: make_path(&x0, &x1, t).expect("path"),
                context: rng.random_range(0..contexts),
                reward: rng.random_range(0.0..1.0),
                advantage_clipped: rng.random_range(-1.0..1.0),
            }
        })
        .collect()
}

#[test]
fn criterion_1_gradient_correctness() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xC1);
    let mut worst: f64 = 0.0;
    let h = 1e-3;

    for case in 0..50 {
        // Flow-side losses on a random small net.
        let contexts = rng.random_range(1..3usize);
        let hidden = [rng.random_range(4..8usize)];
        let mut net = ParamNet::new(2, contexts, &hidden, Activation::Tanh, 100 + case);
        let reference = ParamNet::new(2, contexts, &hidden, Activation::Tanh, 200 + case);
        let reg = AdaptiveRegConfig::fm_default();
        let batch = random_fm_batch(&mut rng, contexts, 4);
        let pairs: Vec<(FlowPath, Vec<f64>)> = batch
            .iter()
            .map(|s| {
                (
                    s.path.clone(),
                    adrpo_core::one_hot(s.context, contexts).expect("one hot"),
                )
            })
            .collect();

        let (_, cfm_grad) = cfm_loss(&net, &pairs).expect("cfm");
        let (_, adrpo_grad, _) =
            adrpo_fm_loss(&net, &reference, &batch, &reg, false).expect("adrpo fm");
        let mut cfm_fd = vec![0.0; net.params().len()];
        let mut adrpo_fd = vec![0.0; net.params().len()];
        for j in 0..net.params().len() {
            let orig = net.params()[j];
            cfm_fd[j] = central_diff(
                |v| {
                    net.params_mut()[j] = v;
                    let (l, _) = cfm_loss(&net, &pairs).expect("cfm");
                    l
                },
                orig,
                h,
            );
            adrpo_fd[j] = central_diff(
                |v| {
                    net.params_mut()[j] = v;
                    let (l, _, _) =
                        adrpo_fm_loss(&net, &reference, &batch, &reg, false).expect("fm");
                    l
                },
                orig,
                h,
            );
            net.params_mut()[j] = orig;
        }
        worst = worst.max(max_rel_error(&cfm_grad.grad, &cfm_fd));
        worst = worst.max(max_rel_error(&adrpo_grad.grad, &adrpo_fd));

        // Policy-side losses on a random softmax row.
        let k = rng.random_range(3..6usize);
        let logits: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut policy = PolicyTable::from_logits(vec![logits]).expect("policy");
        let ref_logits: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
        let reference = PolicyTable::from_logits(vec![ref_logits]).expect("reference");
        let g = 4;
        let old_probs_row: Vec<f64> = {
            let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..1.0)).collect();
            let s: f64 = raw.iter().sum();
            raw.into_iter().map(|x| x / s).collect()
        };
        let actions: Vec<usize> = (0..g).map(|_| rng.random_range(0..k)).collect();
        let rollout = GroupRollout {
            context: 0,
            rewards: vec![0.0; g],
            advantages: (0..g).map(|_| rng.random_range(-1.5..1.5)).collect(),
            old_probs: actions.iter().map(|&a| old_probs_row[a]).collect(),
            actions,
        };
        let reg_pg = AdaptiveRegConfig::pg_default();
        let (_, pg_grad) = pg_loss(&policy, &rollout, 0.2).expect("pg");
        let (_, full_grad, _) =
            adrpo_grpo_loss(&policy, &reference, &rollout, &reg_pg, 0.2, false).expect("grpo");
        let mut pg_fd = vec![0.0; k];
        let mut full_fd = vec![0.0; k];
        let hp = 1e-4;
        for j in 0..k {
            let orig = policy.logits()[0][j];
            pg_fd[j] = central_diff(
                |v| {
                    policy.logits_mut()[0][j] = v;
                    pg_loss(&policy, &rollout, 0.2).expect("pg").0
                },
                orig,
                hp,
            );
            full_fd[j] = central_diff(
                |v| {
                    policy.logits_mut()[0][j] = v;
                    adrpo_grpo_loss(&policy, &reference, &rollout, &reg_pg, 0.2, false)
                        .expect("g")
                        .0
                },
                orig,
                hp,
            );
            policy.logits_mut()[0][j] = orig;
        }
        worst = worst.max(max_rel_error(&pg_grad, &pg_fd));
        worst = worst.max(max_rel_error(&full_grad, &full_fd));
    }

    let elapsed = started.elapsed();
    assert!(worst < 1e-6, "worst relative error {worst}");
    assert!(elapsed < Duration::from_secs(30), "took {elapsed:?}");
    println!(
        "criterion 1 PASS: gradient correctness, 50 cases x 4 losses, worst rel err {worst:.2e}, {:.1}s",
        elapsed.as_secs_f64()
    );
}

// ---------------------------------------------------------------------------
// Criterion 2: reduction identities
// ---------------------------------------------------------------------------

#[test]
fn criterion_2_reduction_identities() {
    // Flow side: ADRPO with the coefficient advantage forced to zero must
    // track ADV-fixed-beta bit for bit.
    let target = two_mode_target();
    let pre = adrpo_core::PretrainConfig {
        steps: 400,
        batch_size: 32,
        w2_threshold: f64::INFINITY,
        eval_samples: 16,
        sampler: SamplerConfig {
            num_steps: 16,
            ..SamplerConfig::default()
        },
        ..adrpo_core::PretrainConfig::default()
    };
    let (reference, _) =
        pretrain_reference(&target, 1, &[16], Activation::Tanh, &pre, 7).expect("pretrain");
    let env = region_env();
    let base = FmConfig {
        batch_size: 16,
        lr: 0.05,
        sampler: SamplerConfig {
            num_steps: 16,
            ..SamplerConfig::default()
        },
        probe_count: 16,
        seed: 11,
        ..FmConfig::default()
    };
    let mut fm_a = FmTrainer::new(
        env.clone(),
        reference.clone(),
        FmConfig {
            method: FmMethod::Adrpo,
            force_zero_coef_advantage: true,
            ..base.clone()
        },
    )
    .expect("trainer");
    let mut fm_b = FmTrainer::new(
        env,
        reference,
        FmConfig {
            method: FmMethod::AdvFixedBeta,
            ..base
        },
    )
    .expect("trainer");
    let assert_fm_bounds = |r: &MetricsRecord| {
        assert!(r.beta_tot.min >= 0.0 && r.beta_tot.max <= 2.0);
    };
    for iter in 0..100 {
        assert_fm_bounds(&fm_a.step().expect("step"));
        assert_fm_bounds(&fm_b.step().expect("step"));
        for (pa, pb) in fm_a.net().params().iter().zip(fm_b.net().params()) {
            assert_eq!(
                pa.to_bits(),
                pb.to_bits(),
                "fm params diverged at iteration {iter}"
            );
        }
    }

    // Policy side: ADRPO-GRPO with the coefficient forced to zero must track
    // GRPO-fixed bit for bit.
    let spec = BanditSpec::deceptive();
    let mut pg_a = PgTrainer::new(
        spec.clone(),
        PgConfig {
            method: PgMethod::AdrpoGrpo,
            force_zero_coef_advantage: true,
            seed: 13,
            ..PgConfig::default()
        },
    )
    .expect("trainer");
    let mut pg_b = PgTrainer::new(
        spec,
        PgConfig {
            method: PgMethod::GrpoFixed,
            seed: 13,
            ..PgConfig::default()
        },
    )
    .expect("trainer");
    let assert_pg_bounds = |r: &MetricsRecord| {
        assert!(r.beta_tot.min >= 0.0 && r.beta_tot.max <= 0.08 + 1e-15);
    };
    for iter in 0..100 {
        assert_pg_bounds(&pg_a.step().expect("step"));
        assert_pg_bounds(&pg_b.step().expect("step"));
        for (ra, rb) in pg_a.policy().logits().iter().zip(pg_b.policy().logits()) {
            for (la, lb) in ra.iter().zip(rb) {
                assert_eq!(
                    la.to_bits(),
                    lb.to_bits(),
                    "pg logits diverged at iteration {iter}"
                );
            }
        }
    }
    println!(
        "criterion 2 PASS: A=0 reductions bit-identical over 100 iterations (fm and pg pairs)"
    );
}

// ---------------------------------------------------------------------------
// Criterion 3: affinity and sign reversal
// ---------------------------------------------------------------------------

#[test]
fn criterion_3_affinity_and_sign_reversal() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC3);
    let net = ParamNet::new(2, 1, &[8], Activation::Tanh, 31);
    let reference = ParamNet::new(2, 1, &[8], Activation::Tanh, 32);
    let reg = AdaptiveRegConfig::fm_default();
    let batch = random_fm_batch(&mut rng, 1, 6);

    // Affinity: for each sample, the loss at the midpoint advantage lies on
    // the chord through the endpoint values.
    let mut worst_residual: f64 = 0.0;
    for j in 0..batch.len() {
        let eval = |a: f64| {
            let mut b = batch.clone();
            b[j].advantage_clipped = a;
            adrpo_fm_loss(&net, &reference, &b, &reg, false)
                .expect("loss")
                .0
        };
        let (a1, a2) = (-0.8, 0.6);
        let mid = 0.5 * (a1 + a2);
        let residual = (eval(mid) - 0.5 * (eval(a1) + eval(a2))).abs();
        worst_residual = worst_residual.max(residual);
    }
    assert!(worst_residual < 1e-10, "affinity residual {worst_residual}");

    // Sign reversal: beta0 = 0 and reference = net isolates the data term;
    // negating the advantage negates every gradient coordinate exactly.
    let reg0 = AdaptiveRegConfig::new(0.0, -1.0, 1.0).expect("reg");
    let frozen = net.clone();
    let mut single = random_fm_batch(&mut rng, 1, 1);
    for a in [0.3, 0.75, 1.0] {
        single[0].advantage_clipped = a;
        let (_, plus, _) = adrpo_fm_loss(&net, &frozen, &single, &reg0, false).expect("loss");
        single[0].advantage_clipped = -a;
        let (_, minus, _) = adrpo_fm_loss(&net, &frozen, &single, &reg0, false).expect("loss");
        for (p, m) in plus.grad.iter().zip(&minus.grad) {
            assert_eq!(
                p.to_bits(),
                (-m).to_bits(),
                "sign reversal broke at a = {a}"
            );
        }
    }
    println!(
        "criterion 3 PASS: affine in each clipped advantage (residual {worst_residual:.2e}), gradient negation exact"
    );
}

// ---------------------------------------------------------------------------
// Criterion 4: reward-diversity ordering on the region environment
// ---------------------------------------------------------------------------

#[test]
fn criterion_4_reward_diversity_ordering() {
    let outcome = region_experiment();
    let mut not_dominated = 0;
    let mut outright = 0;
    let mut raft_ok = 0;
    for (seed, s) in outcome.seeds.iter().enumerate() {
        let verdict = dominance(
            (s.adrpo.reward, s.adrpo.diversity),
            (s.orw.reward, s.orw.diversity),
        );
        if verdict != DominanceVerdict::SecondDominates {
            not_dominated += 1;
        }
        if verdict == DominanceVerdict::FirstDominates {
            outright += 1;
        }
        if s.adrpo.diversity > s.raft.diversity {
            raft_ok += 1;
        }
        println!(
            "  seed {seed}: adrpo ({:.3}, {:.3})  orw ({:.3}, {:.3})  raft ({:.3}, {:.3})  {verdict:?}",
            s.adrpo.reward,
            s.adrpo.diversity,
            s.orw.reward,
            s.orw.diversity,
            s.raft.reward,
            s.raft.diversity
        );
    }
    assert!(
        not_dominated >= 8,
        "ADRPO dominated or tied in only {not_dominated}/10 seeds"
    );
    assert!(
        raft_ok >= 9,
        "ADRPO diversity exceeded RAFT in only {raft_ok}/10 seeds"
    );
    assert!(
        outcome.elapsed < Duration::from_secs(30 * 60),
        "took {:?}",
        outcome.elapsed
    );
    println!(
        "criterion 4 PASS: vs ORW dominates-or-ties {not_dominated}/10 (outright {outright}/10), diversity > RAFT {raft_ok}/10, {:.0}s",
        outcome.elapsed.as_secs_f64()
    );
}

// ---------------------------------------------------------------------------
// Criterion 5: local-optimum escape on the deceptive bandit
// ---------------------------------------------------------------------------

#[test]
fn criterion_5_local_optimum_escape() {
    let outcome = bandit_experiment();
    let mut both_clauses = 0;
    for (seed, s) in outcome.seeds.iter().enumerate() {
        let ok = s.adrpo_reward > s.grpo_reward && s.grpo_best_prob < s.adrpo_best_prob;
        if ok {
            both_clauses += 1;
        }
        println!(
            "  seed {seed}: adrpo (reward {:.3}, p* {:.3})  grpo (reward {:.3}, p* {:.3}){}",
            s.adrpo_reward,
            s.adrpo_best_prob,
            s.grpo_reward,
            s.grpo_best_prob,
            if ok { "" } else { "  FAIL" }
        );
    }
    assert!(
        both_clauses >= 8,
        "escape clauses held in only {both_clauses}/10 seeds"
    );
    assert!(
        outcome.elapsed < Duration::from_secs(5 * 60),
        "took {:?}",
        outcome.elapsed
    );
    println!(
        "criterion 5 PASS: ADRPO-GRPO beats GRPO-fixed on reward and best-action mass in {both_clauses}/10 seeds, {:.1}s",
        outcome.elapsed.as_secs_f64()
    );
}

// ---------------------------------------------------------------------------
// Criterion 6: beta_tot bounds across every logged iteration
// ---------------------------------------------------------------------------

#[test]
fn criterion_6_beta_bounds() {
    let fm_bounds = AdaptiveRegConfig::fm_default().beta_bounds();
    let pg_bounds = AdaptiveRegConfig::pg_default().beta_bounds();
    let mut checked = 0usize;
    let mut check = |records: &[MetricsRecord]| {
        for r in records {
            let (lo, hi) = if r.kl_ref.is_some() {
                pg_bounds
            } else {
                fm_bounds
            };
            assert!(
                r.beta_tot.min >= lo
                    && r.beta_tot.max <= hi
                    && r.beta_tot.mean >= lo
                    && r.beta_tot.mean <= hi,
                "iteration {} of {}: beta stats [{}, {}, {}] outside [{lo}, {hi}]",
                r.iteration,
                r.method,
                r.beta_tot.min,
                r.beta_tot.mean,
                r.beta_tot.max
            );
            checked += 1;
        }
    };
    check(&region_experiment().records);
    check(&bandit_experiment().records);
    check(&determinism_runs().records);
    assert!(checked > 0);
    println!(
        "criterion 6 PASS: beta_tot within [0, 2] (fm) and [0, 0.08] (pg) across {checked} logged iterations, zero violations"
    );
}

// ---------------------------------------------------------------------------
// Criterion 7: W2 oracle equivalence and metric axioms
// ---------------------------------------------------------------------------

fn w2_brute_force(a: &[[f64; 2]], b: &[[f64; 2]]) -> f64 {
    fn permute(k: usize, idx: &mut Vec<usize>, best: &mut f64, cost: &dyn Fn(&[usize]) -> f64) {
        if k == idx.len() {
            let c = cost(idx);
            if c < *best {
                *best = c;
            }
            return;
        }
        for i in k..idx.len() {
            idx.swap(k, i);
            permute(k + 1, idx, best, cost);
            idx.swap(k, i);
        }
    }
    let n = a.len();
    let mut idx: Vec<usize> = (0..n).collect();
    let mut best = f64::INFINITY;
    let cost = |perm: &[usize]| -> f64 {
        perm.iter()
            .enumerate()
            .map(|(i, &j)| {
                let dx = a[i][0] - b[j][0];
                let dy = a[i][1] - b[j][1];
                dx * dx + dy * dy
            })
            .sum()
    };
    permute(0, &mut idx, &mut best, &cost);
    (best / n as f64).sqrt()
}

#[test]
fn criterion_7_w2_oracle_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC7);
    let random_set = |n: usize, rng: &mut ChaCha8Rng| -> Vec<[f64; 2]> {
        (0..n)
            .map(|_| [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)])
            .collect()
    };

    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(1..=7usize);
        let a = random_set(n, &mut rng);
        let b = random_set(n, &mut rng);
        let fast = w2_empirical(&a, &b).expect("w2");
        let slow = w2_brute_force(&a, &b);
        worst = worst.max((fast - slow).abs());
    }
    assert!(
        worst <= 1e-12,
        "assignment vs brute force differ by {worst}"
    );

    for _ in 0..100 {
        let n = rng.random_range(2..=6usize);
        let a = random_set(n, &mut rng);
        let b = random_set(n, &mut rng);
        let c = random_set(n, &mut rng);
        let ab = w2_empirical(&a, &b).expect("w2");
        let ba = w2_empirical(&b, &a).expect("w2");
        assert!((ab - ba).abs() <= 1e-12, "symmetry violated");
        let bc = w2_empirical(&b, &c).expect("w2");
        let ac = w2_empirical(&a, &c).expect("w2");
        assert!(ac <= ab + bc + 1e-9, "triangle inequality violated");
        // Identity: zero iff equal as multisets (up to permutation).
        let mut shuffled = a.clone();
        shuffled.rotate_left(1);
        assert_eq!(w2_empirical(&a, &shuffled).expect("w2"), 0.0);
        let mut perturbed = a.clone();
        perturbed[0][0] += 0.5;
        assert!(w2_empirical(&a, &perturbed).expect("w2") > 0.0);
    }
    println!(
        "criterion 7 PASS: exact match with all-permutations oracle on 100 instances (worst gap {worst:.2e}), metric axioms on 100 triples"
    );
}

// ---------------------------------------------------------------------------
// Criterion 8: byte-identical replay
// ---------------------------------------------------------------------------

#[test]
fn criterion_8_determinism() {
    let outcome = determinism_runs();
    assert!(outcome.fm_identical, "fm replay produced different bytes");
    assert!(outcome.pg_identical, "pg replay produced different bytes");
    println!("criterion 8 PASS: (config, seed) replays byte-identical for fm and pg runs");
}
