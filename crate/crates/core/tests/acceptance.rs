//! Acceptance battery: one PASS/FAIL line per criterion, nonzero exit if any fail.
//!
//! The training criteria run three full desk-scale trainings (base, carry-pole
//! from scratch, carry-pole bootstrapped from the base), so the whole target
//! takes tens of minutes on one core. Set `LOADGAIT_ACCEPTANCE_DIR` to keep the
//! checkpoints, curves and reports.

use std::path::{Path, PathBuf};
use std::time::Instant;

use loadgait::config::{Init, RunConfig};
use loadgait::env::Env;
use loadgait::eval::{eval_env_config, pass_rate, Protocol};
use loadgait::gait::{clock_weight, gait_params_for_speed, stance_weight, ClockState, Foot, GaitParams};
use loadgait::loads::{LoadKind, LoadParams};
use loadgait::reward::RewardMode;
use loadgait::sim::{build_biped, observe, ModelParams};
use loadgait::trainer::{collect_rollouts, ppo_surrogate, ppo_surrogate_grad, train, LearningCurvePoint};
use loadgait::{seed, Policy};
use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, TestRunner};

mod common;

type Outcome = Result<(bool, String), String>;

struct Battery {
    results: Vec<bool>,
}

impl Battery {
    fn check(&mut self, n: usize, name: &str, budget_s: f64, f: impl FnOnce() -> Outcome) {
        let t = Instant::now();
        let (ok, detail) = match f() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        let secs = t.elapsed().as_secs_f64();
        let in_time = secs <= budget_s;
        let pass = ok && in_time;
        let timing = if in_time { format!("{secs:.1}s") } else { format!("{secs:.1}s, over the {budget_s:.0}s budget") };
        println!("criterion {n:2} {}: {name}: {detail} ({timing})", if pass { "PASS" } else { "FAIL" });
        self.results.push(pass);
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

/// Independent statement of the clock anchors: ramp up over the first 10 % of
/// swing, plateau, ramp down over the last 10 %, zero through stance.
fn clock_oracle(t: f64, swing_ratio: f64, cycle: f64) -> f64 {
    let t = t.rem_euclid(cycle);
    let swing = swing_ratio * cycle;
    let ramp = 0.1 * swing;
    if t >= swing {
        0.0
    } else {
        (t / ramp).min((swing - t) / ramp).min(1.0)
    }
}

fn clock_exactness() -> Outcome {
    let mut worst: f64 = 0.0;
    for (sr, ct) in [(0.4, 1.0), (0.6, 0.8), (0.8, 1.0 / 1.5), (0.25, 1.7)] {
        let gait = GaitParams::new(sr, ct).map_err(err)?;
        for k in 0..=2000 {
            let t = ct * k as f64 / 1000.0 - 0.5 * ct;
            let left = clock_weight(t, &gait, Foot::Left);
            let right = clock_weight(t, &gait, Foot::Right);
            worst = worst
                .max((left - clock_oracle(t, sr, ct)).abs())
                .max((right - clock_weight(t + 0.5 * ct, &gait, Foot::Left)).abs())
                .max((stance_weight(t, &gait, Foot::Left) - (1.0 - left)).abs());
        }
    }
    let fig = GaitParams::new(0.4, 1.0).map_err(err)?;
    let anchors: [(f64, f64); 7] = [(0.2, 1.0), (0.5, 0.0), (0.9, 0.0), (0.0, 0.0), (0.04, 1.0), (0.36, 1.0), (0.4, 0.0)];
    for (t, w) in anchors {
        worst = worst.max((clock_weight(t, &fig, Foot::Left) - w).abs());
    }
    Ok((worst <= 1e-9, format!("max deviation from anchor oracle {worst:.1e}")))
}

fn gait_schedule() -> Outcome {
    // (speed, swing ratio, step frequency) from the gait heuristics table,
    // interpolated linearly between 1 and 3 m/s.
    let table: [(f64, f64, f64); 5] = [(0.5, 0.4, 1.0), (1.0, 0.4, 1.0), (2.0, 0.6, 1.25), (3.0, 0.8, 1.5), (3.5, 0.8, 1.5)];
    let mut worst: f64 = 0.0;
    for (v, sr, hz) in table {
        let g = gait_params_for_speed::<f64>(v);
        worst = worst.max((g.swing_ratio - sr).abs()).max((g.step_frequency() - hz).abs()).max((g.phase_offset - 0.5).abs());
    }
    Ok((worst <= 1e-12, format!("max deviation {worst:.1e} over 5 speeds")))
}

fn surrogate_values() -> Outcome {
    let cases = [ppo_surrogate(1.5, 1.0, 0.2) - 1.2, ppo_surrogate(0.5, -1.0, 0.2) + 0.8, ppo_surrogate(1.0, 0.37, 0.2) - 0.37];
    let values_ok = cases.iter().all(|d| d.abs() <= 1e-12);
    let clipped_zero = ppo_surrogate_grad(1.5, 1.0, 0.2) == 0.0 && ppo_surrogate_grad(0.5, -1.0, 0.2) == 0.0;
    let inside = ppo_surrogate_grad(1.1, 1.0, 0.2) == 1.0 && ppo_surrogate_grad(0.5, 1.0, 0.2) == 1.0 && ppo_surrogate_grad(1.5, -1.0, 0.2) == -1.0;
    Ok((values_ok && clipped_zero && inside, format!("clip values exact: {values_ok}, zero gradient outside band: {clipped_zero}, unclipped gradient = A: {inside}")))
}

fn gradient_fidelity() -> Outcome {
    let worst = (0..10).map(|s| common::max_fd_error(1000 + s)).fold(0.0, f64::max);
    Ok((worst < 1e-4, format!("max relative error {worst:.2e} over 10 seeds")))
}

fn physics_oracles() -> Outcome {
    let drift = common::free_flight_energy_drift();
    let period = common::pendulum_period_error(LoadParams::<f64>::default().carry_pole.rope_length);
    let slosh = common::slosh_frequency_error(100.0, 1.0);
    Ok((drift < 1e-3 && period < 0.01 && slosh < 0.01, format!("energy drift {:.4}%, pendulum period error {:.3}%, slosh frequency error {:.3}%", 100.0 * drift, 100.0 * period, 100.0 * slosh)))
}

fn even_split() -> Outcome {
    let mut cfg = RunConfig::default();
    cfg.train.models = LoadKind::ALL.to_vec();
    cfg.train.reward_mode = RewardMode::General;
    let policy = loadgait::trainer::initial_policy(&cfg).map_err(err)?;
    let batch = collect_rollouts(&policy, &cfg, 0).map_err(err)?;
    let longest = batch.episodes.iter().map(|e| e.len()).max().unwrap_or(0);
    let mut ok = batch.total_steps == cfg.train.steps_per_iteration && batch.episodes.iter().map(|e| e.len()).sum::<usize>() == batch.total_steps;
    let target = cfg.train.steps_per_iteration as f64 / LoadKind::ALL.len() as f64;
    let mut counts = Vec::new();
    for kind in LoadKind::ALL {
        let recorded = batch.steps_per_kind.iter().find(|(k, _)| *k == kind).map(|&(_, n)| n).unwrap_or(0);
        let counted: usize = batch.episodes.iter().filter(|e| e.kind == kind).map(|e| e.len()).sum();
        ok &= recorded == counted && (recorded as f64 - target).abs() <= longest as f64;
        counts.push(recorded);
    }
    Ok((ok, format!("steps per model {counts:?}, total {}", batch.total_steps)))
}

fn small_config() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.network.width = 8;
    cfg.train.steps_per_iteration = 512;
    cfg.train.iterations = 3;
    cfg.train.epochs = 2;
    cfg.seed = 77;
    cfg
}

fn reproducibility(scratch: &Path) -> Outcome {
    let cfg = small_config();
    let (a, b) = (scratch.join("repro_a"), scratch.join("repro_b"));
    let ra = train(&cfg, Some(&a), |_| {}).map_err(err)?;
    train(&cfg, Some(&b), |_| {}).map_err(err)?;
    let same = |f: &str| -> Result<bool, String> { Ok(std::fs::read(a.join(f)).map_err(err)? == std::fs::read(b.join(f)).map_err(err)?) };
    let ckpt = same("policy.ckpt")? && same("checkpoints/iter_00000.ckpt")?;
    let curve = same("learning_curve.csv")?;
    let report = |p: &Policy| -> Result<String, String> {
        let r = loadgait::eval::evaluate(p, "repro", &cfg, LoadKind::TrayBox, Protocol::PassRate, 4, 5).map_err(err)?;
        serde_json::to_string(&r).map_err(err)
    };
    let loaded_b = Policy::load(&b.join("policy.ckpt")).map_err(err)?.0;
    let reports = report(&ra.policy)? == report(&loaded_b)?;
    let bytes = ra.policy.to_bytes(cfg.seed);
    let round = Policy::from_bytes(&bytes).map_err(err)?;
    let round_trip = round.0.to_bytes(round.1) == bytes;
    Ok((ckpt && curve && reports && round_trip, format!("checkpoints {ckpt}, curves {curve}, eval reports {reports}, round trip {round_trip}")))
}

fn proprioception_blindness() -> Outcome {
    let mut runner = TestRunner::new_with_rng(PropConfig { cases: 512, ..PropConfig::default() }, proptest::test_runner::TestRng::deterministic_rng(proptest::test_runner::RngAlgorithm::ChaCha));
    let strategy = (0usize..5, proptest::collection::vec(-3.0f64..3.0, 4), 0.0f64..0.99, 0.0f64..4.0);
    let models: Vec<_> = LoadKind::ALL.iter().map(|&k| build_biped(ModelParams::<f64>::default(), LoadParams::default().spec(k)).map(|m| m.0)).collect::<Result<_, _>>().map_err(err)?;
    let result = runner.run(&strategy, |(k, vals, phase, cmd)| {
        let s = &models[k];
        let clock = ClockState { phase, cycle_time: 1.0 };
        let mut mutated = s.clone();
        if let Some(l) = mutated.load.as_mut() {
            for (i, v) in l.q.iter_mut().enumerate() {
                *v += vals[i];
            }
            for (i, v) in l.qd.iter_mut().enumerate() {
                *v -= vals[2 + i];
            }
        }
        prop_assert_eq!(observe(s, &clock, cmd), observe(&mutated, &clock, cmd));
        Ok(())
    });
    Ok((result.is_ok(), match result {
        Ok(()) => "512 cases over all 5 load kinds".into(),
        Err(e) => format!("{e}"),
    }))
}

fn curve_mean(curve: &[LearningCurvePoint], range: std::ops::Range<usize>) -> f64 {
    let pts = &curve[range];
    pts.iter().map(|p| p.mean_reward).sum::<f64>() / pts.len() as f64
}

/// Commanded walk with mean actions; `true` if no termination of any kind.
fn walks_without_termination(policy: &Policy, cfg: &RunConfig, command: f64, seconds: f64) -> Result<(bool, usize), String> {
    let mut env = Env::new(eval_env_config(cfg, LoadKind::Unloaded)).map_err(err)?;
    let mut obs = env.reset(&mut seed::rng(0, &[]), command).map_err(err)?;
    let mut hidden = policy.initial_state();
    let steps = (seconds / loadgait::env::POLICY_DT).round() as usize;
    for k in 0..steps {
        let (mean, _) = policy.step(&obs, &mut hidden).map_err(err)?;
        let r = env.step(&mean).map_err(err)?;
        if r.termination.is_terminal() {
            return Ok((false, k + 1));
        }
        obs = r.obs;
    }
    Ok((true, steps))
}

struct Trained {
    policy: Policy,
    curve: Vec<LearningCurvePoint>,
    checkpoint: PathBuf,
    seconds: f64,
}

fn run_training(cfg: &RunConfig, out: &Path, label: &str) -> Result<Trained, String> {
    let t = Instant::now();
    let o = train(cfg, Some(out), |p| {
        if p.iteration % 25 == 0 {
            eprintln!("  [{label}] iteration {:3}: mean reward {:7.2}, episode length {:5.1} ({:.0}s)", p.iteration, p.mean_reward, p.mean_ep_len, t.elapsed().as_secs_f64());
        }
    })
    .map_err(err)?;
    Ok(Trained { policy: o.policy, curve: o.curve, checkpoint: o.final_checkpoint.ok_or("no checkpoint written")?, seconds: t.elapsed().as_secs_f64() })
}

fn samples_to(curve: &[LearningCurvePoint], threshold: f64) -> Option<usize> {
    curve.iter().find(|p| p.mean_reward >= threshold).map(|p| p.timesteps)
}

fn main() {
    let keep = std::env::var_os("LOADGAIT_ACCEPTANCE_DIR").map(PathBuf::from);
    let temp = tempfile::tempdir().expect("temporary directory");
    let root = keep.clone().unwrap_or_else(|| temp.path().to_path_buf());
    std::fs::create_dir_all(&root).expect("artifact directory");
    let mut b = Battery { results: Vec::new() };

    b.check(1, "clock exactness", 1.0, clock_exactness);
    b.check(2, "gait schedule", 1.0, gait_schedule);
    b.check(3, "PPO surrogate unit values", 1.0, surrogate_values);
    b.check(4, "BPTT gradient fidelity", 30.0, gradient_fidelity);
    b.check(5, "physics oracles", 60.0, physics_oracles);

    let base_cfg = RunConfig::default();
    let mut base: Option<Trained> = None;
    b.check(6, "training smoke (unloaded)", 3600.0, || {
        let t = run_training(&base_cfg, &root.join("base"), "base")?;
        let first = t.curve[0].mean_reward;
        let last = t.curve.last().unwrap().mean_reward;
        let (walked, steps) = walks_without_termination(&t.policy, &base_cfg, 0.5, 10.0)?;
        let ok = last >= 3.0 * first && walked;
        let detail = format!("reward {first:.2} -> {last:.2} ({:.1}x) over {} iterations; 10 s walk at 0.5 m/s: {}", last / first, t.curve.len(), if walked { "no termination".to_string() } else { format!("terminated after {steps} steps") });
        base = Some(t);
        Ok((ok, detail))
    });

    let mut cp_cfg = RunConfig::default();
    cp_cfg.train.models = vec![LoadKind::CarryPole];
    let mut scratch: Option<Trained> = None;
    b.check(7, "carry-pole specialized vs base pass rate", 1800.0, || {
        let base = base.as_ref().ok_or("base policy unavailable")?;
        let t = run_training(&cp_cfg, &root.join("carry_pole_scratch"), "carry-pole scratch")?;
        let trials = cp_cfg.eval.trials;
        let spec = pass_rate(&t.policy, &cp_cfg, LoadKind::CarryPole, trials, cp_cfg.seed).map_err(err)?.fraction;
        let basep = pass_rate(&base.policy, &cp_cfg, LoadKind::CarryPole, trials, cp_cfg.seed).map_err(err)?.fraction;
        scratch = Some(t);
        Ok((spec - basep >= 0.3, format!("specialized {spec:.3} vs base {basep:.3} over {trials} command sets (difference {:.3})", spec - basep)))
    });

    // The two-hour budget covers the scratch and bootstrap trainings together.
    let boot_budget = 7200.0 - scratch.as_ref().map_or(0.0, |t| t.seconds);
    b.check(8, "bootstrap sample efficiency", boot_budget, || {
        let base = base.as_ref().ok_or("base policy unavailable")?;
        let scratch = scratch.as_ref().ok_or("scratch carry-pole run unavailable")?;
        let n = base.curve.len();
        let threshold = 0.8 * curve_mean(&base.curve, n.saturating_sub(10)..n);
        let budget = scratch.curve.last().map_or(0, |p| p.timesteps);
        // A scratch run that never reaches the threshold needs more than its whole
        // budget, so the budget is a lower bound on its sample count.
        let scratch_samples = samples_to(&scratch.curve, threshold);
        let scratch_bound = scratch_samples.unwrap_or(budget);
        let mut boot_cfg = cp_cfg.clone();
        boot_cfg.train.init = Init::Checkpoint(base.checkpoint.clone());
        boot_cfg.train.iterations = cp_cfg.train.iterations / 2;
        let boot = run_training(&boot_cfg, &root.join("carry_pole_bootstrap"), "carry-pole bootstrap")?;
        let boot_samples = samples_to(&boot.curve, threshold);
        let ok = boot_samples.is_some_and(|s| 2 * s <= scratch_bound);
        let show = |s: Option<usize>| s.map_or_else(|| "not reached".to_string(), |s| s.to_string());
        let scratch_note = if scratch_samples.is_none() { format!("not reached within {budget}") } else { show(scratch_samples) };
        Ok((ok, format!("threshold {threshold:.2}; samples to threshold: bootstrap {}, scratch {scratch_note}", show(boot_samples))))
    });

    b.check(9, "even-split invariant", 60.0, even_split);
    b.check(10, "reproducibility", 600.0, || reproducibility(&root));
    b.check(11, "proprioception blindness", 1.0, proprioception_blindness);

    let passed = b.results.iter().filter(|&&p| p).count();
    println!("acceptance: {passed}/{} criteria passed", b.results.len());
    if let Some(k) = keep {
        println!("artifacts kept in {}", k.display());
    }
    if passed != b.results.len() {
        std::process::exit(1);
    }
}
