//! Evaluation protocols: pass rate over random command sets, average speed
//! error, push-force line search, maximum speed and phase portraits.
//!
//! Every trial starts from the standing pose on the nominal (unrandomized)
//! model, uses the policy's mean action and fails only on a physical failure
//! (fall, dropped box, divergence). Trial `k` of protocol `p` draws from
//! `seed::derive(master, [EVAL, p, k])`.

use std::path::Path;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{EvalConfig, RunConfig};
use crate::env::{Env, EnvConfig, POLICY_DT};
use crate::error::{Error, Result};
use crate::gait::MAX_SPEED;
use crate::loads::LoadKind;
use crate::policy::RecurrentActorCritic;
use crate::reward::{RewardMode, TerminationReason};
use crate::seed;
use crate::sim::{joint_index, BIPED_DOF};

type Net = RecurrentActorCritic<f64>;

pub const PROTO_PASS_RATE: u64 = 1;
pub const PROTO_PUSH: u64 = 2;
pub const PROTO_MAX_SPEED: u64 = 3;
pub const PROTO_PORTRAIT: u64 = 4;

/// Stamped into every report.
pub const COMMAND_NOTE: &str = "planar model: each command set is speed commands only (no orientation commands)";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    PassRate,
    Push,
    MaxSpeed,
    All,
}

impl Protocol {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "pass-rate" => Some(Protocol::PassRate),
            "push" => Some(Protocol::Push),
            "max-speed" => Some(Protocol::MaxSpeed),
            "all" => Some(Protocol::All),
            _ => None,
        }
    }

    fn includes(self, other: Protocol) -> bool {
        self == Protocol::All || self == other
    }
}

/// Speed commands applied in order, each held for `period` seconds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommandSet {
    pub commands: Vec<f64>,
    pub period: f64,
}

impl CommandSet {
    pub fn duration(&self) -> f64 {
        self.period * self.commands.len() as f64
    }

    pub fn command_at(&self, t: f64) -> f64 {
        let k = ((t / self.period).floor() as usize).min(self.commands.len() - 1);
        self.commands[k]
    }
}

/// `prev + delta` if it stays within `[0, MAX_SPEED]`.
pub fn apply_delta(prev: f64, delta: f64) -> Option<f64> {
    let next = prev + delta;
    (0.0..=MAX_SPEED).contains(&next).then_some(next)
}

/// Starting from standing (0 m/s), each command differs from the previous
/// one by a magnitude uniform in `command_delta` with random sign; draws that
/// leave `[0, 4]` are rejected and redrawn.
pub fn sample_command_set(rng: &mut seed::Rng, cfg: &EvalConfig) -> CommandSet {
    let mut prev = 0.0;
    let mut commands = Vec::with_capacity(cfg.commands_per_set);
    for _ in 0..cfg.commands_per_set {
        let next = loop {
            let mag = rng.random_range(cfg.command_delta[0]..=cfg.command_delta[1]);
            let delta = if rng.random::<bool>() { mag } else { -mag };
            if let Some(n) = apply_delta(prev, delta) {
                break n;
            }
        };
        commands.push(next);
        prev = next;
    }
    CommandSet { commands, period: cfg.command_period }
}

/// Per-step record of an evaluation rollout.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub time: Vec<f64>,
    pub command: Vec<f64>,
    pub velocity: Vec<f64>,
    pub q: Vec<[f64; BIPED_DOF]>,
    pub qd: Vec<[f64; BIPED_DOF]>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    fn record(&mut self, env: &Env) {
        let s = env.state();
        self.time.push(s.time);
        self.command.push(env.command());
        self.velocity.push(s.qd[0]);
        self.q.push(s.q);
        self.qd.push(s.qd);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialResult {
    pub failure: Option<TerminationReason>,
    pub trajectory: Trajectory,
}

impl TrialResult {
    pub fn survived(&self) -> bool {
        self.failure.is_none()
    }
}

pub fn eval_env_config(cfg: &RunConfig, kind: LoadKind) -> EnvConfig {
    EnvConfig { model: cfg.model, gains: cfg.gains, load: cfg.loads.spec(kind), reward: cfg.reward, mode: RewardMode::Specialized, randomize: None }
}

/// Drives `env` with mean actions for `steps` policy steps; `command(k)` sets
/// the command before step `k` and `before(k, env)` may perturb it.
fn rollout(policy: &Net, env: &mut Env, steps: usize, mut command: impl FnMut(usize) -> f64, mut before: impl FnMut(usize, &mut Env) -> Result<()>) -> Result<TrialResult> {
    let mut rng = seed::rng(0, &[]);
    let mut obs = env.reset(&mut rng, command(0))?;
    let mut hidden = policy.initial_state();
    let mut trajectory = Trajectory::default();
    for k in 0..steps {
        let c = command(k);
        if c != env.command() {
            env.set_command(c);
            obs = env.observation();
        }
        before(k, env)?;
        let (mean, _) = policy.step(&obs, &mut hidden)?;
        let out = env.step(&mean)?;
        obs = out.obs;
        trajectory.record(env);
        if out.termination.is_failure() {
            return Ok(TrialResult { failure: Some(out.termination), trajectory });
        }
    }
    Ok(TrialResult { failure: None, trajectory })
}

fn steps_for(seconds: f64) -> usize {
    (seconds / POLICY_DT).round() as usize
}

/// Runs one command set from a standing start.
pub fn run_command_set(policy: &Net, env: &mut Env, set: &CommandSet) -> Result<TrialResult> {
    let steps = steps_for(set.duration());
    rollout(policy, env, steps, |k| set.command_at(k as f64 * POLICY_DT), |_, _| Ok(()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct PassRateResult {
    pub fraction: f64,
    pub trials: usize,
    pub survivors: Vec<TrialResult>,
    pub failures: Vec<TerminationReason>,
}

/// Trials `range` of the pass-rate protocol; trial `k` is the same whichever
/// range it is run in.
pub fn run_trials(policy: &Net, cfg: &RunConfig, kind: LoadKind, range: std::ops::Range<usize>, master: u64) -> Result<Vec<TrialResult>> {
    let env_cfg = eval_env_config(cfg, kind);
    range
        .into_par_iter()
        .map(|k| {
            let mut rng = seed::rng(master, &[seed::EVAL, PROTO_PASS_RATE, k as u64]);
            let set = sample_command_set(&mut rng, &cfg.eval);
            let mut env = Env::new(env_cfg.clone())?;
            run_command_set(policy, &mut env, &set)
        })
        .collect()
}

pub fn pass_rate(policy: &Net, cfg: &RunConfig, kind: LoadKind, n_trials: usize, master: u64) -> Result<PassRateResult> {
    if n_trials == 0 {
        return Err(Error::InvalidConfig("pass rate needs at least one trial".into()));
    }
    let mut survivors = Vec::new();
    let mut failures = Vec::new();
    for r in run_trials(policy, cfg, kind, 0..n_trials, master)? {
        match r.failure {
            None => survivors.push(r),
            Some(f) => failures.push(f),
        }
    }
    Ok(PassRateResult { fraction: survivors.len() as f64 / n_trials as f64, trials: n_trials, survivors, failures })
}

/// Mean `|v - v_cmd|` over every step of the surviving trials; absent when the
/// pass rate is below one half or nothing survived.
pub fn avg_speed_error(survivors: &[Trajectory], pass_rate: f64) -> Option<f64> {
    if pass_rate < 0.5 {
        return None;
    }
    let (sum, n) = survivors.iter().flat_map(|t| t.velocity.iter().zip(&t.command)).fold((0.0, 0usize), |(s, n), (v, c)| (s + (v - c).abs(), n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Walks in place, pushes the pelvis with `force` newtons along `direction`
/// (radians, +x towards +z) and reports survival through the recovery window.
/// A zero force applies no push.
pub fn survives_push(policy: &Net, cfg: &RunConfig, kind: LoadKind, force: f64, direction: f64) -> Result<bool> {
    let e = &cfg.eval;
    let mut env = Env::new(eval_env_config(cfg, kind))?;
    let settle = steps_for(e.push_settle);
    let total = settle + steps_for(e.push_duration + e.push_recovery);
    let r = rollout(policy, &mut env, total, |_| 0.0, |k, env| if k == settle && force > 0.0 { env.push(force, direction, e.push_duration) } else { Ok(()) })?;
    Ok(r.survived())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectionResult {
    pub angle_deg: f64,
    /// Largest force survived; `None` means the starting force already failed ("< 50 N").
    pub max_force: Option<f64>,
    /// Value entering the average (the convention for a first-force failure is start − step).
    pub contributed: f64,
    pub retest_force: f64,
    pub retest_survived: bool,
    /// Survived the maximum but failed the weaker re-test force.
    pub non_monotonic: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PushResult {
    pub directions: Vec<DirectionResult>,
    pub average: f64,
}

/// Line search upward from `start` given a survival oracle, then one re-test
/// a step below the result (below `start` when `start` already failed).
/// Returns `(largest survived, re-test force, re-test survived)`.
pub fn line_search(start: f64, step: f64, max: f64, mut survives: impl FnMut(f64) -> Result<bool>) -> Result<(Option<f64>, f64, bool)> {
    let mut best = None;
    let mut f = start;
    while f <= max + 1e-9 && survives(f)? {
        best = Some(f);
        f += step;
    }
    let retest = best.unwrap_or(start) - step;
    let retest_survived = retest <= 0.0 || survives(retest)?;
    Ok((best, retest, retest_survived))
}

pub fn push_force_search(policy: &Net, cfg: &RunConfig, kind: LoadKind) -> Result<PushResult> {
    let e = &cfg.eval;
    let n = e.push_directions;
    let directions: Vec<Result<DirectionResult>> = (0..n)
        .into_par_iter()
        .map(|k| {
            let angle_deg = 360.0 * k as f64 / n as f64;
            let dir = angle_deg.to_radians();
            let (best, retest_force, retest_survived) = line_search(e.push_start, e.push_step, e.push_max, |f| survives_push(policy, cfg, kind, f, dir))?;
            let contributed = best.unwrap_or(e.push_start - e.push_step);
            Ok(DirectionResult { angle_deg, max_force: best, contributed, retest_force, retest_survived, non_monotonic: best.is_some() && !retest_survived })
        })
        .collect();
    let directions = directions.into_iter().collect::<Result<Vec<_>>>()?;
    let average = directions.iter().map(|d| d.contributed).sum::<f64>() / n as f64;
    Ok(PushResult { directions, average })
}

/// Ramps the command from 0 to `speed` over `speed_ramp` seconds, then holds it.
pub fn sustains_speed(policy: &Net, cfg: &RunConfig, kind: LoadKind, speed: f64) -> Result<bool> {
    let e = &cfg.eval;
    let mut env = Env::new(eval_env_config(cfg, kind))?;
    let ramp = steps_for(e.speed_ramp);
    let total = ramp + steps_for(e.speed_hold);
    let r = rollout(policy, &mut env, total, |k| if k >= ramp || ramp == 0 { speed } else { speed * k as f64 / ramp as f64 }, |_, _| Ok(()))?;
    Ok(r.survived())
}

/// Ascending grid sweep from 0; the last sustained speed (0 if even standing fails).
pub fn max_speed_sweep(step: f64, mut sustains: impl FnMut(f64) -> Result<bool>) -> Result<f64> {
    let n = (MAX_SPEED / step + 1e-9).floor() as usize;
    let mut best = 0.0;
    for k in 0..=n {
        let v = ((k as f64 * step) * 1e6).round() / 1e6;
        if !sustains(v)? {
            break;
        }
        best = v;
    }
    Ok(best)
}

pub fn max_speed(policy: &Net, cfg: &RunConfig, kind: LoadKind) -> Result<f64> {
    max_speed_sweep(cfg.eval.speed_step, |v| sustains_speed(policy, cfg, kind, v))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhasePortrait {
    pub joint: String,
    pub time: Vec<f64>,
    pub angle: Vec<f64>,
    pub ang_vel: Vec<f64>,
}

impl PhasePortrait {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("time,angle_rad,ang_vel_rad_s\n");
        for i in 0..self.time.len() {
            s.push_str(&format!("{},{},{}\n", self.time[i], self.angle[i], self.ang_vel[i]));
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// `(angle, angular velocity)` of `joint` at every recorded policy step.
pub fn phase_portrait(trajectory: &Trajectory, joint: &str) -> Result<PhasePortrait> {
    if trajectory.is_empty() {
        return Err(Error::InvalidConfig("phase portrait needs a nonempty trajectory".into()));
    }
    let j = 3 + joint_index(joint)?;
    Ok(PhasePortrait { joint: joint.to_string(), time: trajectory.time.clone(), angle: trajectory.q.iter().map(|q| q[j]).collect(), ang_vel: trajectory.qd.iter().map(|qd| qd[j]).collect() })
}

/// Walks for `seconds` under command sets drawn from `master`, so different
/// policies evaluated with the same seed see the same command trace.
pub fn record_walk(policy: &Net, cfg: &RunConfig, kind: LoadKind, seconds: f64, master: u64) -> Result<TrialResult> {
    let mut rng = seed::rng(master, &[seed::EVAL, PROTO_PORTRAIT]);
    let steps = steps_for(seconds);
    let per_set = steps_for(cfg.eval.command_period * cfg.eval.commands_per_set as f64).max(1);
    let sets: Vec<CommandSet> = (0..steps.div_ceil(per_set).max(1)).map(|_| sample_command_set(&mut rng, &cfg.eval)).collect();
    let mut env = Env::new(eval_env_config(cfg, kind))?;
    rollout(
        policy,
        &mut env,
        steps,
        |k| {
            let set = &sets[k / per_set];
            set.command_at((k % per_set) as f64 * POLICY_DT)
        },
        |_, _| Ok(()),
    )
}

/// Walks at a constant command for `seconds`; used as a quick competence check.
pub fn walk_constant(policy: &Net, cfg: &RunConfig, kind: LoadKind, command: f64, seconds: f64) -> Result<TrialResult> {
    let mut env = Env::new(eval_env_config(cfg, kind))?;
    rollout(policy, &mut env, steps_for(seconds), |_| command, |_, _| Ok(()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub policy: String,
    pub load: LoadKind,
    pub seed: u64,
    pub trials: usize,
    pub command_note: String,
    pub pass_rate: Option<f64>,
    pub avg_speed_error: Option<f64>,
    pub push: Option<PushResult>,
    pub max_speed: Option<f64>,
}

pub fn evaluate(policy: &Net, label: &str, cfg: &RunConfig, kind: LoadKind, protocol: Protocol, trials: usize, master: u64) -> Result<EvalReport> {
    let mut report = EvalReport { policy: label.to_string(), load: kind, seed: master, trials, command_note: COMMAND_NOTE.to_string(), pass_rate: None, avg_speed_error: None, push: None, max_speed: None };
    if protocol.includes(Protocol::PassRate) {
        let pr = pass_rate(policy, cfg, kind, trials, master)?;
        let trajs: Vec<Trajectory> = pr.survivors.iter().map(|t| t.trajectory.clone()).collect();
        report.avg_speed_error = avg_speed_error(&trajs, pr.fraction);
        report.pass_rate = Some(pr.fraction);
    }
    if protocol.includes(Protocol::Push) {
        report.push = Some(push_force_search(policy, cfg, kind)?);
    }
    if protocol.includes(Protocol::MaxSpeed) {
        report.max_speed = Some(max_speed(policy, cfg, kind)?);
    }
    Ok(report)
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| format!("{x}"))
}

pub const SUMMARY_HEADER: &str = "policy,load,trials,pass_rate,avg_speed_error,push_avg_n,max_speed";

impl EvalReport {
    pub fn summary_row(&self) -> String {
        format!("{},{},{},{},{},{},{}", self.policy, self.load, self.trials, opt(self.pass_rate), opt(self.avg_speed_error), opt(self.push.as_ref().map(|p| p.average)), opt(self.max_speed))
    }
}
