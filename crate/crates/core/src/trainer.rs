//! PPO with recurrent whole-episode minibatches.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Init, RunConfig};
use crate::env::{nominal_action, Env, EnvConfig};
use crate::error::{Error, Result};
use crate::loads::LoadKind;
use crate::policy::{sample_action, HiddenState, RecurrentActorCritic};
use crate::reward::TerminationReason;
use crate::seed;

type Net = RecurrentActorCritic<f64>;

/// One collected episode (possibly cut short by the step budget).
#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub kind: LoadKind,
    pub obs: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub logp: Vec<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    /// Set when the last step terminated the episode (no bootstrap).
    pub terminal: Option<TerminationReason>,
    /// Critic value after the last step when the episode was truncated.
    pub bootstrap_value: Option<f64>,
    /// Ended by the episode length cap or by termination, not by the worker's budget.
    pub complete: bool,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RolloutBatch {
    pub episodes: Vec<Episode>,
    /// Timesteps collected per model, in configured order.
    pub steps_per_kind: Vec<(LoadKind, usize)>,
    pub total_steps: usize,
}

impl RolloutBatch {
    /// Mean return and length over complete episodes (all episodes if none completed).
    pub fn episode_stats(&self) -> (f64, f64) {
        let complete: Vec<&Episode> = self.episodes.iter().filter(|e| e.complete).collect();
        let eps: Vec<&Episode> = if complete.is_empty() { self.episodes.iter().collect() } else { complete };
        if eps.is_empty() {
            return (0.0, 0.0);
        }
        let n = eps.len() as f64;
        (eps.iter().map(|e| e.total_reward()).sum::<f64>() / n, eps.iter().map(|e| e.len() as f64).sum::<f64>() / n)
    }

    pub fn divergence_fraction(&self) -> f64 {
        if self.episodes.is_empty() {
            return 0.0;
        }
        self.episodes.iter().filter(|e| e.terminal == Some(TerminationReason::Divergence)).count() as f64 / self.episodes.len() as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearningCurvePoint {
    pub iteration: usize,
    pub timesteps: usize,
    pub mean_reward: f64,
    pub mean_ep_len: f64,
}

/// Splits `total` into `parts` counts differing by at most one.
pub fn even_split(total: usize, parts: usize) -> Vec<usize> {
    (0..parts).map(|i| total / parts + usize::from(i < total % parts)).collect()
}

pub fn env_config(cfg: &RunConfig, kind: LoadKind) -> EnvConfig {
    EnvConfig {
        model: cfg.model,
        gains: cfg.gains,
        load: cfg.loads.spec(kind),
        reward: cfg.reward,
        mode: cfg.train.reward_mode,
        randomize: cfg.train.randomize_dynamics.then_some(cfg.randomization),
    }
}

/// Critic outputs are in units of the largest discounted return, so value
/// targets stay O(1) whatever the reward scale.
pub fn value_scale(cfg: &RunConfig) -> f64 {
    cfg.reward.max_reward(true) / (1.0 - cfg.train.gamma).max(1e-3)
}

fn sample_command(rng: &mut seed::Rng, range: [f64; 2]) -> f64 {
    if range[1] > range[0] {
        rng.random_range(range[0]..=range[1])
    } else {
        range[0]
    }
}

/// Runs one worker until it has produced exactly `quota` timesteps.
fn run_worker(policy: &Net, cfg: &RunConfig, kind: LoadKind, quota: usize, rng: &mut seed::Rng) -> Result<Vec<Episode>> {
    let tc = &cfg.train;
    let vs = value_scale(cfg);
    let mut env = Env::new(env_config(cfg, kind))?;
    let mut episodes = Vec::new();
    let mut left = quota;
    while left > 0 {
        let command = sample_command(rng, tc.command_range);
        let mut obs = env.reset(rng, command)?;
        let mut hidden = policy.initial_state();
        let mut ep = Episode { kind, obs: Vec::new(), actions: Vec::new(), logp: Vec::new(), rewards: Vec::new(), values: Vec::new(), terminal: None, bootstrap_value: None, complete: false };
        loop {
            if ep.len() > 0 && ep.len() % tc.command_interval == 0 {
                env.set_command(sample_command(rng, tc.command_range));
                obs = env.observation();
            }
            let (mean, value) = policy.step(&obs, &mut hidden)?;
            let (action, logp) = sample_action(&mean, policy.log_std(), rng);
            let out = env.step(&action)?;
            ep.obs.push(std::mem::replace(&mut obs, out.obs));
            ep.actions.push(action);
            ep.logp.push(logp);
            ep.rewards.push(out.reward.total);
            ep.values.push(value * vs);
            left -= 1;
            if out.termination.is_terminal() {
                ep.terminal = Some(out.termination);
                ep.complete = true;
                break;
            }
            if ep.len() >= tc.episode_steps || left == 0 {
                ep.complete = ep.len() >= tc.episode_steps;
                let (_, v) = policy.step(&obs, &mut hidden)?;
                ep.bootstrap_value = Some(v * vs);
                break;
            }
        }
        episodes.push(ep);
    }
    Ok(episodes)
}

/// Collects exactly `steps_per_iteration` timesteps split evenly over the
/// configured models and, within a model, over its workers. Worker `w` of
/// iteration `i` draws from `seed::derive(master, [ROLLOUT, i, w])`; results
/// are merged in worker order, so thread count never changes the batch.
pub fn collect_rollouts(policy: &Net, cfg: &RunConfig, iteration: usize) -> Result<RolloutBatch> {
    let tc = &cfg.train;
    if tc.models.is_empty() {
        return Err(Error::InvalidConfig("no models to collect from".into()));
    }
    let per_kind = even_split(tc.steps_per_iteration, tc.models.len());
    let mut jobs = Vec::new();
    for (k, (&kind, &steps)) in tc.models.iter().zip(&per_kind).enumerate() {
        for (w, quota) in even_split(steps, tc.workers_per_model).into_iter().enumerate() {
            jobs.push((k * tc.workers_per_model + w, kind, quota));
        }
    }
    let results: Vec<Result<Vec<Episode>>> = jobs
        .par_iter()
        .map(|&(w, kind, quota)| {
            let mut rng = seed::rng(cfg.seed, &[seed::ROLLOUT, iteration as u64, w as u64]);
            run_worker(policy, cfg, kind, quota, &mut rng)
        })
        .collect();
    let mut episodes = Vec::new();
    for r in results {
        episodes.extend(r?);
    }
    let steps_per_kind: Vec<(LoadKind, usize)> = tc.models.iter().map(|&k| (k, episodes.iter().filter(|e| e.kind == k).map(Episode::len).sum())).collect();
    let total_steps = steps_per_kind.iter().map(|s| s.1).sum();
    Ok(RolloutBatch { episodes, steps_per_kind, total_steps })
}

/// Generalized advantage estimates and value targets for one episode.
/// `bootstrap` is the value after the last step, `None` for a terminal step.
pub fn compute_gae(rewards: &[f64], values: &[f64], bootstrap: Option<f64>, gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut next_value = bootstrap.unwrap_or(0.0);
    let mut running = 0.0;
    for t in (0..n).rev() {
        let delta = rewards[t] + gamma * next_value - values[t];
        running = delta + gamma * lambda * running;
        adv[t] = running;
        next_value = values[t];
    }
    let targets = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, targets)
}

/// Shifts and scales to zero mean and unit (population) variance.
pub fn normalize_advantages(adv: &mut [f64]) {
    let n = adv.len() as f64;
    if adv.len() < 2 {
        return;
    }
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt().max(1e-8);
    for a in adv.iter_mut() {
        *a = (*a - mean) / std;
    }
}

/// `min(r A, clip(r, 1-ε, 1+ε) A)`.
pub fn ppo_surrogate(ratio: f64, advantage: f64, eps: f64) -> f64 {
    (ratio * advantage).min(ratio.clamp(1.0 - eps, 1.0 + eps) * advantage)
}

/// `d surrogate / d ratio`: `A` on the unclipped branch, 0 where clipping is active.
pub fn ppo_surrogate_grad(ratio: f64, advantage: f64, eps: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - eps, 1.0 + eps);
    if ratio * advantage <= clipped * advantage {
        advantage
    } else {
        0.0
    }
}

/// Scales `grad` so its Euclidean norm is at most `max_norm`; returns the original norm.
pub fn clip_grad_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    /// Descent step on `params` along `grad`.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            params[i] -= self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + self.eps);
        }
    }
}

/// Per-step training targets derived from a batch.
#[derive(Clone, Debug)]
pub struct PreparedBatch {
    pub advantages: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
}

pub fn prepare_batch(batch: &RolloutBatch, gamma: f64, lambda: f64) -> PreparedBatch {
    let mut advantages = Vec::with_capacity(batch.episodes.len());
    let mut targets = Vec::with_capacity(batch.episodes.len());
    for ep in &batch.episodes {
        let (a, t) = compute_gae(&ep.rewards, &ep.values, ep.bootstrap_value, gamma, lambda);
        advantages.push(a);
        targets.push(t);
    }
    let mut flat: Vec<f64> = advantages.iter().flatten().copied().collect();
    normalize_advantages(&mut flat);
    let mut it = flat.into_iter();
    for ep in advantages.iter_mut() {
        for a in ep.iter_mut() {
            *a = it.next().expect("same length");
        }
    }
    PreparedBatch { advantages, targets }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct UpdateStats {
    pub surrogate: f64,
    pub value_loss: f64,
    pub grad_norm: f64,
    pub clip_fraction: f64,
}

/// Loss and gradient of one episode: `-(surrogate) + c_v ½(V - y)²` with
/// values in critic units, each step weighted by `scale`.
fn episode_gradient(policy: &Net, ep: &Episode, adv: &[f64], targets: &[f64], clip: f64, value_coef: f64, value_scale: f64, scale: f64) -> Result<(Vec<f64>, UpdateStats)> {
    let trace = policy.forward_sequence(&ep.obs)?;
    let mut grad = vec![0.0; policy.params().len()];
    let n = ep.len();
    let mut d_mean = vec![vec![0.0; ep.actions[0].len()]; n];
    let mut d_value = vec![0.0; n];
    let mut stats = UpdateStats::default();
    for t in 0..n {
        let logp = policy.log_prob(&trace.means[t], &ep.actions[t]);
        let ratio = (logp - ep.logp[t]).exp();
        stats.surrogate += scale * ppo_surrogate(ratio, adv[t], clip);
        if (ratio - 1.0).abs() > clip {
            stats.clip_fraction += scale;
        }
        let w = -scale * ppo_surrogate_grad(ratio, adv[t], clip) * ratio;
        if w != 0.0 {
            policy.logp_seeds(&trace.means[t], &ep.actions[t], w, &mut d_mean[t], &mut grad);
        }
        let err = trace.values[t] - targets[t] / value_scale;
        stats.value_loss += scale * 0.5 * err * err;
        d_value[t] = scale * value_coef * err;
    }
    policy.backward(&trace, &d_mean, &d_value, &mut grad)?;
    Ok((grad, stats))
}

/// Clipped-surrogate objective of `policy` on the whole batch (mean over steps).
pub fn batch_surrogate(policy: &Net, batch: &RolloutBatch, prep: &PreparedBatch, clip: f64) -> Result<f64> {
    let mut total = 0.0;
    for (ep, adv) in batch.episodes.iter().zip(&prep.advantages) {
        let trace = policy.forward_sequence(&ep.obs)?;
        for t in 0..ep.len() {
            let ratio = (policy.log_prob(&trace.means[t], &ep.actions[t]) - ep.logp[t]).exp();
            total += ppo_surrogate(ratio, adv[t], clip);
        }
    }
    Ok(total / batch.total_steps.max(1) as f64)
}

/// Epochs of minibatch updates over whole episodes. On a non-finite loss or
/// gradient the parameters are restored and an error is returned.
pub fn ppo_update(policy: &mut Net, opt: &mut Adam, batch: &RolloutBatch, prep: &PreparedBatch, cfg: &RunConfig, iteration: usize) -> Result<UpdateStats> {
    let tc = &cfg.train;
    let backup = policy.params().to_vec();
    let vs = value_scale(cfg);
    let mut rng = seed::rng(cfg.seed, &[seed::SHUFFLE, iteration as u64]);
    let mut order: Vec<usize> = (0..batch.episodes.len()).filter(|&i| !batch.episodes[i].is_empty()).collect();
    let mut last = UpdateStats::default();
    for _ in 0..tc.epochs {
        order.shuffle(&mut rng);
        let groups = even_split(order.len(), tc.minibatches.min(order.len().max(1)));
        let mut start = 0;
        for size in groups {
            let idx = &order[start..start + size];
            start += size;
            let steps: usize = idx.iter().map(|&i| batch.episodes[i].len()).sum();
            if steps == 0 {
                continue;
            }
            let scale = 1.0 / steps as f64;
            let net: &Net = policy;
            let parts: Vec<Result<(Vec<f64>, UpdateStats)>> = idx.par_iter().map(|&i| episode_gradient(net, &batch.episodes[i], &prep.advantages[i], &prep.targets[i], tc.clip, tc.value_coef, vs, scale)).collect();
            let mut grad = vec![0.0; policy.params().len()];
            let mut stats = UpdateStats::default();
            for p in parts {
                let (g, s) = p?;
                grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
                stats.surrogate += s.surrogate;
                stats.value_loss += s.value_loss;
                stats.clip_fraction += s.clip_fraction;
            }
            policy.add_log_std_grad(-tc.entropy_coef, &mut grad);
            if !(stats.surrogate.is_finite() && stats.value_loss.is_finite()) || grad.iter().any(|g| !g.is_finite()) {
                policy.set_params(backup)?;
                return Err(Error::TrainingFailed(format!("non-finite loss in update at iteration {iteration}")));
            }
            stats.grad_norm = clip_grad_norm(&mut grad, tc.grad_clip);
            opt.step(policy.params_mut(), &grad);
            last = stats;
        }
    }
    Ok(last)
}

/// Parameters of a previously trained policy, checked against `shape`.
pub fn bootstrap_init(path: &Path, shape: &crate::policy::NetShape) -> Result<Net> {
    Net::load_compatible(path, shape)
}

pub fn initial_policy(cfg: &RunConfig) -> Result<Net> {
    let shape = cfg.network.shape();
    match &cfg.train.init {
        Init::Scratch => {
            let mut rng = seed::rng(cfg.seed, &[seed::INIT]);
            Net::new(shape, &nominal_action(), cfg.network.init_std, &mut rng)
        }
        Init::Checkpoint(p) => bootstrap_init(p, &shape),
    }
}

pub fn write_curve(path: &Path, curve: &[LearningCurvePoint]) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut text = String::from("iteration,timesteps,mean_reward,mean_ep_len\n");
    for p in curve {
        text.push_str(&format!("{},{},{},{}\n", p.iteration, p.timesteps, p.mean_reward, p.mean_ep_len));
    }
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

pub struct TrainOutcome {
    pub policy: Net,
    pub curve: Vec<LearningCurvePoint>,
    pub final_checkpoint: Option<PathBuf>,
}

/// Collect, estimate advantages, update; repeated `iterations` times.
/// With `out`, writes `checkpoints/iter_NNNNN.ckpt` every `checkpoint_every`
/// iterations, `policy.ckpt` at the end and `learning_curve.csv` after every
/// iteration. `progress` sees each curve point as it is produced.
pub fn train(cfg: &RunConfig, out: Option<&Path>, mut progress: impl FnMut(&LearningCurvePoint)) -> Result<TrainOutcome> {
    cfg.validate()?;
    let tc = &cfg.train;
    let mut policy = initial_policy(cfg)?;
    let mut opt = Adam::new(policy.params().len(), tc.learning_rate);
    let ckpt_dir = out.map(|o| o.join("checkpoints"));
    if let Some(d) = &ckpt_dir {
        std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
        let p = d.join("iter_00000.ckpt");
        policy.save(&p, cfg.seed)?;
    }
    let mut curve = Vec::with_capacity(tc.iterations);
    let mut timesteps = 0;
    for it in 0..tc.iterations {
        let batch = collect_rollouts(&policy, cfg, it)?;
        if batch.divergence_fraction() > 0.5 {
            return Err(Error::TrainingFailed(format!("{:.0}% of episodes diverged at iteration {it}", 100.0 * batch.divergence_fraction())));
        }
        timesteps += batch.total_steps;
        let (mean_reward, mean_ep_len) = batch.episode_stats();
        let point = LearningCurvePoint { iteration: it, timesteps, mean_reward, mean_ep_len };
        progress(&point);
        curve.push(point);
        let prep = prepare_batch(&batch, tc.gamma, tc.lambda);
        ppo_update(&mut policy, &mut opt, &batch, &prep, cfg, it)?;
        if let Some(o) = out {
            write_curve(&o.join("learning_curve.csv"), &curve)?;
        }
        if let Some(d) = &ckpt_dir {
            if (it + 1) % tc.checkpoint_every == 0 {
                policy.save(&d.join(format!("iter_{:05}.ckpt", it + 1)), cfg.seed)?;
            }
        }
    }
    let mut final_checkpoint = None;
    if let Some(o) = out {
        write_curve(&o.join("learning_curve.csv"), &curve)?;
        let p = o.join("policy.ckpt");
        policy.save(&p, cfg.seed)?;
        final_checkpoint = Some(p);
    }
    Ok(TrainOutcome { policy, curve, final_checkpoint })
}

/// Rolls the policy with mean actions from a fresh hidden state.
pub fn deterministic_action(policy: &Net, obs: &[f64], hidden: &mut HiddenState<f64>) -> Result<Vec<f64>> {
    Ok(policy.step(obs, hidden)?.0)
}
