//! Run configuration as read from and written back to JSON.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loads::{LoadKind, LoadParams};
use crate::policy::NetShape;
use crate::reward::{RewardConfig, RewardMode};
use crate::sim::{DynRandRanges, ModelParams, PDGains, N_JOINTS, OBS_DIM};

/// Where training starts from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Init {
    Scratch,
    Checkpoint(PathBuf),
}

impl Init {
    /// `scratch` or a checkpoint path.
    pub fn parse(s: &str) -> Self {
        if s == "scratch" {
            Init::Scratch
        } else {
            Init::Checkpoint(PathBuf::from(s))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub width: usize,
    pub layers: usize,
    /// Initial action standard deviation (rad).
    pub init_std: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self { width: 32, layers: 2, init_std: 0.2 }
    }
}

impl NetworkConfig {
    pub fn shape(&self) -> NetShape {
        NetShape { obs_dim: OBS_DIM, act_dim: N_JOINTS, width: self.width, layers: self.layers }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub steps_per_iteration: usize,
    pub iterations: usize,
    pub clip: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub epochs: usize,
    /// Minibatches per epoch; each is a set of whole episodes.
    pub minibatches: usize,
    pub learning_rate: f64,
    pub grad_clip: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
    /// Policy steps before an episode is truncated.
    pub episode_steps: usize,
    /// Policy steps between speed-command resamples.
    pub command_interval: usize,
    /// Uniform speed-command range (m/s).
    pub command_range: [f64; 2],
    /// Rollout workers per model.
    pub workers_per_model: usize,
    pub checkpoint_every: usize,
    pub models: Vec<LoadKind>,
    pub reward_mode: RewardMode,
    pub init: Init,
    pub randomize_dynamics: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps_per_iteration: 4096,
            iterations: 300,
            clip: 0.2,
            gamma: 0.99,
            lambda: 0.95,
            epochs: 4,
            minibatches: 4,
            learning_rate: 1e-3,
            grad_clip: 0.5,
            value_coef: 0.5,
            entropy_coef: 0.0,
            episode_steps: 300,
            command_interval: 100,
            command_range: [0.0, 4.0],
            workers_per_model: 4,
            checkpoint_every: 50,
            models: vec![LoadKind::Unloaded],
            reward_mode: RewardMode::Specialized,
            init: Init::Scratch,
            randomize_dynamics: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return bad("clip must be in (0, 1)");
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) || !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return bad("gamma and lambda must be in (0, 1]");
        }
        if self.steps_per_iteration == 0 || self.epochs == 0 || self.minibatches == 0 || self.episode_steps == 0 || self.command_interval == 0 || self.workers_per_model == 0 || self.checkpoint_every == 0 {
            return bad("counts must be positive");
        }
        if !(self.learning_rate > 0.0) || !(self.grad_clip > 0.0) || !(self.value_coef >= 0.0) || !(self.entropy_coef >= 0.0) {
            return bad("learning_rate and grad_clip must be positive, coefficients non-negative");
        }
        let [lo, hi] = self.command_range;
        if !(0.0 <= lo && lo <= hi && hi <= 4.0) {
            return bad("command_range must lie within [0, 4]");
        }
        if self.models.is_empty() {
            return bad("models must not be empty");
        }
        if self.steps_per_iteration < self.models.len() * self.workers_per_model {
            return bad("steps_per_iteration must cover every worker");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub trials: usize,
    /// Seconds each command is held.
    pub command_period: f64,
    pub commands_per_set: usize,
    /// Magnitude range of successive command changes (m/s).
    pub command_delta: [f64; 2],
    pub push_directions: usize,
    pub push_start: f64,
    pub push_step: f64,
    pub push_max: f64,
    pub push_duration: f64,
    pub push_settle: f64,
    pub push_recovery: f64,
    pub speed_step: f64,
    pub speed_ramp: f64,
    pub speed_hold: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            trials: 200,
            command_period: 2.5,
            commands_per_set: 4,
            command_delta: [0.5, 2.0],
            push_directions: 36,
            push_start: 50.0,
            push_step: 10.0,
            push_max: 1000.0,
            push_duration: 0.2,
            push_settle: 2.0,
            push_recovery: 3.0,
            speed_step: 0.1,
            speed_ramp: 3.0,
            speed_hold: 5.0,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.trials > 0
            && self.command_period > 0.0
            && self.commands_per_set > 0
            && 0.0 < self.command_delta[0]
            && self.command_delta[0] <= self.command_delta[1]
            && self.push_directions > 0
            && self.push_start > 0.0
            && self.push_step > 0.0
            && self.push_max >= self.push_start
            && self.push_duration > 0.0
            && self.push_settle >= 0.0
            && self.push_recovery > 0.0
            && self.speed_step > 0.0
            && self.speed_ramp >= 0.0
            && self.speed_hold > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig("eval settings out of range".into()))
        }
    }
}

/// Everything a run needs; written back fully resolved next to its outputs.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub network: NetworkConfig,
    pub train: TrainConfig,
    pub model: ModelParams<f64>,
    pub gains: PDGains<f64>,
    pub randomization: DynRandRanges<f64>,
    pub loads: LoadParams<f64>,
    pub reward: RewardConfig,
    pub eval: EvalConfig,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.network.shape().validate()?;
        if !(self.network.init_std > 0.0) {
            return Err(Error::InvalidConfig("network.init_std must be positive".into()));
        }
        self.train.validate()?;
        self.eval.validate()?;
        self.model.validate()?;
        self.gains.validate()?;
        self.randomization.validate()?;
        for kind in LoadKind::ALL {
            self.loads.spec(kind).validate()?;
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}
