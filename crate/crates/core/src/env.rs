//! Policy-rate environment shared by training and evaluation.

use crate::error::{Error, Result};
use crate::gait::{gait_params_for_speed, ClockState, GaitParams};
use crate::loads::{LoadKind, LoadSpec};
use crate::reward::{check_termination, compute_reward, RewardBreakdown, RewardConfig, RewardInputs, RewardMode, TerminationReason};
use crate::seed::Rng;
use crate::sim::{apply_impulse, observe, randomize_dynamics, Biped, DynRandRanges, ModelParams, PDGains, SimState, DT_INNER, N_INNER, NOMINAL_JOINTS, N_JOINTS, OBS_DIM};

/// 40 Hz.
pub const POLICY_DT: f64 = DT_INNER * N_INNER as f64;

/// Fixed per-entry scaling applied to raw observations before the network.
pub const OBS_SCALE: [f64; OBS_DIM] = [1.0, 0.2, 0.5, 0.5, 1.0, 1.0, 1.0, 1.0, 0.1, 0.1, 0.1, 0.1, 1.0, 1.0, 0.5];

/// Setpoints outside these bounds are clamped before reaching the PD loop.
pub const SETPOINT_LIMITS: [[f64; 2]; N_JOINTS] = [[-1.5, 1.5], [-2.5, 0.2], [-1.5, 1.5], [-2.5, 0.2]];

pub fn nominal_action() -> Vec<f64> {
    NOMINAL_JOINTS.to_vec()
}

#[derive(Clone, Debug)]
pub struct EnvConfig {
    pub model: ModelParams<f64>,
    pub gains: PDGains<f64>,
    pub load: LoadSpec<f64>,
    pub reward: RewardConfig,
    pub mode: RewardMode,
    /// Dynamics randomization applied at every reset; `None` keeps the nominal model.
    pub randomize: Option<DynRandRanges<f64>>,
}

#[derive(Clone, Debug)]
pub struct StepResult {
    pub obs: Vec<f64>,
    pub reward: RewardBreakdown<f64>,
    pub termination: TerminationReason,
}

#[derive(Clone, Debug)]
pub struct Env {
    cfg: EnvConfig,
    model: Biped<f64>,
    state: SimState<f64>,
    clock: ClockState<f64>,
    gait: GaitParams<f64>,
    command: f64,
    prev_action: [f64; N_JOINTS],
    steps: usize,
}

impl Env {
    pub fn new(cfg: EnvConfig) -> Result<Self> {
        cfg.gains.validate()?;
        let model = Biped::new(cfg.model, cfg.load)?;
        let state = model.standing_state(&NOMINAL_JOINTS);
        let gait = gait_params_for_speed(0.0);
        Ok(Self { clock: ClockState::new(gait.cycle_time), gait, model, state, command: 0.0, prev_action: NOMINAL_JOINTS, steps: 0, cfg })
    }

    pub fn kind(&self) -> LoadKind {
        self.cfg.load.kind()
    }

    pub fn model(&self) -> &Biped<f64> {
        &self.model
    }

    pub fn state(&self) -> &SimState<f64> {
        &self.state
    }

    pub fn command(&self) -> f64 {
        self.command
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn time(&self) -> f64 {
        self.state.time
    }

    /// Standing start with fresh (optionally randomized) dynamics.
    pub fn reset(&mut self, rng: &mut Rng, command: f64) -> Result<Vec<f64>> {
        let params = match &self.cfg.randomize {
            Some(r) => randomize_dynamics(&self.cfg.model, r, rng),
            None => self.cfg.model,
        };
        self.model = Biped::new(params, self.cfg.load)?;
        self.state = self.model.standing_state(&NOMINAL_JOINTS);
        self.prev_action = NOMINAL_JOINTS;
        self.steps = 0;
        self.gait = gait_params_for_speed(command);
        self.clock = ClockState::new(self.gait.cycle_time);
        self.command = command;
        Ok(self.observation())
    }

    /// New speed command; the gait schedule follows and the clock keeps its cycle fraction.
    pub fn set_command(&mut self, command: f64) {
        self.command = command;
        self.gait = gait_params_for_speed(command);
        self.clock.retime(self.gait.cycle_time);
    }

    /// Starts a pelvis push at the current time.
    pub fn push(&mut self, force: f64, direction: f64, duration: f64) -> Result<()> {
        self.state = apply_impulse(&self.state, force, direction, duration)?;
        Ok(())
    }

    /// Scaled proprioceptive observation.
    pub fn observation(&self) -> Vec<f64> {
        let mut obs = observe(&self.state, &self.clock, self.command);
        for (o, s) in obs.iter_mut().zip(OBS_SCALE) {
            *o *= s;
        }
        obs
    }

    /// Applies joint setpoints for one policy period.
    pub fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        if action.len() != N_JOINTS {
            return Err(Error::Dimension { expected: N_JOINTS, got: action.len() });
        }
        let mut set = [0.0; N_JOINTS];
        for i in 0..N_JOINTS {
            set[i] = action[i].clamp(SETPOINT_LIMITS[i][0], SETPOINT_LIMITS[i][1]);
        }
        self.steps += 1;
        let next = match self.model.step(&self.state, &set, &self.cfg.gains, DT_INNER, N_INNER) {
            Ok(s) => s,
            Err(Error::Divergence { .. }) => {
                return Ok(StepResult { obs: self.observation(), reward: RewardBreakdown::default(), termination: TerminationReason::Divergence });
            }
            Err(e) => return Err(e),
        };
        self.state = next;
        self.clock.advance(POLICY_DT);
        let inputs = RewardInputs { model: &self.model, state: &self.state, action: &set, prev_action: &self.prev_action, command: self.command, clock: &self.clock, gait: &self.gait };
        let reward = compute_reward(&inputs, &self.cfg.reward, self.cfg.mode)?;
        self.prev_action = set;
        let termination = if reward.total.is_finite() { check_termination(&self.state, &reward, &self.cfg.load, &self.cfg.reward) } else { TerminationReason::Divergence };
        Ok(StepResult { obs: self.observation(), reward, termination })
    }
}
