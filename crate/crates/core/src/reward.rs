//! Per-step reward and termination.
//!
//! Every component maps an error to `(0, 1]` through `exp(-scale * err²)`; the
//! total is the weighted sum, so it is bounded by `[0, Σ weights]`.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::gait::{clock_weight, ClockState, Foot, GaitParams};
use crate::loads::{box_dropped, box_tray_distance, LoadSpec, PITCH};
use crate::scalar::Real;
use crate::sim::{Biped, SimState, N_JOINTS};

/// Whether the tray-box distance term is part of the reward.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardMode {
    /// Load-specific reward (adds the box term on the tray-box model).
    Specialized,
    /// Base walking reward on every model.
    General,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardWeights {
    pub velocity: f64,
    pub orientation: f64,
    /// Split evenly between pelvis acceleration, torque and action difference.
    pub smoothing: f64,
    pub foot: f64,
    pub box_distance: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self { velocity: 0.30, orientation: 0.10, smoothing: 0.20, foot: 0.35, box_distance: 0.05 }
    }
}

/// Kernel scales `α` in `exp(-α err²)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardScales {
    /// per (m/s)²
    pub velocity: f64,
    /// per rad²
    pub orientation: f64,
    /// per (m/s²)²
    pub pelvis_accel: f64,
    /// per (N·m)², summed over joints
    pub torque: f64,
    /// per rad², summed over joints
    pub action_diff: f64,
    /// per (normal force / robot weight)²
    pub foot_force: f64,
    /// per (m/s)²
    pub foot_speed: f64,
    /// per m²
    pub box_distance: f64,
}

impl Default for RewardScales {
    fn default() -> Self {
        Self {
            velocity: 4.0,
            orientation: 10.0,
            pelvis_accel: 0.01,
            torque: 2.0e-5,
            action_diff: 5.0,
            foot_force: 5.0,
            foot_speed: 5.0,
            box_distance: 50.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    pub weights: RewardWeights,
    pub scales: RewardScales,
    /// m; pelvis below this height ends the episode.
    pub height_floor: f64,
    /// Fraction of the maximum per-step reward below which the episode ends.
    pub reward_floor_fraction: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self { weights: RewardWeights::default(), scales: RewardScales::default(), height_floor: 0.4, reward_floor_fraction: 0.2 }
    }
}

impl RewardConfig {
    pub fn box_term_active(&self, spec_kind_is_tray: bool, mode: RewardMode) -> bool {
        spec_kind_is_tray && mode == RewardMode::Specialized
    }

    /// Maximum attainable per-step reward.
    pub fn max_reward(&self, with_box: bool) -> f64 {
        let w = &self.weights;
        w.velocity + w.orientation + w.smoothing + w.foot + if with_box { w.box_distance } else { 0.0 }
    }
}

/// Unweighted kernel values in `(0, 1]` and their weighted total.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown<T> {
    pub velocity: T,
    pub orientation: T,
    pub pelvis_accel: T,
    pub torque: T,
    pub action_diff: T,
    pub foot: T,
    pub box_distance: Option<T>,
    pub total: T,
}

impl<T: Real> RewardBreakdown<T> {
    pub fn weighted_sum(&self, w: &RewardWeights) -> T {
        let third = T::of(w.smoothing / 3.0);
        T::of(w.velocity) * self.velocity
            + T::of(w.orientation) * self.orientation
            + third * (self.pelvis_accel + self.torque + self.action_diff)
            + T::of(w.foot) * self.foot
            + self.box_distance.map_or(T::zero(), |b| T::of(w.box_distance) * b)
    }
}

#[inline]
fn kernel<T: Real>(scale: f64, err2: T) -> T {
    (-T::of(scale) * err2).exp()
}

/// Everything the reward needs about the step just taken.
pub struct RewardInputs<'a, T> {
    pub model: &'a Biped<T>,
    pub state: &'a SimState<T>,
    pub action: &'a [T; N_JOINTS],
    pub prev_action: &'a [T; N_JOINTS],
    pub command: T,
    pub clock: &'a ClockState<T>,
    pub gait: &'a GaitParams<T>,
}

pub fn compute_reward<T: Real>(inp: &RewardInputs<'_, T>, cfg: &RewardConfig, mode: RewardMode) -> Result<RewardBreakdown<T>> {
    let s = &cfg.scales;
    let state = inp.state;
    let sq = |v: T| v * v;

    let velocity = kernel(s.velocity, sq(state.qd[0] - inp.command));
    let orientation = kernel(s.orientation, sq(state.q[PITCH]));
    let a = state.diag.torso_accel;
    let pelvis_accel = kernel(s.pelvis_accel, sq(a[0]) + sq(a[1]));
    let torque = kernel(s.torque, state.diag.torques.iter().map(|&t| sq(t)).sum());
    let action_diff = kernel(s.action_diff, inp.action.iter().zip(inp.prev_action).map(|(&x, &y)| sq(x - y)).sum());

    let weight = inp.model.total_mass() * inp.model.params.gravity;
    let speeds = inp.model.foot_velocities(state);
    let mut foot = T::zero();
    for (i, side) in [Foot::Left, Foot::Right].into_iter().enumerate() {
        let swing = clock_weight(inp.clock.phase, inp.gait, side);
        // Weightless models have nothing to normalize by; use newtons directly.
        let force = if weight > T::zero() { state.diag.foot_forces[i][1] / weight } else { state.diag.foot_forces[i][1] };
        let speed2 = sq(speeds[i][0]) + sq(speeds[i][1]);
        foot += swing * kernel(s.foot_force, sq(force)) + (T::one() - swing) * kernel(s.foot_speed, speed2);
    }
    foot *= T::of(0.5);

    let box_distance = match (&inp.model.load_spec, &state.load, mode) {
        (spec @ LoadSpec::TrayBox(_), Some(load), RewardMode::Specialized) => Some(kernel(s.box_distance, sq(box_tray_distance(load, spec)?))),
        _ => None,
    };

    let mut out = RewardBreakdown { velocity, orientation, pelvis_accel, torque, action_diff, foot, box_distance, total: T::zero() };
    out.total = out.weighted_sum(&cfg.weights);
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TerminationReason {
    None,
    Fell,
    RewardFloor,
    BoxDropped,
    Divergence,
}

impl TerminationReason {
    pub fn is_terminal(self) -> bool {
        self != TerminationReason::None
    }

    /// Physical failure (what counts as falling in evaluation).
    pub fn is_failure(self) -> bool {
        matches!(self, TerminationReason::Fell | TerminationReason::BoxDropped | TerminationReason::Divergence)
    }
}

/// Height, box and reward-floor checks in that priority order. Divergence is
/// reported by the simulator itself and mapped by the caller.
pub fn check_termination<T: Real>(state: &SimState<T>, reward: &RewardBreakdown<T>, spec: &LoadSpec<T>, cfg: &RewardConfig) -> TerminationReason {
    if state.torso_height() < T::of(cfg.height_floor) {
        return TerminationReason::Fell;
    }
    if let (LoadSpec::TrayBox(_), Some(load)) = (spec, &state.load) {
        if box_dropped(load, spec).unwrap_or(false) {
            return TerminationReason::BoxDropped;
        }
    }
    let max = cfg.max_reward(reward.box_distance.is_some());
    if reward.total < T::of(cfg.reward_floor_fraction * max) {
        return TerminationReason::RewardFloor;
    }
    TerminationReason::None
}
