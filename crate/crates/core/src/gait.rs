//! Gait clock and the speed-to-gait schedule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{clamp, Real};

/// Share of the swing duration spent ramping in and out of swing, split
/// evenly between the ramp up at lift-off and the ramp down at touchdown.
pub const SWING_TRANSITION_FRACTION: f64 = 0.2;
pub const PHASE_OFFSET: f64 = 0.5;
pub const MAX_SPEED: f64 = 4.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Foot {
    Left,
    Right,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaitParams<T> {
    /// Fraction of the cycle a foot spends in swing.
    pub swing_ratio: T,
    /// Seconds per full cycle.
    pub cycle_time: T,
    /// Fractional shift between the feet; always one half.
    pub phase_offset: T,
}

impl<T: Real> GaitParams<T> {
    pub fn new(swing_ratio: T, cycle_time: T) -> Result<Self> {
        if !(swing_ratio > T::zero() && swing_ratio < T::one()) {
            return Err(Error::InvalidParams("swing ratio must lie in (0, 1)".into()));
        }
        if !(cycle_time > T::zero()) {
            return Err(Error::InvalidParams("cycle time must be positive".into()));
        }
        Ok(Self { swing_ratio, cycle_time, phase_offset: T::of(PHASE_OFFSET) })
    }

    pub fn step_frequency(&self) -> T {
        T::one() / self.cycle_time
    }
}

/// Gait schedule: 40 % swing at 1 Hz up to 1 m/s, linear to 80 % at 1.5 Hz at
/// 3 m/s, constant beyond. Speeds are clamped to `[0, 4]`.
pub fn gait_params_for_speed<T: Real>(speed: T) -> GaitParams<T> {
    let s = clamp(speed, T::zero(), T::of(MAX_SPEED));
    let t = clamp((s - T::one()) / T::of(2.0), T::zero(), T::one());
    let swing_ratio = T::of(0.4) + T::of(0.4) * t;
    let freq = T::one() + T::of(0.5) * t;
    GaitParams { swing_ratio, cycle_time: T::one() / freq, phase_offset: T::of(PHASE_OFFSET) }
}

/// Position in the gait cycle, in seconds within `[0, cycle_time)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClockState<T> {
    pub phase: T,
    pub cycle_time: T,
}

impl<T: Real> ClockState<T> {
    pub fn new(cycle_time: T) -> Self {
        Self { phase: T::zero(), cycle_time }
    }

    pub fn fraction(&self) -> T {
        self.phase / self.cycle_time
    }

    pub fn advance(&mut self, dt: T) {
        self.phase = wrap(self.phase + dt, self.cycle_time);
    }

    /// Changes the cycle time keeping the fraction of the cycle.
    pub fn retime(&mut self, cycle_time: T) {
        let frac = self.fraction();
        self.cycle_time = cycle_time;
        self.phase = wrap(frac * cycle_time, cycle_time);
    }
}

#[inline]
fn wrap<T: Real>(phase: T, period: T) -> T {
    let r = phase % period;
    let r = if r < T::zero() { r + period } else { r };
    if r >= period {
        T::zero()
    } else {
        r
    }
}

/// Swing weight of `foot` at `phase` seconds: piecewise linear between the
/// anchors lift-off (0), end of ramp-up (1), start of ramp-down (1) and
/// touchdown (0), zero through stance. The stance weight is `1 - swing`.
pub fn clock_weight<T: Real>(phase: T, gait: &GaitParams<T>, foot: Foot) -> T {
    let ct = gait.cycle_time;
    let shifted = match foot {
        Foot::Left => phase,
        Foot::Right => phase + gait.phase_offset * ct,
    };
    let t = wrap(shifted, ct);
    let swing = gait.swing_ratio * ct;
    let ramp = T::of(SWING_TRANSITION_FRACTION * 0.5) * swing;
    if t < ramp {
        t / ramp
    } else if t <= swing - ramp {
        T::one()
    } else if t < swing {
        (swing - t) / ramp
    } else {
        T::zero()
    }
}

pub fn stance_weight<T: Real>(phase: T, gait: &GaitParams<T>, foot: Foot) -> T {
    T::one() - clock_weight(phase, gait, foot)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn g(sr: f64, ct: f64) -> GaitParams<f64> {
        GaitParams::new(sr, ct).unwrap()
    }

    #[test]
    fn anchor_values() {
        let gait = g(0.4, 1.0);
        assert_eq!(clock_weight(0.2, &gait, Foot::Left), 1.0);
        assert_eq!(clock_weight(0.7, &gait, Foot::Left), 0.0);
        assert_eq!(stance_weight(0.7, &gait, Foot::Left), 1.0);
        assert_eq!(clock_weight(0.0, &gait, Foot::Left), 0.0);
        // ramp ends at 10 % of the 0.4 s swing
        assert!((clock_weight(0.02, &gait, Foot::Left) - 0.5).abs() < 1e-12);
        assert!((clock_weight(0.04, &gait, Foot::Left) - 1.0).abs() < 1e-12);
        assert!((clock_weight(0.38, &gait, Foot::Left) - 0.5).abs() < 1e-12);
        // right foot is half a cycle later
        assert_eq!(clock_weight(0.7, &gait, Foot::Right), 1.0);
        assert_eq!(clock_weight(0.2, &gait, Foot::Right), 0.0);
    }

    #[test]
    fn schedule_table() {
        let cases: [(f64, f64, f64); 5] = [(0.5, 0.4, 1.0), (1.0, 0.4, 1.0), (2.0, 0.6, 1.25), (3.0, 0.8, 1.5), (3.5, 0.8, 1.5)];
        for (speed, sr, f) in cases {
            let p = gait_params_for_speed(speed);
            assert!((p.swing_ratio - sr).abs() < 1e-12, "{speed}");
            assert!((p.step_frequency() - f).abs() < 1e-12, "{speed}");
            assert_eq!(p.phase_offset, 0.5);
        }
        assert_eq!(gait_params_for_speed(-1.0), gait_params_for_speed(0.0));
        assert_eq!(gait_params_for_speed(9.0), gait_params_for_speed(4.0));
    }

    #[test]
    fn swing_integral_closed_form() {
        for (sr, ct) in [(0.4, 1.0), (0.6, 0.8), (0.8, 1.0 / 1.5)] {
            let gait = g(sr, ct);
            let n = 200_000;
            let h = ct / n as f64;
            // midpoint rule is exact on each linear piece away from breakpoints
            let integral: f64 = (0..n).map(|i| clock_weight((i as f64 + 0.5) * h, &gait, Foot::Left)).sum::<f64>() * h;
            let expected = sr * ct * (1.0 - SWING_TRANSITION_FRACTION * 0.5);
            assert!((integral - expected).abs() < 1e-9, "{integral} vs {expected}");
        }
    }

    #[test]
    fn clock_wraps() {
        let mut c = ClockState::new(0.8);
        for _ in 0..100 {
            c.advance(0.025);
        }
        assert!(c.phase >= 0.0 && c.phase < 0.8);
        assert!((c.phase - (2.5f64 % 0.8)).abs() < 1e-9);
        c.retime(0.4);
        assert!((c.fraction() - (2.5f64 % 0.8) / 0.8).abs() < 1e-9);
    }

    #[test]
    fn works_in_single_precision() {
        let gait = GaitParams::<f32>::new(0.4, 1.0).unwrap();
        assert_eq!(clock_weight(0.2f32, &gait, Foot::Left), 1.0);
        assert_eq!(gait_params_for_speed(2.0f32).swing_ratio, 0.6);
    }

    #[test]
    fn invalid_gait_rejected() {
        assert!(GaitParams::new(1.0, 1.0).is_err());
        assert!(GaitParams::new(0.5, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn weight_in_unit_interval_and_periodic(p in -5.0f64..5.0, sr in 0.05f64..0.95, ct in 0.2f64..2.0) {
            let gait = g(sr, ct);
            for foot in [Foot::Left, Foot::Right] {
                let w = clock_weight(p, &gait, foot);
                prop_assert!((0.0..=1.0).contains(&w));
                prop_assert!((w - clock_weight(p + ct, &gait, foot)).abs() < 1e-9);
                prop_assert!((clock_weight(p, &gait, foot) + stance_weight(p, &gait, foot) - 1.0).abs() < 1e-15);
            }
            prop_assert!((clock_weight(p, &gait, Foot::Right) - clock_weight(p + ct / 2.0, &gait, Foot::Left)).abs() < 1e-9);
        }

        #[test]
        fn schedule_monotone(a in 0.0f64..4.0, b in 0.0f64..4.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let (pl, ph) = (gait_params_for_speed(lo), gait_params_for_speed(hi));
            prop_assert!(pl.swing_ratio <= ph.swing_ratio);
            prop_assert!(pl.step_frequency() <= ph.step_frequency() + 1e-12);
        }

        #[test]
        fn weight_has_four_breakpoints(sr in 0.1f64..0.9, ct in 0.3f64..2.0) {
            let gait = g(sr, ct);
            // second differences vanish except near the 4 anchors
            let n = 4000;
            let h = ct / n as f64;
            let w: Vec<f64> = (0..=n + 1).map(|i| clock_weight(i as f64 * h, &gait, Foot::Left)).collect();
            let kinks = (1..=n).filter(|&i| (w[i + 1] - 2.0 * w[i] + w[i - 1]).abs() > 1e-9).count();
            // each breakpoint shows up in at most two consecutive stencils
            prop_assert!((4..=8).contains(&kinks), "kinks = {}", kinks);
        }
    }
}
