use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkParams<T> {
    /// kg
    pub mass: T,
    /// m
    pub length: T,
    /// kg·m² about the centre of mass
    pub inertia: T,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Links<T> {
    pub torso: LinkParams<T>,
    pub left_thigh: LinkParams<T>,
    pub left_shank: LinkParams<T>,
    pub right_thigh: LinkParams<T>,
    pub right_shank: LinkParams<T>,
}

impl<T> Links<T> {
    pub fn iter(&self) -> impl Iterator<Item = &LinkParams<T>> {
        [&self.torso, &self.left_thigh, &self.left_shank, &self.right_thigh, &self.right_shank].into_iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut LinkParams<T>> {
        [
            &mut self.torso,
            &mut self.left_thigh,
            &mut self.left_shank,
            &mut self.right_thigh,
            &mut self.right_shank,
        ]
        .into_iter()
    }
}

/// Physical parameters of the planar biped and its ground contact.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelParams<T> {
    pub links: Links<T>,
    /// N·m·s/rad, order: left hip, left knee, right hip, right knee
    pub joint_damping: [T; 4],
    /// Coulomb coefficient between feet and ground.
    pub friction: T,
    /// N/m
    pub contact_stiffness: T,
    /// N·s/m
    pub contact_damping: T,
    /// Slope (N·s/m) of the viscous tangential law before it saturates at the Coulomb cap.
    pub tangential_damping: T,
    /// m/s², acts along -z
    pub gravity: T,
    /// N·m, symmetric clamp on every PD torque
    pub torque_limit: T,
    /// Any |q| or |q̇| above this aborts the step as divergent.
    pub blowup_bound: T,
}

impl<T: Real> Default for ModelParams<T> {
    fn default() -> Self {
        let link = |m: f64, l: f64, i: f64| LinkParams { mass: T::of(m), length: T::of(l), inertia: T::of(i) };
        let thigh = link(4.0, 0.45, 0.07);
        let shank = link(2.0, 0.45, 0.035);
        Self {
            links: Links {
                torso: link(16.0, 0.5, 0.35),
                left_thigh: thigh,
                left_shank: shank,
                right_thigh: thigh,
                right_shank: shank,
            },
            joint_damping: [T::of(0.5); 4],
            friction: T::of(0.9),
            contact_stiffness: T::of(5.0e4),
            contact_damping: T::of(1.5e3),
            tangential_damping: T::of(3.0e3),
            gravity: T::of(9.81),
            torque_limit: T::of(150.0),
            blowup_bound: T::of(1.0e6),
        }
    }
}

impl<T: Real> ModelParams<T> {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: String| Err(Error::InvalidParams(what));
        for (name, l) in ["torso", "left_thigh", "left_shank", "right_thigh", "right_shank"].iter().zip(self.links.iter()) {
            if !(l.mass > T::zero() && l.length > T::zero() && l.inertia > T::zero()) {
                return bad(format!("{name}: mass, length and inertia must be strictly positive"));
            }
        }
        if self.joint_damping.iter().any(|&d| !(d >= T::zero())) {
            return bad("joint damping must be non-negative".into());
        }
        if !(self.friction >= T::zero()) {
            return bad("friction must be non-negative".into());
        }
        if !(self.contact_stiffness > T::zero()) {
            return bad("contact stiffness must be strictly positive".into());
        }
        if !(self.contact_damping >= T::zero() && self.tangential_damping >= T::zero()) {
            return bad("contact damping must be non-negative".into());
        }
        if !(self.gravity >= T::zero() && self.gravity.is_finite()) {
            return bad("gravity magnitude must be finite and non-negative".into());
        }
        if !(self.torque_limit > T::zero() && self.blowup_bound > T::zero()) {
            return bad("torque limit and blow-up bound must be strictly positive".into());
        }
        Ok(())
    }

    pub fn biped_mass(&self) -> T {
        self.links.iter().map(|l| l.mass).sum()
    }
}

/// Proportional-derivative gains per actuated joint (left hip, left knee, right hip, right knee).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PDGains<T> {
    pub kp: [T; 4],
    pub kd: [T; 4],
}

impl<T: Real> Default for PDGains<T> {
    fn default() -> Self {
        Self { kp: [T::of(250.0), T::of(200.0), T::of(250.0), T::of(200.0)], kd: [T::of(8.0), T::of(6.0), T::of(8.0), T::of(6.0)] }
    }
}

impl<T: Real> PDGains<T> {
    pub fn validate(&self) -> Result<()> {
        if self.kp.iter().any(|&k| !(k > T::zero())) || self.kd.iter().any(|&k| !(k >= T::zero())) {
            return Err(Error::InvalidParams("PD gains need kp > 0 and kd >= 0".into()));
        }
        Ok(())
    }
}

/// Multiplicative `[lo, hi]` factor ranges for dynamics randomization.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynRandRanges<T> {
    pub damping: [T; 2],
    pub mass: [T; 2],
    pub friction: [T; 2],
}

impl<T: Real> Default for DynRandRanges<T> {
    fn default() -> Self {
        Self { damping: [T::of(0.5), T::of(1.5)], mass: [T::of(0.85), T::of(1.15)], friction: [T::of(0.6), T::of(1.2)] }
    }
}

impl<T: Real> DynRandRanges<T> {
    pub fn identity() -> Self {
        Self { damping: [T::one(); 2], mass: [T::one(); 2], friction: [T::one(); 2] }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, r) in [("damping", self.damping), ("mass", self.mass), ("friction", self.friction)] {
            if !(r[0] > T::zero() && r[0] <= r[1]) {
                return Err(Error::InvalidParams(format!("{name} range must satisfy 0 < lo <= hi")));
            }
        }
        Ok(())
    }
}

fn draw<T: Real, R: Rng + ?Sized>(range: [T; 2], rng: &mut R) -> T {
    let u: f64 = rng.random();
    range[0] + (range[1] - range[0]) * T::of(u)
}

/// Scales each joint damping, each link mass and the ground friction by
/// independent uniform factors. The draw order is fixed (damping, masses,
/// friction) so a seeded rng reproduces the same model.
pub fn randomize_dynamics<T: Real, R: Rng + ?Sized>(params: &ModelParams<T>, ranges: &DynRandRanges<T>, rng: &mut R) -> ModelParams<T> {
    let mut out = *params;
    for d in out.joint_damping.iter_mut() {
        *d *= draw(ranges.damping, rng);
    }
    for link in out.links.iter_mut() {
        link.mass *= draw(ranges.mass, rng);
    }
    out.friction *= draw(ranges.friction, rng);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    #[test]
    fn identity_ranges_leave_params_unchanged() {
        let p = ModelParams::<f64>::default();
        let mut rng = seed::rng(3, &[]);
        assert_eq!(randomize_dynamics(&p, &DynRandRanges::identity(), &mut rng), p);
    }

    #[test]
    fn mass_range_bounds_every_link() {
        let p = ModelParams::<f64>::default();
        let ranges = DynRandRanges { mass: [0.9, 1.1], ..DynRandRanges::identity() };
        let mut rng = seed::rng(11, &[]);
        for _ in 0..200 {
            let r = randomize_dynamics(&p, &ranges, &mut rng);
            for (a, b) in r.links.iter().zip(p.links.iter()) {
                assert!(a.mass >= 0.9 * b.mass && a.mass <= 1.1 * b.mass);
                assert_eq!(a.length, b.length);
                assert_eq!(a.inertia, b.inertia);
            }
            assert_eq!(r.contact_stiffness, p.contact_stiffness);
            assert_eq!(r.friction, p.friction);
        }
    }

    #[test]
    fn same_seed_same_draw() {
        let p = ModelParams::<f64>::default();
        let r = DynRandRanges::default();
        let a = randomize_dynamics(&p, &r, &mut seed::rng(5, &[1]));
        let b = randomize_dynamics(&p, &r, &mut seed::rng(5, &[1]));
        assert_eq!(a, b);
    }

    #[test]
    fn non_physical_params_rejected() {
        let mut p = ModelParams::<f64>::default();
        p.links.left_shank.mass = 0.0;
        assert!(p.validate().is_err());
        let mut p = ModelParams::<f64>::default();
        p.friction = -0.1;
        assert!(p.validate().is_err());
        assert!(DynRandRanges { mass: [1.2, 1.1], ..DynRandRanges::<f64>::identity() }.validate().is_err());
    }
}
