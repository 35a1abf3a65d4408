//! Dynamic loads attached to the biped torso.
//!
//! Each load contributes its own generalized coordinates, movable point
//! masses and internal forces (rope tension, tray contact, slosh springs).
//! The simulator solves the biped and load coordinates as one coupled system;
//! [`load_coupling`] advances a load alone under prescribed torso motion and
//! reports the wrench it exerts on the torso.

use std::f64::consts::FRAC_PI_2;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{clamp, Real};
use crate::sim::dynamics::{solve_prescribed, MassSystem};
use crate::sim::kinematics::{cross, Angle, ArmLen, Body, Point, PointEval, Term};

pub const X: usize = 0;
pub const Z: usize = 1;
pub const PITCH: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LoadKind {
    Unloaded,
    TrayBox,
    Cart,
    CarryPole,
    WaterJug,
}

impl LoadKind {
    pub const ALL: [LoadKind; 5] = [LoadKind::Unloaded, LoadKind::TrayBox, LoadKind::Cart, LoadKind::CarryPole, LoadKind::WaterJug];

    pub fn name(self) -> &'static str {
        match self {
            LoadKind::Unloaded => "unloaded",
            LoadKind::TrayBox => "tray-box",
            LoadKind::Cart => "cart",
            LoadKind::CarryPole => "carry-pole",
            LoadKind::WaterJug => "water-jug",
        }
    }

    pub fn dof(self) -> usize {
        match self {
            LoadKind::Unloaded => 0,
            LoadKind::Cart => 1,
            LoadKind::TrayBox | LoadKind::CarryPole | LoadKind::WaterJug => 2,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

impl fmt::Display for LoadKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrayBoxParams<T> {
    pub box_mass: T,
    pub tray_mass: T,
    pub half_width: T,
    pub friction: T,
    /// Tray surface height above the hip, in the torso frame.
    pub tray_height: T,
    pub contact_stiffness: T,
    pub contact_damping: T,
    pub tangential_damping: T,
    /// The box counts as dropped once it is strictly more than this far below the tray plane.
    pub drop_threshold: T,
}

impl<T: Real> Default for TrayBoxParams<T> {
    fn default() -> Self {
        Self {
            box_mass: T::of(5.0),
            tray_mass: T::of(0.5),
            half_width: T::of(0.2),
            friction: T::of(0.2),
            tray_height: T::of(0.55),
            contact_stiffness: T::of(2.0e4),
            contact_damping: T::of(300.0),
            tangential_damping: T::of(400.0),
            drop_threshold: T::of(0.3),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CartParams<T> {
    pub mass: T,
    pub rope_length: T,
    pub friction: T,
    pub rope_stiffness: T,
    pub rope_damping: T,
    pub hitch_height: T,
    /// Rope attachment on the torso, `[forward, up]` from the hip.
    pub mount: [T; 2],
    /// Viscous slope of the cart's ground friction before the Coulomb cap.
    pub ground_damping: T,
}

impl<T: Real> Default for CartParams<T> {
    fn default() -> Self {
        Self {
            mass: T::of(10.0),
            rope_length: T::of(1.0),
            friction: T::of(0.4),
            rope_stiffness: T::of(5.0e3),
            rope_damping: T::of(100.0),
            hitch_height: T::of(0.3),
            mount: [T::of(-0.1), T::zero()],
            ground_damping: T::of(500.0),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CarryPoleParams<T> {
    /// Hanging mass per side.
    pub mass: T,
    pub rope_length: T,
    /// Fore and aft mount positions along the pole, from the torso axis.
    pub mount_offsets: [T; 2],
    pub mount_height: T,
    pub pole_mass: T,
}

impl<T: Real> Default for CarryPoleParams<T> {
    /// 7 kg per side on the 28 kg biped: heavy enough that a policy trained
    /// without the load falls when asked to walk with it.
    fn default() -> Self {
        Self {
            mass: T::of(7.0),
            rope_length: T::of(0.4),
            mount_offsets: [T::of(0.3), T::of(-0.3)],
            mount_height: T::of(0.45),
            pole_mass: T::of(1.0),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WaterJugParams<T> {
    pub slosh_mass: T,
    /// Rigid part of the jug, carried by the torso.
    pub body_mass: T,
    /// N/m along the jug's forward and up axes.
    pub stiffness: [T; 2],
    /// N·s/m along the jug's forward and up axes.
    pub damping: [T; 2],
    pub travel_limit: T,
    pub stop_stiffness: T,
    pub mount_height: T,
}

impl<T: Real> Default for WaterJugParams<T> {
    fn default() -> Self {
        let (m, k, zeta) = (1.5, 80.0, 0.05);
        let c = 2.0 * zeta * (k * m as f64).sqrt();
        Self {
            slosh_mass: T::of(m),
            body_mass: T::of(3.5),
            stiffness: [T::of(k); 2],
            damping: [T::of(c); 2],
            travel_limit: T::of(0.1),
            stop_stiffness: T::of(2.0e4),
            mount_height: T::of(0.3),
        }
    }
}

/// Parameter sets for every load kind, as they appear in the run config.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoadParams<T: Real> {
    pub tray_box: TrayBoxParams<T>,
    pub cart: CartParams<T>,
    pub carry_pole: CarryPoleParams<T>,
    pub water_jug: WaterJugParams<T>,
}

impl<T: Real> LoadParams<T> {
    pub fn spec(&self, kind: LoadKind) -> LoadSpec<T> {
        match kind {
            LoadKind::Unloaded => LoadSpec::Unloaded,
            LoadKind::TrayBox => LoadSpec::TrayBox(self.tray_box),
            LoadKind::Cart => LoadSpec::Cart(self.cart),
            LoadKind::CarryPole => LoadSpec::CarryPole(self.carry_pole),
            LoadKind::WaterJug => LoadSpec::WaterJug(self.water_jug),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LoadSpec<T> {
    Unloaded,
    TrayBox(TrayBoxParams<T>),
    Cart(CartParams<T>),
    CarryPole(CarryPoleParams<T>),
    WaterJug(WaterJugParams<T>),
}

/// Mass rigidly fixed to the torso frame (tray, pole, jug shell).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidAttachment<T> {
    pub mass: T,
    /// `[forward, up]` from the hip in the torso frame.
    pub com: [T; 2],
    pub inertia: T,
}

impl<T: Real> LoadSpec<T> {
    pub fn kind(&self) -> LoadKind {
        match self {
            LoadSpec::Unloaded => LoadKind::Unloaded,
            LoadSpec::TrayBox(_) => LoadKind::TrayBox,
            LoadSpec::Cart(_) => LoadKind::Cart,
            LoadSpec::CarryPole(_) => LoadKind::CarryPole,
            LoadSpec::WaterJug(_) => LoadKind::WaterJug,
        }
    }

    pub fn dof(&self) -> usize {
        self.kind().dof()
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |v: T| v > T::zero() && v.is_finite();
        let nonneg = |v: T| v >= T::zero() && v.is_finite();
        let ok = match self {
            LoadSpec::Unloaded => true,
            LoadSpec::TrayBox(p) => {
                pos(p.box_mass)
                    && nonneg(p.tray_mass)
                    && pos(p.half_width)
                    && nonneg(p.friction)
                    && pos(p.contact_stiffness)
                    && nonneg(p.contact_damping)
                    && nonneg(p.tangential_damping)
                    && pos(p.drop_threshold)
            }
            LoadSpec::Cart(p) => {
                pos(p.mass) && pos(p.rope_length) && nonneg(p.friction) && pos(p.rope_stiffness) && nonneg(p.rope_damping) && nonneg(p.ground_damping)
            }
            LoadSpec::CarryPole(p) => pos(p.mass) && pos(p.rope_length) && nonneg(p.pole_mass),
            LoadSpec::WaterJug(p) => {
                pos(p.slosh_mass)
                    && nonneg(p.body_mass)
                    && p.stiffness.iter().all(|&k| pos(k))
                    && p.damping.iter().all(|&c| nonneg(c))
                    && pos(p.travel_limit)
                    && pos(p.stop_stiffness)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParams(format!("{} load: masses, lengths and stiffnesses must be positive, friction non-negative", self.kind())))
        }
    }

    pub fn rigid_attachment(&self) -> Option<RigidAttachment<T>> {
        let bar = |m: T, len: T| m * len * len / T::of(12.0);
        match self {
            LoadSpec::Unloaded | LoadSpec::Cart(_) => None,
            LoadSpec::TrayBox(p) => Some(RigidAttachment { mass: p.tray_mass, com: [T::zero(), p.tray_height], inertia: bar(p.tray_mass, p.half_width + p.half_width) }),
            LoadSpec::CarryPole(p) => {
                let span = p.mount_offsets[0] - p.mount_offsets[1];
                let mid = (p.mount_offsets[0] + p.mount_offsets[1]) / T::of(2.0);
                Some(RigidAttachment { mass: p.pole_mass, com: [mid, p.mount_height], inertia: bar(p.pole_mass, span.abs()) })
            }
            LoadSpec::WaterJug(p) => Some(RigidAttachment { mass: p.body_mass, com: [T::zero(), p.mount_height], inertia: T::of(0.02) }),
        }
        .filter(|a| a.mass > T::zero())
    }
}

/// Internal coordinates of the attached load.
///
/// * tray-box: box position `[along tray, above tray]` in the tray frame
/// * cart: cart world x
/// * carry-pole: absolute angles of the fore and aft pendulums (0 = hanging)
/// * water-jug: slosh displacement `[forward, up]` in the jug frame
#[derive(Clone, Debug, PartialEq)]
pub struct LoadState<T> {
    pub kind: LoadKind,
    pub q: Vec<T>,
    pub qd: Vec<T>,
}

impl<T: Real> LoadState<T> {
    /// Load at rest for a torso at `hip` with pitch `pitch`.
    pub fn at_rest(spec: &LoadSpec<T>, hip: [T; 2], pitch: T) -> Option<Self> {
        let q = match spec {
            LoadSpec::Unloaded => return None,
            LoadSpec::Cart(p) => {
                let mount = torso_point(p.mount[0], p.mount[1]).position(&[hip[0], hip[1], pitch]);
                let dz = mount[1] - p.hitch_height;
                let run = (p.rope_length * p.rope_length - dz * dz).max(T::zero()).sqrt();
                vec![mount[0] - run]
            }
            _ => vec![T::zero(); 2],
        };
        let n = q.len();
        Some(Self { kind: spec.kind(), q, qd: vec![T::zero(); n] })
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(&self.qd).all(|v| v.is_finite())
    }
}

/// Point fixed in the torso frame at `[forward, up]` from the hip; torso coordinates at 0..3.
pub fn torso_point<T: Real>(forward: T, up: T) -> Point<T> {
    let half_pi = T::of(FRAC_PI_2);
    let mut p = Point::new(vec![Term::Slide { coord: X, dir: [T::one(), T::zero()] }, Term::Slide { coord: Z, dir: [T::zero(), T::one()] }]);
    if forward != T::zero() {
        p = p.with(Term::Arm { len: ArmLen::Fixed(forward), angle: Angle::sum_of(&[PITCH]).shifted(half_pi) });
    }
    if up != T::zero() {
        p = p.with(Term::Arm { len: ArmLen::Fixed(up), angle: Angle::sum_of(&[PITCH]).shifted(half_pi + half_pi) });
    }
    p
}

/// Torso-frame point displaced by two coordinates along the torso's forward and up axes.
fn sliding_point<T: Real>(forward: T, up: T, coord: usize) -> Point<T> {
    let half_pi = T::of(FRAC_PI_2);
    torso_point(forward, up)
        .with(Term::Arm { len: ArmLen::Coord(coord), angle: Angle::sum_of(&[PITCH]).shifted(half_pi) })
        .with(Term::Arm { len: ArmLen::Coord(coord + 1), angle: Angle::sum_of(&[PITCH]).shifted(half_pi + half_pi) })
}

/// Wrench about the hip point, in world axes.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Wrench<T> {
    pub force: [T; 2],
    pub torque: T,
}

/// Load bodies, auxiliary points and internal forces, laid out for a
/// coordinate vector whose load block starts at `offset`.
#[derive(Clone, Debug)]
pub struct LoadModel<T> {
    pub spec: LoadSpec<T>,
    pub offset: usize,
    pub bodies: Vec<Body<T>>,
    rope: Option<(Point<T>, Point<T>)>,
}

impl<T: Real> LoadModel<T> {
    pub fn new(spec: LoadSpec<T>, offset: usize) -> Self {
        let mut bodies = Vec::new();
        let mut rope = None;
        let tiny = T::zero();
        match &spec {
            LoadSpec::Unloaded => {}
            LoadSpec::TrayBox(p) => {
                bodies.push(Body { name: "box", mass: p.box_mass, inertia: tiny, com: sliding_point(T::zero(), p.tray_height, offset), angle: None });
            }
            LoadSpec::Cart(p) => {
                let hitch = Point::new(vec![Term::Slide { coord: offset, dir: [T::one(), T::zero()] }, Term::Fixed([T::zero(), p.hitch_height])]);
                bodies.push(Body { name: "cart", mass: p.mass, inertia: tiny, com: hitch.clone(), angle: None });
                rope = Some((torso_point(p.mount[0], p.mount[1]), hitch));
            }
            LoadSpec::CarryPole(p) => {
                for (i, &off) in p.mount_offsets.iter().enumerate() {
                    let com = torso_point(off, p.mount_height).with(Term::Arm { len: ArmLen::Fixed(p.rope_length), angle: Angle::sum_of(&[offset + i]) });
                    bodies.push(Body { name: if i == 0 { "fore weight" } else { "aft weight" }, mass: p.mass, inertia: tiny, com, angle: None });
                }
            }
            LoadSpec::WaterJug(p) => {
                bodies.push(Body { name: "slosh", mass: p.slosh_mass, inertia: tiny, com: sliding_point(T::zero(), p.mount_height, offset), angle: None });
            }
        }
        Self { spec, offset, bodies, rope }
    }

    pub fn dof(&self) -> usize {
        self.spec.dof()
    }

    /// Ground forces acting directly on each load body (only the cart touches the ground).
    pub fn ground_forces(&self, q: &[T], qd: &[T], gravity: T, scratch: &mut [PointEval<T>; 2]) -> Vec<[T; 2]> {
        match &self.spec {
            LoadSpec::Cart(p) => {
                let tension = self.rope_force(q, qd, scratch);
                let normal = (p.mass * gravity - tension[1]).max(T::zero());
                let cap = p.friction * normal;
                let friction = clamp(-p.ground_damping * qd[self.offset], -cap, cap);
                vec![[friction, normal]]
            }
            _ => vec![[T::zero(); 2]; self.bodies.len()],
        }
    }

    /// Rope force on the cart hitch (zero while slack).
    fn rope_force(&self, q: &[T], qd: &[T], scratch: &mut [PointEval<T>; 2]) -> [T; 2] {
        let (Some((mount, hitch)), LoadSpec::Cart(p)) = (&self.rope, &self.spec) else {
            return [T::zero(); 2];
        };
        let [a, b] = scratch;
        mount.eval_into(q, qd, a);
        hitch.eval_into(q, qd, b);
        let d = [a.pos[0] - b.pos[0], a.pos[1] - b.pos[1]];
        let len = (d[0] * d[0] + d[1] * d[1]).sqrt();
        if len <= p.rope_length || len == T::zero() {
            return [T::zero(); 2];
        }
        let u = [d[0] / len, d[1] / len];
        let stretch_rate = (a.vel[0] - b.vel[0]) * u[0] + (a.vel[1] - b.vel[1]) * u[1];
        let tension = (p.rope_stiffness * (len - p.rope_length) + p.rope_damping * stretch_rate).max(T::zero());
        [tension * u[0], tension * u[1]]
    }

    /// Adds every internal and ground generalized force of the load to `rhs`.
    /// Gravity on load bodies is handled by the caller with the other bodies.
    pub fn add_forces(&self, q: &[T], qd: &[T], gravity: T, rhs: &mut [T], scratch: &mut [PointEval<T>; 2]) {
        let o = self.offset;
        match &self.spec {
            LoadSpec::Unloaded | LoadSpec::CarryPole(_) => {}
            LoadSpec::TrayBox(p) => {
                let (s, h, sd, hd) = (q[o], q[o + 1], qd[o], qd[o + 1]);
                if s.abs() <= p.half_width && h < T::zero() {
                    let normal = (-p.contact_stiffness * h - p.contact_damping * hd).max(T::zero());
                    let cap = p.friction * normal;
                    rhs[o] += clamp(-p.tangential_damping * sd, -cap, cap);
                    rhs[o + 1] += normal;
                }
            }
            LoadSpec::WaterJug(p) => {
                let pitch = q[PITCH];
                let (sin, cos) = pitch.sin_cos();
                // static support of the slosh weight, projected on the jug axes
                let support = [p.slosh_mass * gravity * sin, p.slosh_mass * gravity * cos];
                for i in 0..2 {
                    let (d, dd) = (q[o + i], qd[o + i]);
                    let mut f = support[i] - p.stiffness[i] * d - p.damping[i] * dd;
                    let excess = d.abs() - p.travel_limit;
                    if excess > T::zero() {
                        f -= p.stop_stiffness * excess * d.signum();
                    }
                    rhs[o + i] += f;
                }
            }
            LoadSpec::Cart(_) => {
                let f = self.rope_force(q, qd, scratch);
                // scratch holds the mount/hitch evaluations from rope_force
                let [mount, hitch] = &*scratch;
                for k in 0..rhs.len() {
                    rhs[k] += (hitch.jac[k][0] - mount.jac[k][0]) * f[0] + (hitch.jac[k][1] - mount.jac[k][1]) * f[1];
                }
                let g = self.ground_forces(q, qd, gravity, scratch);
                rhs[o] += g[0][0];
            }
        }
    }

    /// Force/torque the load exerts on the torso, from the load bodies' accelerations.
    pub fn reaction_wrench(&self, q: &[T], qd: &[T], qdd: &[T], gravity: T) -> Wrench<T> {
        let n = q.len();
        let mut ev = PointEval::new(n);
        let mut scratch = [PointEval::new(n), PointEval::new(n)];
        let ground = self.ground_forces(q, qd, gravity, &mut scratch);
        let hip = [q[X], q[Z]];
        let mut w = Wrench::default();
        for (body, g) in self.bodies.iter().zip(ground) {
            body.com.eval_into(q, qd, &mut ev);
            let mut acc = ev.bias;
            for (col, &a) in ev.jac.iter().zip(qdd) {
                acc[0] += col[0] * a;
                acc[1] += col[1] * a;
            }
            let f = [-(body.mass * acc[0] - g[0]), -(body.mass * (acc[1] + gravity) - g[1])];
            w.force[0] += f[0];
            w.force[1] += f[1];
            w.torque += cross([ev.pos[0] - hip[0], ev.pos[1] - hip[1]], f);
        }
        w
    }

    pub fn kinetic_and_potential(&self, q: &[T], qd: &[T], gravity: T) -> (T, T) {
        let n = q.len();
        let mut ev = PointEval::new(n);
        let (mut ke, mut pe) = (T::zero(), T::zero());
        let half = T::of(0.5);
        for b in &self.bodies {
            b.com.eval_into(q, qd, &mut ev);
            ke += half * b.mass * (ev.vel[0] * ev.vel[0] + ev.vel[1] * ev.vel[1]);
            pe += b.mass * gravity * ev.pos[1];
        }
        if let LoadSpec::WaterJug(p) = &self.spec {
            let o = self.offset;
            for i in 0..2 {
                pe += half * p.stiffness[i] * q[o + i] * q[o + i];
            }
        }
        (ke, pe)
    }
}

/// Torso motion prescribed to a stand-alone load advance.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TorsoKinematics<T> {
    pub pos: [T; 2],
    pub vel: [T; 2],
    pub acc: [T; 2],
    pub pitch: T,
    pub pitch_rate: T,
    pub pitch_acc: T,
}

impl<T: Real> TorsoKinematics<T> {
    pub fn stationary(pos: [T; 2], pitch: T) -> Self {
        Self { pos, pitch, ..Default::default() }
    }
}

/// Advances the load one step of `dt` (semi-implicit Euler) while the torso
/// follows the prescribed kinematics, returning the new load state and the
/// wrench the load exerts on the torso during the step.
pub fn load_coupling<T: Real>(load: &LoadState<T>, spec: &LoadSpec<T>, torso: &TorsoKinematics<T>, gravity: T, dt: T) -> Result<(LoadState<T>, Wrench<T>)> {
    if load.kind != spec.kind() {
        return Err(Error::WrongLoadKind { expected: spec.kind().name(), got: load.kind.name() });
    }
    let model = LoadModel::new(*spec, 3);
    let dof = model.dof();
    let n = 3 + dof;
    let mut q = vec![torso.pos[0], torso.pos[1], torso.pitch];
    q.extend_from_slice(&load.q);
    let mut qd = vec![torso.vel[0], torso.vel[1], torso.pitch_rate];
    qd.extend_from_slice(&load.qd);
    let torso_acc = [torso.acc[0], torso.acc[1], torso.pitch_acc];

    let mut sys = MassSystem::new(n);
    let mut ev = PointEval::new(n);
    for body in &model.bodies {
        sys.add_body(body, &q, &qd, gravity, &mut ev);
    }
    let mut scratch = [PointEval::new(n), PointEval::new(n)];
    model.add_forces(&q, &qd, gravity, &mut sys.rhs, &mut scratch);
    let prescribed: Vec<(usize, T)> = torso_acc.iter().enumerate().map(|(i, &a)| (i, a)).collect();
    let qdd = solve_prescribed(&mut sys, &prescribed)?;
    let wrench = model.reaction_wrench(&q, &qd, &qdd, gravity);

    let mut next = load.clone();
    for i in 0..dof {
        next.qd[i] += dt * qdd[3 + i];
        next.q[i] += dt * next.qd[i];
    }
    Ok((next, wrench))
}

/// Whether the box has fallen strictly below the drop threshold under the tray plane.
pub fn box_dropped<T: Real>(load: &LoadState<T>, spec: &LoadSpec<T>) -> Result<bool> {
    let p = tray_params(load, spec)?;
    Ok(load.q[1] < -p.drop_threshold)
}

/// Distance from the box to the middle of the tray surface.
pub fn box_tray_distance<T: Real>(load: &LoadState<T>, spec: &LoadSpec<T>) -> Result<T> {
    tray_params(load, spec)?;
    let (s, h) = (load.q[0], load.q[1]);
    Ok((s * s + h * h).sqrt())
}

fn tray_params<'a, T: Real>(load: &LoadState<T>, spec: &'a LoadSpec<T>) -> Result<&'a TrayBoxParams<T>> {
    match (spec, load.kind) {
        (LoadSpec::TrayBox(p), LoadKind::TrayBox) => Ok(p),
        (LoadSpec::TrayBox(_), other) => Err(Error::WrongLoadKind { expected: "tray-box", got: other.name() }),
        (other, _) => Err(Error::WrongLoadKind { expected: "tray-box", got: other.kind().name() }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const G: f64 = 9.81;

    #[test]
    fn water_jug_at_rest_is_in_equilibrium() {
        let spec = LoadSpec::WaterJug(WaterJugParams::default());
        let torso = TorsoKinematics::stationary([0.0, 0.9], 0.0);
        let mut state = LoadState::at_rest(&spec, torso.pos, torso.pitch).unwrap();
        for _ in 0..2000 {
            let (next, w) = load_coupling(&state, &spec, &torso, G, 5e-4).unwrap();
            state = next;
            // only the static weight reaches the torso
            assert!(w.force[0].abs() < 1e-12);
            assert!((w.force[1] + 1.5 * G).abs() < 1e-9);
        }
        assert!(state.q.iter().all(|d| d.abs() < 1e-12));
    }

    #[test]
    fn slack_rope_transmits_nothing() {
        let spec = LoadSpec::Cart(CartParams::default());
        let torso = TorsoKinematics::stationary([0.0, 0.9], 0.0);
        let mut state = LoadState::at_rest(&spec, torso.pos, 0.0).unwrap();
        state.q[0] += 0.2; // cart pushed towards the robot: rope slack
        let (_, w) = load_coupling(&state, &spec, &torso, G, 5e-4).unwrap();
        assert_eq!(w.force, [0.0, 0.0]);
        assert_eq!(w.torque, 0.0);
    }

    #[test]
    fn taut_rope_pulls_torso_back() {
        let spec = LoadSpec::Cart(CartParams::default());
        let torso = TorsoKinematics::stationary([0.0, 0.9], 0.0);
        let mut state = LoadState::at_rest(&spec, torso.pos, 0.0).unwrap();
        state.q[0] -= 0.01;
        let (_, w) = load_coupling(&state, &spec, &torso, G, 5e-4).unwrap();
        assert!(w.force[0] < 0.0);
    }

    #[test]
    fn box_queries() {
        let spec = LoadSpec::TrayBox(TrayBoxParams::<f64>::default());
        let mut s = LoadState::at_rest(&spec, [0.0, 0.9], 0.0).unwrap();
        assert!(!box_dropped(&s, &spec).unwrap());
        assert_eq!(box_tray_distance(&s, &spec).unwrap(), 0.0);
        s.q[0] = 0.1;
        assert!((box_tray_distance(&s, &spec).unwrap() - 0.1).abs() < 1e-15);
        s.q[1] = -0.5;
        assert!(box_dropped(&s, &spec).unwrap());
        s.q[1] = -0.3;
        assert!(!box_dropped(&s, &spec).unwrap(), "exactly at threshold is not dropped");

        let jug = LoadSpec::WaterJug(WaterJugParams::<f64>::default());
        let js = LoadState::at_rest(&jug, [0.0, 0.9], 0.0).unwrap();
        assert!(matches!(box_dropped(&js, &jug), Err(Error::WrongLoadKind { .. })));
        assert!(box_tray_distance(&js, &jug).is_err());
    }

    #[test]
    fn box_slides_off_an_accelerating_tray() {
        let spec = LoadSpec::TrayBox(TrayBoxParams::<f64>::default());
        let mut torso = TorsoKinematics::stationary([0.0, 0.9], 0.0);
        let mut s = LoadState::at_rest(&spec, torso.pos, 0.0).unwrap();
        let dt = 5e-4;
        // settle
        for _ in 0..2000 {
            s = load_coupling(&s, &spec, &torso, G, dt).unwrap().0;
        }
        assert!(s.q[0].abs() < 1e-9 && !box_dropped(&s, &spec).unwrap());
        // 4 m/s² exceeds the 0.2 g friction cap
        torso.acc = [4.0, 0.0];
        for _ in 0..4000 {
            torso.vel[0] += dt * torso.acc[0];
            torso.pos[0] += dt * torso.vel[0];
            s = load_coupling(&s, &spec, &torso, G, dt).unwrap().0;
        }
        assert!(s.q[0] < -0.2);
        assert!(box_dropped(&s, &spec).unwrap());
    }

    #[test]
    fn mismatched_kind_rejected() {
        let spec = LoadSpec::Cart(CartParams::<f64>::default());
        let pole = LoadState { kind: LoadKind::CarryPole, q: vec![0.0; 2], qd: vec![0.0; 2] };
        assert!(load_coupling(&pole, &spec, &TorsoKinematics::default(), G, 1e-3).is_err());
    }
}
