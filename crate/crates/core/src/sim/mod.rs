//! Planar (sagittal) five-link biped with point feet, penalty ground contact,
//! inner-loop PD servos and an optional dynamic load.
//!
//! Generalized coordinates: hip position `x`, `z`, torso pitch, then the
//! relative joint angles left hip, left knee, right hip, right knee. Link
//! angles follow `e(a) = (sin a, -cos a)`, so a positive hip angle swings the
//! thigh forward and a positive torso pitch leans the torso backward.

pub mod dynamics;
pub mod kinematics;
pub mod params;

use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::gait::ClockState;
use crate::loads::{torso_point, LoadModel, LoadSpec, LoadState, Wrench, PITCH, X, Z};
use crate::scalar::{clamp, Real};
use dynamics::{solve_prescribed, MassSystem};
use kinematics::{cross, Angle, ArmLen, Body, Point, PointEval, Term};
pub use params::{randomize_dynamics, DynRandRanges, LinkParams, Links, ModelParams, PDGains};

pub const BIPED_DOF: usize = 7;
pub const N_JOINTS: usize = 4;
pub const JOINT_NAMES: [&str; N_JOINTS] = ["left_hip", "left_knee", "right_hip", "right_knee"];
/// Nominal standing pose: knees bent, both feet under the hip.
pub const NOMINAL_JOINTS: [f64; N_JOINTS] = [0.25, -0.5, 0.25, -0.5];
/// torso pitch, pitch rate, torso vx, vz, 4 joint angles, 4 joint rates, clock sin/cos, command
pub const OBS_DIM: usize = 15;

/// 2 kHz inner PD loop, 40 Hz policy.
pub const DT_INNER: f64 = 5.0e-4;
pub const N_INNER: usize = 50;

pub fn joint_index(name: &str) -> Result<usize> {
    JOINT_NAMES.iter().position(|&j| j == name).ok_or_else(|| Error::UnknownJoint { name: name.to_string(), valid: JOINT_NAMES.join(", ") })
}

/// Constant force on the pelvis until `until` (simulation time).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Push<T> {
    pub force: [T; 2],
    pub until: T,
}

/// Step-averaged quantities from the last call to [`Biped::step`].
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepDiagnostics<T> {
    pub torques: [T; N_JOINTS],
    /// `[tangential, normal]` ground force per foot (left, right).
    pub foot_forces: [[T; 2]; 2],
    pub torso_accel: [T; 2],
    pub load_wrench: Wrench<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimState<T> {
    pub q: [T; BIPED_DOF],
    pub qd: [T; BIPED_DOF],
    pub time: T,
    pub load: Option<LoadState<T>>,
    pub push: Option<Push<T>>,
    pub diag: StepDiagnostics<T>,
}

impl<T: Real> SimState<T> {
    pub fn torso_height(&self) -> T {
        self.q[Z]
    }

    pub fn torso_velocity(&self) -> [T; 2] {
        [self.qd[X], self.qd[Z]]
    }

    pub fn joint_angles(&self) -> [T; N_JOINTS] {
        [self.q[3], self.q[4], self.q[5], self.q[6]]
    }

    pub fn joint_rates(&self) -> [T; N_JOINTS] {
        [self.qd[3], self.qd[4], self.qd[5], self.qd[6]]
    }

    pub fn load_dof(&self) -> usize {
        self.load.as_ref().map_or(0, |l| l.q.len())
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(&self.qd).all(|v| v.is_finite()) && self.load.as_ref().is_none_or(|l| l.is_finite())
    }

    fn max_magnitude(&self) -> T {
        let load = self.load.iter().flat_map(|l| l.q.iter().chain(&l.qd));
        self.q.iter().chain(&self.qd).chain(load).fold(T::zero(), |m, v| if v.is_nan() { T::infinity() } else { m.max(v.abs()) })
    }
}

/// `τ = kp (q* - q) - kd q̇`, clamped to `±limit`.
pub fn pd_torques<T: Real>(setpoints: &[T; N_JOINTS], state: &SimState<T>, gains: &PDGains<T>, limit: T) -> [T; N_JOINTS] {
    pd_raw(setpoints, &state.joint_angles(), &state.joint_rates(), gains, limit)
}

#[inline]
fn pd_raw<T: Real>(setpoints: &[T; N_JOINTS], q: &[T; N_JOINTS], qd: &[T; N_JOINTS], gains: &PDGains<T>, limit: T) -> [T; N_JOINTS] {
    let mut tau = [T::zero(); N_JOINTS];
    for i in 0..N_JOINTS {
        tau[i] = clamp(gains.kp[i] * (setpoints[i] - q[i]) - gains.kd[i] * qd[i], -limit, limit);
    }
    tau
}

/// Proprioceptive observation; never reads load coordinates.
pub fn observe<T: Real>(state: &SimState<T>, clock: &ClockState<T>, command: T) -> Vec<T> {
    let mut obs = Vec::with_capacity(OBS_DIM);
    obs.push(state.q[PITCH]);
    obs.push(state.qd[PITCH]);
    obs.push(state.qd[X]);
    obs.push(state.qd[Z]);
    obs.extend_from_slice(&state.joint_angles());
    obs.extend_from_slice(&state.joint_rates());
    let angle = T::of(TAU) * clock.fraction();
    obs.push(angle.sin());
    obs.push(angle.cos());
    obs.push(command);
    obs
}

/// Model handle: the physical parameters, attached load and the derived
/// body/contact geometry. Immutable and `Send`; all mutable state lives in
/// [`SimState`].
#[derive(Clone, Debug)]
pub struct Biped<T> {
    pub params: ModelParams<T>,
    pub load_spec: LoadSpec<T>,
    pinned: bool,
    bodies: Vec<Body<T>>,
    feet: [Point<T>; 2],
    load: LoadModel<T>,
}

/// Builds the model and its nominal standing state (feet touching the ground,
/// load at rest at its mount).
pub fn build_biped<T: Real>(params: ModelParams<T>, load: LoadSpec<T>) -> Result<(SimState<T>, Biped<T>)> {
    let model = Biped::new(params, load)?;
    let state = model.standing_state(&NOMINAL_JOINTS.map(T::of));
    Ok((state, model))
}

impl<T: Real> Biped<T> {
    pub fn new(params: ModelParams<T>, load_spec: LoadSpec<T>) -> Result<Self> {
        params.validate()?;
        load_spec.validate()?;
        let l = &params.links;
        let base = || Point::new(vec![Term::Slide { coord: X, dir: [T::one(), T::zero()] }, Term::Slide { coord: Z, dir: [T::zero(), T::one()] }]);
        let arm = |len: T, coords: &[usize]| Term::Arm { len: ArmLen::Fixed(len), angle: Angle::sum_of(coords) };
        let half = T::of(0.5);
        let mut bodies = vec![Body { name: "torso", mass: l.torso.mass, inertia: l.torso.inertia, com: torso_point(T::zero(), half * l.torso.length), angle: Some(Angle::sum_of(&[PITCH])) }];
        let mut feet = Vec::new();
        for (side, (thigh, shank)) in [(&l.left_thigh, &l.left_shank), (&l.right_thigh, &l.right_shank)].into_iter().enumerate() {
            let (hip, knee) = (3 + 2 * side, 4 + 2 * side);
            bodies.push(Body { name: if side == 0 { "left thigh" } else { "right thigh" }, mass: thigh.mass, inertia: thigh.inertia, com: base().with(arm(half * thigh.length, &[PITCH, hip])), angle: Some(Angle::sum_of(&[PITCH, hip])) });
            bodies.push(Body {
                name: if side == 0 { "left shank" } else { "right shank" },
                mass: shank.mass,
                inertia: shank.inertia,
                com: base().with(arm(thigh.length, &[PITCH, hip])).with(arm(half * shank.length, &[PITCH, hip, knee])),
                angle: Some(Angle::sum_of(&[PITCH, hip, knee])),
            });
            feet.push(base().with(arm(thigh.length, &[PITCH, hip])).with(arm(shank.length, &[PITCH, hip, knee])));
        }
        if let Some(att) = load_spec.rigid_attachment() {
            bodies.push(Body { name: "attachment", mass: att.mass, inertia: att.inertia, com: torso_point(att.com[0], att.com[1]), angle: Some(Angle::sum_of(&[PITCH])) });
        }
        let load = LoadModel::new(load_spec, BIPED_DOF);
        let feet: [Point<T>; 2] = feet.try_into().expect("two legs");
        Ok(Self { params, load_spec, pinned: false, bodies, feet, load })
    }

    /// Fixes the torso in space (joints and load still move).
    pub fn pinned(mut self, pinned: bool) -> Self {
        self.pinned = pinned;
        self
    }

    pub fn n_coords(&self) -> usize {
        BIPED_DOF + self.load.dof()
    }

    pub fn total_mass(&self) -> T {
        self.bodies.iter().chain(&self.load.bodies).map(|b| b.mass).sum()
    }

    /// Upright torso with the given joint angles, lowest foot exactly on the ground, load at rest.
    pub fn standing_state(&self, joints: &[T; N_JOINTS]) -> SimState<T> {
        let mut q = [T::zero(); BIPED_DOF];
        q[3..].copy_from_slice(joints);
        let lowest = self.feet.iter().map(|f| f.position(&q)[1]).fold(T::infinity(), |a, b| a.min(b));
        q[Z] = -lowest;
        let load = LoadState::at_rest(&self.load_spec, [q[X], q[Z]], q[PITCH]);
        SimState { q, qd: [T::zero(); BIPED_DOF], time: T::zero(), load, push: None, diag: StepDiagnostics::default() }
    }

    fn pack(&self, state: &SimState<T>) -> (Vec<T>, Vec<T>) {
        let mut q = state.q.to_vec();
        let mut qd = state.qd.to_vec();
        if let Some(l) = &state.load {
            q.extend_from_slice(&l.q);
            qd.extend_from_slice(&l.qd);
        }
        (q, qd)
    }

    pub fn foot_positions(&self, state: &SimState<T>) -> [[T; 2]; 2] {
        let (q, _) = self.pack(state);
        [self.feet[0].position(&q), self.feet[1].position(&q)]
    }

    pub fn foot_velocities(&self, state: &SimState<T>) -> [[T; 2]; 2] {
        let (q, qd) = self.pack(state);
        let mut ev = PointEval::new(q.len());
        let mut out = [[T::zero(); 2]; 2];
        for (o, f) in out.iter_mut().zip(&self.feet) {
            f.eval_into(&q, &qd, &mut ev);
            *o = ev.vel;
        }
        out
    }

    /// Spring-damper normal force (explicit); `None` when the foot is off the ground.
    fn normal_force(&self, ev: &PointEval<T>) -> Option<T> {
        let p = &self.params;
        (ev.pos[1] < T::zero()).then(|| (-p.contact_stiffness * ev.pos[1] - p.contact_damping * ev.vel[1]).max(T::zero()))
    }

    /// Assembles the coupled equations at `(q, qd)` without foot contacts.
    fn assemble(&self, q: &[T], qd: &[T], tau: &[T; N_JOINTS], push: Option<[T; 2]>, ws: &mut Workspace<T>) {
        let g = self.params.gravity;
        ws.sys.clear();
        for body in self.bodies.iter().chain(&self.load.bodies) {
            ws.sys.add_body(body, q, qd, g, &mut ws.ev);
        }
        for i in 0..N_JOINTS {
            ws.sys.rhs[3 + i] += tau[i] - self.params.joint_damping[i] * qd[3 + i];
        }
        self.load.add_forces(q, qd, g, &mut ws.sys.rhs, &mut ws.pair);
        if let Some(f) = push {
            ws.sys.rhs[X] += f[0];
            ws.sys.rhs[Z] += f[1];
        }
        for (foot, ev) in self.feet.iter().zip(ws.feet.iter_mut()) {
            foot.eval_into(q, qd, ev);
        }
    }

    /// Adds foot contacts and solves. Tangential damping is linearly implicit
    /// over `h` (the light shank makes it stiff); a foot whose implicit
    /// friction would leave the cone slides with the force clamped to `μN`.
    /// Returns accelerations and the `[tangential, normal]` force per foot.
    fn solve(&self, ws: &mut Workspace<T>, h: T) -> Result<(Vec<T>, [[T; 2]; 2])> {
        let normals = [self.normal_force(&ws.feet[0]), self.normal_force(&ws.feet[1])];
        let c = self.params.tangential_damping;
        let mut sliding: [Option<T>; 2] = [None; 2];
        loop {
            ws.work.copy_from(&ws.sys);
            for f in 0..2 {
                let Some(n) = normals[f] else { continue };
                match sliding[f] {
                    Some(t) => ws.work.add_point_force(&ws.feet[f], [t, n]),
                    None => {
                        ws.work.add_point_force(&ws.feet[f], [T::zero(), n]);
                        ws.work.add_implicit_damping(&ws.feet[f], 0, c, h);
                    }
                }
            }
            let zero = T::zero();
            let fixed: &[(usize, T)] = if self.pinned { &[(X, zero), (Z, zero), (PITCH, zero)] } else { &[] };
            let qdd = solve_prescribed(&mut ws.work, fixed)?;
            let mut forces = [[T::zero(); 2]; 2];
            let mut changed = false;
            for f in 0..2 {
                let Some(n) = normals[f] else { continue };
                let ev = &ws.feet[f];
                let t = match sliding[f] {
                    Some(t) => t,
                    None => {
                        let acc: T = ev.jac.iter().zip(&qdd).map(|(j, &a)| j[0] * a).sum();
                        let t = -c * (ev.vel[0] + h * acc);
                        let cap = self.params.friction * n;
                        if t.abs() > cap {
                            sliding[f] = Some(if t > zero { cap } else { -cap });
                            changed = true;
                        }
                        t
                    }
                };
                forces[f] = [t, n];
            }
            if !changed {
                return Ok((qdd, forces));
            }
        }
    }

    /// Advances `n_inner` drift-kick-drift steps of `dt_inner`, recomputing
    /// the PD torques every inner step at the midpoint.
    pub fn step(&self, state: &SimState<T>, setpoints: &[T; N_JOINTS], gains: &PDGains<T>, dt_inner: T, n_inner: usize) -> Result<SimState<T>> {
        if !(dt_inner > T::zero()) {
            return Err(Error::InvalidParams("dt_inner must be positive".into()));
        }
        let n = self.n_coords();
        let (mut q, mut qd) = self.pack(state);
        let mut ws = Workspace::new(n);
        let mut time = state.time;
        let v0 = [qd[X], qd[Z]];
        let mut diag = StepDiagnostics::default();
        let half_dt = dt_inner * T::of(0.5);
        let limit = self.params.torque_limit;
        let mut last_qdd = vec![T::zero(); n];
        let mut vh = vec![T::zero(); n];
        for _ in 0..n_inner {
            for i in 0..n {
                q[i] += half_dt * qd[i];
            }
            for i in 0..n {
                vh[i] = qd[i] + half_dt * last_qdd[i];
            }
            let tau = pd_raw(setpoints, &[q[3], q[4], q[5], q[6]], &[vh[3], vh[4], vh[5], vh[6]], gains, limit);
            let push = state.push.filter(|p| time + half_dt < p.until).map(|p| p.force);
            self.assemble(&q, &vh, &tau, push, &mut ws);
            let (qdd, contacts) = self.solve(&mut ws, dt_inner).map_err(|_| Error::Divergence { time: time.to_f64_lossy(), magnitude: f64::INFINITY })?;
            for i in 0..n {
                qd[i] += dt_inner * qdd[i];
                q[i] += half_dt * qd[i];
            }
            time += dt_inner;
            for i in 0..N_JOINTS {
                diag.torques[i] += tau[i];
            }
            for f in 0..2 {
                diag.foot_forces[f][0] += contacts[f][0];
                diag.foot_forces[f][1] += contacts[f][1];
            }
            last_qdd = qdd;
        }
        let inv = T::one() / T::of(n_inner.max(1) as f64);
        diag.torques.iter_mut().for_each(|t| *t *= inv);
        diag.foot_forces.iter_mut().flatten().for_each(|f| *f *= inv);
        let span = dt_inner * T::of(n_inner.max(1) as f64);
        diag.torso_accel = [(qd[X] - v0[0]) / span, (qd[Z] - v0[1]) / span];

        let mut next = SimState { q: [T::zero(); BIPED_DOF], qd: [T::zero(); BIPED_DOF], time, load: state.load.clone(), push: state.push.filter(|p| time + half_dt < p.until), diag };
        next.q.copy_from_slice(&q[..BIPED_DOF]);
        next.qd.copy_from_slice(&qd[..BIPED_DOF]);
        if let Some(l) = next.load.as_mut() {
            l.q.copy_from_slice(&q[BIPED_DOF..]);
            l.qd.copy_from_slice(&qd[BIPED_DOF..]);
        }
        if n_inner > 0 && self.load.dof() > 0 {
            next.diag.load_wrench = self.load.reaction_wrench(&q, &qd, &last_qdd, self.params.gravity);
        }
        let mag = next.max_magnitude();
        if !(mag <= self.params.blowup_bound) {
            return Err(Error::Divergence { time: time.to_f64_lossy(), magnitude: mag.to_f64_lossy() });
        }
        Ok(next)
    }

    /// Generalized accelerations at the current state under PD control.
    pub fn accelerations(&self, state: &SimState<T>, setpoints: &[T; N_JOINTS], gains: &PDGains<T>) -> Result<Vec<T>> {
        let (q, qd) = self.pack(state);
        let mut ws = Workspace::new(q.len());
        let tau = pd_raw(setpoints, &state.joint_angles(), &state.joint_rates(), gains, self.params.torque_limit);
        let push = state.push.filter(|p| state.time < p.until).map(|p| p.force);
        self.assemble(&q, &qd, &tau, push, &mut ws);
        Ok(self.solve(&mut ws, T::of(DT_INNER))?.0)
    }

    /// Wrench between biped and load about the hip, computed independently
    /// from each side at the current instant: `(from biped bodies, from load bodies)`.
    /// Both are the force the load applies to the biped.
    pub fn interaction_wrenches(&self, state: &SimState<T>, setpoints: &[T; N_JOINTS], gains: &PDGains<T>) -> Result<(Wrench<T>, Wrench<T>)> {
        let (q, qd) = self.pack(state);
        let n = q.len();
        let mut ws = Workspace::new(n);
        let tau = pd_raw(setpoints, &state.joint_angles(), &state.joint_rates(), gains, self.params.torque_limit);
        let push = state.push.filter(|p| state.time < p.until).map(|p| p.force);
        self.assemble(&q, &qd, &tau, push, &mut ws);
        let (qdd, contacts) = self.solve(&mut ws, T::of(DT_INNER))?;
        let g = self.params.gravity;
        let hip = [q[X], q[Z]];
        let mut ev = PointEval::new(n);
        let mut w = Wrench::default();
        for body in &self.bodies {
            body.com.eval_into(&q, &qd, &mut ev);
            let mut acc = ev.bias;
            for (col, &a) in ev.jac.iter().zip(&qdd) {
                acc[0] += col[0] * a;
                acc[1] += col[1] * a;
            }
            let f = [body.mass * acc[0], body.mass * (acc[1] + g)];
            w.force[0] += f[0];
            w.force[1] += f[1];
            w.torque += cross([ev.pos[0] - hip[0], ev.pos[1] - hip[1]], f);
            if let Some(angle) = &body.angle {
                w.torque += body.inertia * angle.rate(&qdd);
            }
        }
        for (foot, c) in self.feet.iter().zip(contacts) {
            let p = foot.position(&q);
            w.force[0] -= c[0];
            w.force[1] -= c[1];
            w.torque -= cross([p[0] - hip[0], p[1] - hip[1]], c);
        }
        if let Some(f) = push {
            w.force[0] -= f[0];
            w.force[1] -= f[1];
        }
        let load_side = self.load.reaction_wrench(&q, &qd, &qdd, g);
        Ok((w, load_side))
    }

    /// Kinetic plus gravitational (and slosh spring) energy.
    pub fn mechanical_energy(&self, state: &SimState<T>) -> T {
        let (q, qd) = self.pack(state);
        let g = self.params.gravity;
        let mut ev = PointEval::new(q.len());
        let half = T::of(0.5);
        let mut e = T::zero();
        for body in &self.bodies {
            body.com.eval_into(&q, &qd, &mut ev);
            e += half * body.mass * (ev.vel[0] * ev.vel[0] + ev.vel[1] * ev.vel[1]) + body.mass * g * ev.pos[1];
            if let Some(angle) = &body.angle {
                let w = angle.rate(&qd);
                e += half * body.inertia * w * w;
            }
        }
        let (ke, pe) = self.load.kinetic_and_potential(&q, &qd, g);
        e + ke + pe
    }

    /// Total linear momentum of biped and load.
    pub fn linear_momentum(&self, state: &SimState<T>) -> [T; 2] {
        let (q, qd) = self.pack(state);
        let mut ev = PointEval::new(q.len());
        let mut p = [T::zero(); 2];
        for body in self.bodies.iter().chain(&self.load.bodies) {
            body.com.eval_into(&q, &qd, &mut ev);
            p[0] += body.mass * ev.vel[0];
            p[1] += body.mass * ev.vel[1];
        }
        p
    }
}

/// Starts a constant pelvis force of `force` newtons along `direction`
/// (radians from +x towards +z) lasting `duration` seconds from the state's
/// current time. Subsequent [`Biped::step`] calls apply it, then drop it.
pub fn apply_impulse<T: Real>(state: &SimState<T>, force: T, direction: T, duration: T) -> Result<SimState<T>> {
    if !(duration > T::zero()) {
        return Err(Error::InvalidParams("impulse duration must be positive".into()));
    }
    let mut next = state.clone();
    next.push = Some(Push { force: [force * direction.cos(), force * direction.sin()], until: state.time + duration });
    Ok(next)
}

struct Workspace<T> {
    sys: MassSystem<T>,
    work: MassSystem<T>,
    feet: [PointEval<T>; 2],
    ev: PointEval<T>,
    pair: [PointEval<T>; 2],
}

impl<T: Real> Workspace<T> {
    fn new(n: usize) -> Self {
        Self { sys: MassSystem::new(n), work: MassSystem::new(n), feet: [PointEval::new(n), PointEval::new(n)], ev: PointEval::new(n), pair: [PointEval::new(n), PointEval::new(n)] }
    }
}
