//! Planar point/body kinematics over generalized coordinates.
//!
//! Every point of the system is a sum of terms, each either a constant, a
//! coordinate times a fixed world direction, or an arm `len * e(angle)` with
//! `e(a) = (sin a, -cos a)` (hanging straight down at `a = 0`). Angles are
//! affine in the coordinates. Arm lengths are constant or a coordinate
//! themselves (sliding masses), which is enough to express the biped, all of
//! the loads and every contact point.

use crate::scalar::Real;

/// `(sin a, -cos a)`.
#[inline]
pub fn e<T: Real>(a: T) -> [T; 2] {
    let (s, c) = a.sin_cos();
    [s, -c]
}

/// `d e / d a = (cos a, sin a)`.
#[inline]
pub fn e_perp<T: Real>(a: T) -> [T; 2] {
    let (s, c) = a.sin_cos();
    [c, s]
}

#[inline]
pub fn cross<T: Real>(r: [T; 2], f: [T; 2]) -> T {
    r[0] * f[1] - r[1] * f[0]
}

#[derive(Clone, Debug, PartialEq)]
pub struct Angle<T> {
    pub coeffs: Vec<(usize, T)>,
    pub offset: T,
}

impl<T: Real> Angle<T> {
    pub fn new(coeffs: Vec<(usize, T)>, offset: T) -> Self {
        Self { coeffs, offset }
    }

    pub fn sum_of(coords: &[usize]) -> Self {
        Self::new(coords.iter().map(|&i| (i, T::one())).collect(), T::zero())
    }

    pub fn shifted(mut self, by: T) -> Self {
        self.offset += by;
        self
    }

    #[inline]
    pub fn value(&self, q: &[T]) -> T {
        self.coeffs.iter().fold(self.offset, |a, &(i, c)| a + c * q[i])
    }

    #[inline]
    pub fn rate(&self, qd: &[T]) -> T {
        self.coeffs.iter().fold(T::zero(), |a, &(i, c)| a + c * qd[i])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ArmLen<T> {
    Fixed(T),
    Coord(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub enum Term<T> {
    Fixed([T; 2]),
    Slide { coord: usize, dir: [T; 2] },
    Arm { len: ArmLen<T>, angle: Angle<T> },
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Point<T> {
    pub terms: Vec<Term<T>>,
}

/// Position, velocity, Jacobian columns and velocity-product acceleration of a point.
#[derive(Clone, Debug)]
pub struct PointEval<T> {
    pub pos: [T; 2],
    pub vel: [T; 2],
    pub bias: [T; 2],
    pub jac: Vec<[T; 2]>,
}

impl<T: Real> PointEval<T> {
    pub fn new(n: usize) -> Self {
        Self { pos: [T::zero(); 2], vel: [T::zero(); 2], bias: [T::zero(); 2], jac: vec![[T::zero(); 2]; n] }
    }
}

impl<T: Real> Point<T> {
    pub fn new(terms: Vec<Term<T>>) -> Self {
        Self { terms }
    }

    pub fn with(mut self, term: Term<T>) -> Self {
        self.terms.push(term);
        self
    }

    pub fn position(&self, q: &[T]) -> [T; 2] {
        let mut p = [T::zero(); 2];
        for term in &self.terms {
            match term {
                Term::Fixed(c) => {
                    p[0] += c[0];
                    p[1] += c[1];
                }
                Term::Slide { coord, dir } => {
                    p[0] += q[*coord] * dir[0];
                    p[1] += q[*coord] * dir[1];
                }
                Term::Arm { len, angle } => {
                    let l = match len {
                        ArmLen::Fixed(l) => *l,
                        ArmLen::Coord(i) => q[*i],
                    };
                    let u = e(angle.value(q));
                    p[0] += l * u[0];
                    p[1] += l * u[1];
                }
            }
        }
        p
    }

    /// Full evaluation into `out` (its Jacobian length fixes the coordinate count).
    pub fn eval_into(&self, q: &[T], qd: &[T], out: &mut PointEval<T>) {
        let two = T::one() + T::one();
        out.pos = [T::zero(); 2];
        out.bias = [T::zero(); 2];
        for c in out.jac.iter_mut() {
            *c = [T::zero(); 2];
        }
        for term in &self.terms {
            match term {
                Term::Fixed(c) => {
                    out.pos[0] += c[0];
                    out.pos[1] += c[1];
                }
                Term::Slide { coord, dir } => {
                    out.pos[0] += q[*coord] * dir[0];
                    out.pos[1] += q[*coord] * dir[1];
                    out.jac[*coord][0] += dir[0];
                    out.jac[*coord][1] += dir[1];
                }
                Term::Arm { len, angle } => {
                    let a = angle.value(q);
                    let w = angle.rate(qd);
                    let u = e(a);
                    let up = e_perp(a);
                    let (l, ld) = match len {
                        ArmLen::Fixed(l) => (*l, T::zero()),
                        ArmLen::Coord(i) => {
                            out.jac[*i][0] += u[0];
                            out.jac[*i][1] += u[1];
                            (q[*i], qd[*i])
                        }
                    };
                    out.pos[0] += l * u[0];
                    out.pos[1] += l * u[1];
                    for &(i, c) in &angle.coeffs {
                        out.jac[i][0] += l * c * up[0];
                        out.jac[i][1] += l * c * up[1];
                    }
                    // d²/dt² (l e(a)) minus the q̈ part: 2 l̇ ȧ e⊥ - l ȧ² e
                    let k1 = two * ld * w;
                    let k2 = l * w * w;
                    out.bias[0] += k1 * up[0] - k2 * u[0];
                    out.bias[1] += k1 * up[1] - k2 * u[1];
                }
            }
        }
        let mut v = [T::zero(); 2];
        for (col, &rate) in out.jac.iter().zip(qd) {
            v[0] += col[0] * rate;
            v[1] += col[1] * rate;
        }
        out.vel = v;
    }
}

/// A rigid body reduced to its centre of mass, mass, rotational inertia and
/// (for extended bodies) its orientation.
#[derive(Clone, Debug, PartialEq)]
pub struct Body<T> {
    pub name: &'static str,
    pub mass: T,
    pub inertia: T,
    pub com: Point<T>,
    pub angle: Option<Angle<T>>,
}
