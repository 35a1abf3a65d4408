//! Mass-matrix assembly and the linear solve for generalized accelerations.

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::sim::kinematics::{Body, PointEval};

/// `M(q) q̈ = rhs` with `rhs` collecting applied, gravity and velocity-product terms.
#[derive(Clone, Debug)]
pub struct MassSystem<T> {
    pub n: usize,
    pub mass: Vec<T>,
    pub rhs: Vec<T>,
}

impl<T: Real> MassSystem<T> {
    pub fn new(n: usize) -> Self {
        Self { n, mass: vec![T::zero(); n * n], rhs: vec![T::zero(); n] }
    }

    pub fn clear(&mut self) {
        self.mass.iter_mut().for_each(|v| *v = T::zero());
        self.rhs.iter_mut().for_each(|v| *v = T::zero());
    }

    /// Adds the body's inertia, weight and velocity-product force.
    pub fn add_body(&mut self, body: &Body<T>, q: &[T], qd: &[T], gravity: T, ev: &mut PointEval<T>) {
        let n = self.n;
        body.com.eval_into(q, qd, ev);
        let m = body.mass;
        let f = [-m * ev.bias[0], -m * (gravity + ev.bias[1])];
        let nz: Vec<usize> = (0..n).filter(|&k| ev.jac[k] != [T::zero(); 2]).collect();
        for &i in &nz {
            let ji = ev.jac[i];
            self.rhs[i] += ji[0] * f[0] + ji[1] * f[1];
            for &j in &nz {
                let jj = ev.jac[j];
                self.mass[i * n + j] += m * (ji[0] * jj[0] + ji[1] * jj[1]);
            }
        }
        if let Some(angle) = &body.angle {
            for &(i, ci) in &angle.coeffs {
                for &(j, cj) in &angle.coeffs {
                    self.mass[i * n + j] += body.inertia * ci * cj;
                }
            }
        }
    }

    pub fn copy_from(&mut self, other: &Self) {
        self.mass.copy_from_slice(&other.mass);
        self.rhs.copy_from_slice(&other.rhs);
    }

    /// Linearly implicit viscous force `-c (v + h a)` along world axis `axis`
    /// at the evaluated point: the `h c j j^T` part goes into the matrix.
    pub fn add_implicit_damping(&mut self, ev: &PointEval<T>, axis: usize, c: T, h: T) {
        let n = self.n;
        let ch = c * h;
        for i in 0..n {
            let ji = ev.jac[i][axis];
            if ji == T::zero() {
                continue;
            }
            self.rhs[i] -= ji * c * ev.vel[axis];
            for j in 0..n {
                self.mass[i * n + j] += ch * ji * ev.jac[j][axis];
            }
        }
    }

    /// Adds `J^T f` for a force `f` applied at the evaluated point.
    pub fn add_point_force(&mut self, ev: &PointEval<T>, f: [T; 2]) {
        for (r, col) in self.rhs.iter_mut().zip(&ev.jac) {
            *r += col[0] * f[0] + col[1] * f[1];
        }
    }

    pub fn kinetic_energy(&self, qd: &[T]) -> T {
        let n = self.n;
        let mut ke = T::zero();
        for i in 0..n {
            for j in 0..n {
                ke += qd[i] * self.mass[i * n + j] * qd[j];
            }
        }
        ke * T::of(0.5)
    }
}

/// In-place Cholesky solve of a symmetric positive definite system.
pub fn cholesky_solve<T: Real>(a: &mut [T], b: &mut [T], n: usize) -> Result<()> {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > T::zero()) {
            return Err(Error::Divergence { time: f64::NAN, magnitude: d.to_f64_lossy() });
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
    }
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= a[i * n + k] * b[k];
        }
        b[i] = s / a[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= a[k * n + i] * b[k];
        }
        b[i] = s / a[i * n + i];
    }
    Ok(())
}

/// Solves for accelerations with some coordinates' accelerations prescribed.
/// Consumes the system's matrices.
pub fn solve_prescribed<T: Real>(sys: &mut MassSystem<T>, prescribed: &[(usize, T)]) -> Result<Vec<T>> {
    let n = sys.n;
    for &(p, acc) in prescribed {
        for i in 0..n {
            let mip = sys.mass[i * n + p];
            sys.rhs[i] -= mip * acc;
            sys.mass[i * n + p] = T::zero();
            sys.mass[p * n + i] = T::zero();
        }
        sys.mass[p * n + p] = T::one();
        sys.rhs[p] = acc;
    }
    let mut x = sys.rhs.clone();
    cholesky_solve(&mut sys.mass, &mut x, n)?;
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_matches_known_solution() {
        let mut a = vec![4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0];
        let orig = a.clone();
        let x = [1.0, -2.0, 0.5];
        let mut b: Vec<f64> = (0..3).map(|i| (0..3).map(|j| orig[i * 3 + j] * x[j]).sum()).collect();
        cholesky_solve(&mut a, &mut b, 3).unwrap();
        for i in 0..3 {
            assert!((b[i] - x[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn indefinite_matrix_reported() {
        let mut a = vec![1.0, 2.0, 2.0, 1.0];
        let mut b = vec![0.0, 0.0];
        assert!(cholesky_solve(&mut a, &mut b, 2).is_err());
    }
}
