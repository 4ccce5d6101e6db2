//! Dynamics of a serial chain of rigid slices, shared by the continuum models.
//!
//! Each slice `k` has a pose `g_k(q)` and a body Jacobian `J_k(q)` mapping `q̇`
//! to its body twist. The equations of motion follow from the Newton–Euler
//! form of every slice projected onto `q`.

use nalgebra::{DMatrix, DVector};

use crate::dynamics::{DynamicsTerms, MechanicalModel};
use crate::spatial::{ad_transpose_wrench, matvec3, tmatvec3, Dual, Pose, Real, Vec6};

#[derive(Clone, Copy, Debug)]
pub struct SliceInertia {
    pub mass: f64,
    /// Principal moments about the slice axes, slice origin at its centroid.
    pub moments: [f64; 3],
}

impl SliceInertia {
    fn apply<T: Real>(&self, eta: &Vec6<T>) -> Vec6<T> {
        let m = T::from_f64(self.mass);
        [
            eta[0].scale(self.moments[0]),
            eta[1].scale(self.moments[1]),
            eta[2].scale(self.moments[2]),
            eta[3] * m,
            eta[4] * m,
            eta[5] * m,
        ]
    }
}

pub struct Frame<T> {
    pub pose: Pose<T>,
    /// Body Jacobian, one twist per generalized coordinate.
    pub jacobian: Vec<Vec6<T>>,
}

/// Body twist `(Rᵀ Ṙ)^∨, Rᵀ ṗ` of a pose carrying a tangent.
pub fn body_twist<T: Real>(g: &Pose<Dual<T>>) -> (Pose<T>, Vec6<T>) {
    let r = g.rot.map(|row| row.map(|x| x.re));
    let rd = g.rot.map(|row| row.map(|x| x.eps));
    let pd = g.pos.map(|x| x.eps);
    // Ω = Rᵀ Ṙ, only the three entries needed for the axial vector
    let om = |i: usize, j: usize| r[0][i] * rd[0][j] + r[1][i] * rd[1][j] + r[2][i] * rd[2][j];
    let w = [om(2, 1), om(0, 2), om(1, 0)];
    let v = tmatvec3(&r, &pd);
    (
        Pose {
            rot: r,
            pos: g.pos.map(|x| x.re),
        },
        [w[0], w[1], w[2], v[0], v[1], v[2]],
    )
}

pub trait SliceChain: Send + Sync {
    fn dof(&self) -> usize;
    fn slices(&self) -> &[SliceInertia];
    fn poses<T: Real>(&self, q: &[T]) -> Vec<Pose<T>>;

    /// Poses and body Jacobians. The default differentiates `poses` with one
    /// forward-mode pass per coordinate.
    fn frames<T: Real>(&self, q: &[T]) -> Vec<Frame<T>> {
        let n = q.len();
        let mut out: Vec<Frame<T>> = Vec::new();
        for j in 0..n {
            let x: Vec<Dual<T>> = q
                .iter()
                .enumerate()
                .map(|(i, &qi)| Dual::new(qi, if i == j { T::one() } else { T::zero() }))
                .collect();
            for (k, g) in self.poses(&x).iter().enumerate() {
                let (pose, col) = body_twist(g);
                if j == 0 {
                    out.push(Frame {
                        pose,
                        jacobian: Vec::with_capacity(n),
                    });
                }
                out[k].jacobian.push(col);
            }
        }
        out
    }

    /// Gravitational acceleration in the base frame.
    fn gravity(&self) -> [f64; 3];
    fn elastic_energy(&self, q: &DVector<f64>) -> f64;
    fn elastic_gradient(&self, q: &DVector<f64>) -> DVector<f64>;
    fn damping_force(&self, q: &DVector<f64>, qdot: &DVector<f64>) -> DVector<f64>;
    fn strictly_damped(&self) -> bool;
}

/// Wraps a [`SliceChain`] as a [`MechanicalModel`].
pub struct ChainDynamics<C>(pub C);

struct Assembled {
    inertia: DMatrix<f64>,
    velocity_forces: DVector<f64>,
    inertia_rate: DMatrix<f64>,
    gravity_gradient: DVector<f64>,
}

fn jac_matrix<T: Copy>(cols: &[Vec6<T>], f: impl Fn(T) -> f64) -> DMatrix<f64> {
    DMatrix::from_fn(6, cols.len(), |r, c| f(cols[c][r]))
}

fn mass_matrix(s: &SliceInertia) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(6, 6);
    for i in 0..3 {
        d[(i, i)] = s.moments[i];
        d[(i + 3, i + 3)] = s.mass;
    }
    d
}

impl<C: SliceChain> ChainDynamics<C> {
    pub fn chain(&self) -> &C {
        &self.0
    }

    fn gravity_term(&self, frames: &[(Pose<f64>, DMatrix<f64>)]) -> DVector<f64> {
        let g = self.0.gravity();
        let mut out = DVector::zeros(self.0.dof());
        for (s, (pose, j)) in self.0.slices().iter().zip(frames) {
            // body-frame gravity force, projected through the linear rows of J
            let gb = tmatvec3(&pose.rot, &g);
            for c in 0..j.ncols() {
                out[c] -= s.mass * (gb[0] * j[(3, c)] + gb[1] * j[(4, c)] + gb[2] * j[(5, c)]);
            }
        }
        out
    }

    fn assemble(&self, q: &DVector<f64>, qdot: &DVector<f64>) -> Assembled {
        let n = self.0.dof();
        let x: Vec<Dual<f64>> = q.iter().zip(qdot.iter()).map(|(&a, &b)| Dual::new(a, b)).collect();
        let frames = self.0.frames(&x);
        let mut inertia = DMatrix::zeros(n, n);
        let mut rate = DMatrix::zeros(n, n);
        let mut c = DVector::zeros(n);
        let mut plain = Vec::with_capacity(frames.len());
        for (s, f) in self.0.slices().iter().zip(&frames) {
            let j = jac_matrix(&f.jacobian, |x| x.re);
            let jd = jac_matrix(&f.jacobian, |x| x.eps);
            let mk = mass_matrix(s);
            let mj = &mk * &j;
            inertia += j.tr_mul(&mj);
            let jtm_jd = mj.tr_mul(&jd);
            rate += &jtm_jd + jtm_jd.transpose();
            let eta = &j * qdot;
            let bias = &jd * qdot;
            let eta6: Vec6<f64> = [eta[0], eta[1], eta[2], eta[3], eta[4], eta[5]];
            let p = s.apply(&eta6);
            let gyro = ad_transpose_wrench(&eta6, &p);
            let mut wrench = &mk * bias;
            for i in 0..6 {
                wrench[i] -= gyro[i];
            }
            c += j.tr_mul(&wrench);
            plain.push((f.pose.map(|v| v.re), j));
        }
        Assembled {
            inertia: symmetrize(inertia),
            velocity_forces: c,
            inertia_rate: symmetrize(rate),
            gravity_gradient: self.gravity_term(&plain),
        }
    }

    fn static_frames(&self, q: &DVector<f64>) -> Vec<(Pose<f64>, DMatrix<f64>)> {
        let qs: Vec<f64> = q.iter().copied().collect();
        self.0
            .frames(&qs)
            .into_iter()
            .map(|f| {
                let j = jac_matrix(&f.jacobian, |x| x);
                (f.pose, j)
            })
            .collect()
    }

    pub fn slice_positions(&self, q: &DVector<f64>) -> Vec<[f64; 3]> {
        let qs: Vec<f64> = q.iter().copied().collect();
        self.0.poses(&qs).iter().map(|p| p.pos).collect()
    }
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

impl<C: SliceChain> MechanicalModel for ChainDynamics<C> {
    fn dof(&self) -> usize {
        self.0.dof()
    }

    fn inertia(&self, q: &DVector<f64>) -> DMatrix<f64> {
        let n = self.0.dof();
        let mut m = DMatrix::zeros(n, n);
        for (s, (_, j)) in self.0.slices().iter().zip(self.static_frames(q)) {
            m += j.tr_mul(&(mass_matrix(s) * &j));
        }
        symmetrize(m)
    }

    fn velocity_forces(&self, q: &DVector<f64>, qdot: &DVector<f64>) -> DVector<f64> {
        self.assemble(q, qdot).velocity_forces
    }

    fn potential(&self, q: &DVector<f64>) -> f64 {
        let g = self.0.gravity();
        let qs: Vec<f64> = q.iter().copied().collect();
        let grav: f64 = self
            .0
            .slices()
            .iter()
            .zip(self.0.poses(&qs))
            .map(|(s, p)| -s.mass * (g[0] * p.pos[0] + g[1] * p.pos[1] + g[2] * p.pos[2]))
            .sum();
        self.0.elastic_energy(q) + grav
    }

    fn potential_gradient(&self, q: &DVector<f64>) -> DVector<f64> {
        self.0.elastic_gradient(q) + self.gravity_term(&self.static_frames(q))
    }

    fn damping(&self, q: &DVector<f64>, qdot: &DVector<f64>) -> DVector<f64> {
        self.0.damping_force(q, qdot)
    }

    fn strictly_damped(&self) -> bool {
        self.0.strictly_damped()
    }

    fn inertia_rate(&self, q: &DVector<f64>, qdot: &DVector<f64>) -> DMatrix<f64> {
        self.assemble(q, qdot).inertia_rate
    }

    fn evaluate(&self, q: &DVector<f64>, qdot: &DVector<f64>) -> DynamicsTerms {
        let a = self.assemble(q, qdot);
        DynamicsTerms {
            inertia: a.inertia,
            velocity_forces: a.velocity_forces,
            potential_gradient: self.0.elastic_gradient(q) + a.gravity_gradient,
            damping: self.0.damping_force(q, qdot),
        }
    }
}

/// World-frame position of a point given in slice coordinates.
pub fn slice_point(pose: &Pose<f64>, local: &[f64; 3]) -> [f64; 3] {
    let r = matvec3(&pose.rot, local);
    [pose.pos[0] + r[0], pose.pos[1] + r[1], pose.pos[2] + r[2]]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::christoffel_velocity_forces;
    use crate::spatial::{rot_y, rot_z};

    /// Spherical pendulum of two slices on a massless rod of length 0.5.
    struct Pendulum {
        slices: Vec<SliceInertia>,
    }

    impl SliceChain for Pendulum {
        fn dof(&self) -> usize {
            3
        }
        fn slices(&self) -> &[SliceInertia] {
            &self.slices
        }
        fn poses<T: Real>(&self, q: &[T]) -> Vec<Pose<T>> {
            let r1 = crate::spatial::matmul3(&rot_z(q[0]), &rot_y(q[1]));
            let l = T::from_f64(0.5) + q[2];
            let g1 = Pose {
                rot: r1,
                pos: matvec3(&r1, &[T::zero(), T::zero(), l]),
            };
            let g2 = g1.compose(&Pose {
                rot: rot_y(q[1].scale(0.5)),
                pos: [l.scale(0.3), T::zero(), T::zero()],
            });
            vec![g1, g2]
        }
        fn gravity(&self) -> [f64; 3] {
            [0.0, 0.0, 9.81]
        }
        fn elastic_energy(&self, q: &DVector<f64>) -> f64 {
            0.5 * 40.0 * q[2] * q[2]
        }
        fn elastic_gradient(&self, q: &DVector<f64>) -> DVector<f64> {
            DVector::from_vec(vec![0.0, 0.0, 40.0 * q[2]])
        }
        fn damping_force(&self, _q: &DVector<f64>, qdot: &DVector<f64>) -> DVector<f64> {
            qdot * 0.1
        }
        fn strictly_damped(&self) -> bool {
            true
        }
    }

    fn model() -> ChainDynamics<Pendulum> {
        ChainDynamics(Pendulum {
            slices: vec![
                SliceInertia {
                    mass: 0.3,
                    moments: [1e-3, 2e-3, 5e-4],
                },
                SliceInertia {
                    mass: 0.2,
                    moments: [4e-4, 1e-3, 3e-4],
                },
            ],
        })
    }

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn coriolis_matches_christoffel_symbols() {
        let m = model();
        let q = v(&[0.3, 0.7, 0.05]);
        let qd = v(&[1.2, -0.4, 0.3]);
        let c = m.velocity_forces(&q, &qd);
        let cc = christoffel_velocity_forces(&m, &q, &qd);
        assert!((&c - &cc).amax() < 1e-6, "{c} {cc}");
    }

    #[test]
    fn inertia_rate_matches_finite_difference() {
        let m = model();
        let q = v(&[0.3, 0.7, 0.05]);
        let qd = v(&[1.2, -0.4, 0.3]);
        let exact = m.inertia_rate(&q, &qd);
        let h = 1e-6;
        let fd = (m.inertia(&(&q + &qd * h)) - m.inertia(&(&q - &qd * h))) / (2.0 * h);
        assert!((exact - fd).amax() < 1e-8);
    }

    #[test]
    fn gravity_gradient_matches_potential() {
        let m = model();
        let q = v(&[0.3, 0.7, 0.05]);
        let g = m.potential_gradient(&q);
        let fd = crate::numeric::jacobian_fd(|x| DVector::from_element(1, m.potential(x)), &q, 1e-6);
        assert!((g.transpose() - fd).amax() < 1e-7);
    }
}
