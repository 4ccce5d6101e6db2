//! Two-segment piecewise-constant-curvature arm driven by three tendons.
//!
//! Each segment has `(κ, φ, δL)`: `κ` is the bending angle of the arc, `φ` the
//! bending direction and `δL` the elongation. Tendon `i` sits at distance `d`
//! from the backbone at angle `α_i = 2π(i − 1)/3`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::chain::{ChainDynamics, SliceChain, SliceInertia};
use crate::collocation::UnactuatedComplement;
use crate::dynamics::{ActuationModel, Backbone};
use crate::spatial::{matmul3, rot_y, rot_z, Pose, Real};

pub const TENDON_ANGLES: [f64; 3] = [0.0, 2.0 * PI / 3.0, 4.0 * PI / 3.0];
const SLICE_FRACTIONS: [f64; 3] = [1.0 / 3.0, 2.0 / 3.0, 1.0];

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Pcc2Params {
    /// Tendon offset from the backbone.
    pub d: f64,
    /// Rest length of each segment.
    pub length: f64,
    pub mass: f64,
    /// Radius of the lumped discs, for their rotational inertia.
    pub radius: f64,
    pub bend_stiffness: f64,
    pub axial_stiffness: f64,
    pub bend_damping: f64,
    pub direction_damping: f64,
    pub axial_damping: f64,
    /// Gravity along the hanging direction `+z`.
    pub gravity: f64,
    /// Coordinate inertia added to `φ`, which keeps `M` invertible at `κ = 0`.
    pub direction_inertia: f64,
}

impl Default for Pcc2Params {
    fn default() -> Self {
        Pcc2Params {
            d: 0.01,
            length: 0.15,
            mass: 0.05,
            radius: 0.015,
            bend_stiffness: 0.02,
            axial_stiffness: 40.0,
            bend_damping: 2e-3,
            direction_damping: 2e-5,
            axial_damping: 0.2,
            gravity: 9.81,
            direction_inertia: 1e-6,
        }
    }
}

impl Pcc2Params {
    pub fn undamped(mut self) -> Self {
        self.bend_damping = 0.0;
        self.direction_damping = 0.0;
        self.axial_damping = 0.0;
        self
    }
}

/// `(1 − cos x)/x` and `sin x / x`, with series near zero.
fn arc_factors<T: Real>(x: T) -> (T, T) {
    if x.value().abs() < 0.1 {
        let x2 = x * x;
        let f1 = x * (T::from_f64(0.5) - x2.scale(1.0 / 24.0) + (x2 * x2).scale(1.0 / 720.0)
            - (x2 * x2 * x2).scale(1.0 / 40_320.0));
        let f2 = T::one() - x2.scale(1.0 / 6.0) + (x2 * x2).scale(1.0 / 120.0)
            - (x2 * x2 * x2).scale(1.0 / 5040.0)
            + (x2 * x2 * x2 * x2).scale(1.0 / 362_880.0);
        (f1, f2)
    } else {
        ((T::one() - x.cos()) / x, x.sin() / x)
    }
}

/// Pose of the point at fraction `s` of a segment, relative to its base.
pub fn segment_pose<T: Real>(kappa: T, phi: T, length: T, s: f64) -> Pose<T> {
    let x = kappa.scale(s);
    let (f1, f2) = arc_factors(x);
    let rot = matmul3(&matmul3(&rot_z(phi), &rot_y(x)), &rot_z(-phi));
    let ls = length.scale(s);
    Pose {
        rot,
        pos: [ls * phi.cos() * f1, ls * phi.sin() * f1, ls * f2],
    }
}

pub struct Pcc2Chain {
    pub params: Pcc2Params,
    slices: Vec<SliceInertia>,
}

impl Pcc2Chain {
    pub fn new(params: Pcc2Params) -> Self {
        let m = params.mass / 3.0;
        let r2 = params.radius * params.radius;
        let slice = SliceInertia {
            mass: m,
            moments: [m * r2 / 4.0, m * r2 / 4.0, m * r2 / 2.0],
        };
        Pcc2Chain {
            params,
            slices: vec![slice; 6],
        }
    }

    fn sampled<T: Real>(&self, q: &[T], fractions: &[f64]) -> Vec<Pose<T>> {
        let l0 = T::from_f64(self.params.length);
        let mut base = Pose::identity();
        let mut out = Vec::with_capacity(2 * fractions.len());
        for seg in 0..2 {
            let (k, p, dl) = (q[3 * seg], q[3 * seg + 1], q[3 * seg + 2]);
            for &s in fractions {
                out.push(base.compose(&segment_pose(k, p, l0 + dl, s)));
            }
            base = base.compose(&segment_pose(k, p, l0 + dl, 1.0));
        }
        out
    }
}

impl SliceChain for Pcc2Chain {
    fn dof(&self) -> usize {
        6
    }

    fn slices(&self) -> &[SliceInertia] {
        &self.slices
    }

    fn poses<T: Real>(&self, q: &[T]) -> Vec<Pose<T>> {
        self.sampled(q, &SLICE_FRACTIONS)
    }

    fn gravity(&self) -> [f64; 3] {
        [0.0, 0.0, self.params.gravity]
    }

    fn elastic_energy(&self, q: &DVector<f64>) -> f64 {
        let p = &self.params;
        0.5 * p.bend_stiffness * (q[0] * q[0] + q[3] * q[3])
            + 0.5 * p.axial_stiffness * (q[2] * q[2] + q[5] * q[5])
    }

    fn elastic_gradient(&self, q: &DVector<f64>) -> DVector<f64> {
        let p = &self.params;
        DVector::from_vec(vec![
            p.bend_stiffness * q[0],
            0.0,
            p.axial_stiffness * q[2],
            p.bend_stiffness * q[3],
            0.0,
            p.axial_stiffness * q[5],
        ])
    }

    fn damping_force(&self, _q: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let p = &self.params;
        let b = [p.bend_damping, p.direction_damping, p.axial_damping];
        DVector::from_fn(6, |i, _| b[i % 3] * v[i])
    }

    fn strictly_damped(&self) -> bool {
        let p = &self.params;
        p.bend_damping > 0.0 && p.direction_damping > 0.0 && p.axial_damping > 0.0
    }
}

/// Slice dynamics plus the coordinate inertia on `φ`.
pub struct Pcc2Model {
    chain: ChainDynamics<Pcc2Chain>,
}

impl Pcc2Model {
    pub fn new(params: Pcc2Params) -> Self {
        Pcc2Model {
            chain: ChainDynamics(Pcc2Chain::new(params)),
        }
    }

    pub fn params(&self) -> &Pcc2Params {
        &self.chain.0.params
    }

    fn regularize(&self, m: &mut DMatrix<f64>) {
        let e = self.params().direction_inertia;
        m[(1, 1)] += e;
        m[(4, 4)] += e;
    }
}

impl crate::dynamics::MechanicalModel for Pcc2Model {
    fn dof(&self) -> usize {
        6
    }

    fn inertia(&self, q: &DVector<f64>) -> DMatrix<f64> {
        let mut m = self.chain.inertia(q);
        self.regularize(&mut m);
        m
    }

    fn velocity_forces(&self, q: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        self.chain.velocity_forces(q, v)
    }

    fn potential(&self, q: &DVector<f64>) -> f64 {
        self.chain.potential(q)
    }

    fn potential_gradient(&self, q: &DVector<f64>) -> DVector<f64> {
        self.chain.potential_gradient(q)
    }

    fn damping(&self, q: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        self.chain.damping(q, v)
    }

    fn strictly_damped(&self) -> bool {
        self.chain.strictly_damped()
    }

    fn inertia_rate(&self, q: &DVector<f64>, v: &DVector<f64>) -> DMatrix<f64> {
        self.chain.inertia_rate(q, v)
    }

    fn evaluate(&self, q: &DVector<f64>, v: &DVector<f64>) -> crate::dynamics::DynamicsTerms {
        let mut t = self.chain.evaluate(q, v);
        self.regularize(&mut t.inertia);
        t
    }
}

/// Tendon actuation of the two-segment arm.
pub struct Pcc2Actuation {
    pub d: f64,
    pub length: f64,
}

impl Pcc2Actuation {
    /// Length change of tendon `i` inside one segment.
    fn segment_elongation(&self, kappa: f64, phi: f64, dl: f64, i: usize) -> f64 {
        dl - self.d * kappa * (phi - TENDON_ANGLES[i]).cos()
    }
}

impl ActuationModel for Pcc2Actuation {
    fn dof(&self) -> usize {
        6
    }

    fn inputs(&self) -> usize {
        3
    }

    fn matrix(&self, q: &DVector<f64>) -> DMatrix<f64> {
        let d = self.d;
        DMatrix::from_fn(6, 3, |row, col| {
            let seg = row / 3;
            let kappa = q[3 * seg];
            let phi = q[3 * seg + 1];
            let a = TENDON_ANGLES[col];
            match row % 3 {
                0 => -d * (phi - a).cos(),
                1 => d * kappa * (phi - a).sin(),
                _ => 1.0,
            }
        })
    }

    fn actuation_coordinates(&self, q: &DVector<f64>) -> Option<DVector<f64>> {
        Some(DVector::from_fn(3, |i, _| {
            self.segment_elongation(q[0], q[1], q[2], i) + self.segment_elongation(q[3], q[4], q[5], i)
        }))
    }

    fn is_singular(&self, q: &DVector<f64>) -> bool {
        q[0].abs() < 1e-9 && q[3].abs() < 1e-9 && (q[1] - q[4]).sin().abs() < 1e-9
    }
}

impl Backbone for Pcc2Actuation {
    fn backbone(&self, q: &DVector<f64>) -> Vec<[f64; 3]> {
        let fractions: Vec<f64> = (1..=10).map(|k| k as f64 / 10.0).collect();
        let chain = Pcc2Chain::new(Pcc2Params {
            d: self.d,
            length: self.length,
            ..Pcc2Params::default()
        });
        let qs: Vec<f64> = q.iter().copied().collect();
        std::iter::once([0.0; 3])
            .chain(chain.sampled(&qs, &fractions).iter().map(|p| p.pos))
            .collect()
    }
}

/// Tendon elongations inside the first segment, an alternative `θ_u`.
pub struct FirstSegmentTendons {
    pub d: f64,
}

impl UnactuatedComplement for FirstSegmentTendons {
    fn value(&self, q: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(3, |i, _| q[2] - self.d * q[0] * (q[1] - TENDON_ANGLES[i]).cos())
    }

    fn jacobian(&self, q: &DVector<f64>) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(3, 6);
        for i in 0..3 {
            let a = q[1] - TENDON_ANGLES[i];
            j[(i, 0)] = -self.d * a.cos();
            j[(i, 1)] = self.d * q[0] * a.sin();
            j[(i, 2)] = 1.0;
        }
        j
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{christoffel_velocity_forces, MechanicalModel};

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn matrix_matches_printed_entries() {
        let act = Pcc2Actuation { d: 0.01, length: 0.15 };
        let q = v(&[0.7, 0.4, 0.01, -0.3, 2.1, -0.02]);
        let a = act.matrix(&q);
        let (d, s3) = (0.01, 3f64.sqrt() / 2.0);
        for (seg, (k, p)) in [(q[0], q[1]), (q[3], q[4])].into_iter().enumerate() {
            let (s, c) = p.sin_cos();
            let r = 3 * seg;
            let want = [
                [-d * c, d * (0.5 * c - s3 * s), d * (0.5 * c + s3 * s)],
                [d * k * s, -d * k * (0.5 * s + s3 * c), -d * k * (0.5 * s - s3 * c)],
                [1.0, 1.0, 1.0],
            ];
            for i in 0..3 {
                for j in 0..3 {
                    assert!((a[(r + i, j)] - want[i][j]).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn arc_factors_are_continuous() {
        let (a, b) = arc_factors(0.1 - 1e-12);
        let (c, d) = arc_factors(0.1 + 1e-12);
        assert!((a - c).abs() < 1e-12 && (b - d).abs() < 1e-12);
        // straight segment of length 0.2 points along z
        let p = segment_pose(0.0, 0.3, 0.2, 1.0);
        assert!((p.pos[2] - 0.2).abs() < 1e-15 && p.pos[0].abs() < 1e-15);
    }

    #[test]
    fn tip_of_a_quarter_circle() {
        let p = segment_pose(PI / 2.0, 0.0, 0.3, 1.0);
        let r = 0.3 / (PI / 2.0);
        assert!((p.pos[0] - r).abs() < 1e-14 && (p.pos[2] - r).abs() < 1e-14);
        assert!((p.rot[0][2] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn dynamics_terms_are_consistent() {
        let m = Pcc2Model::new(Pcc2Params::default());
        let q = v(&[0.5, 0.3, 0.01, -0.4, 1.2, 0.005]);
        let qd = v(&[0.6, -1.1, 0.02, 0.9, 0.4, -0.03]);
        let c = m.velocity_forces(&q, &qd);
        let cc = christoffel_velocity_forces(&m, &q, &qd);
        assert!((&c - &cc).amax() < 1e-6, "{}", (&c - &cc).amax());
        let fd = crate::numeric::jacobian_fd(|x| DVector::from_element(1, m.potential(x)), &q, 1e-6);
        assert!((m.potential_gradient(&q).transpose() - fd).amax() < 1e-7);
    }
}
