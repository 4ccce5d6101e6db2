//! Planar 2R mechanism actuated by two Cartesian springs attached to its tip.
//! The spring forces act on the tip position, so `y` is the tip itself.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::{ActuationModel, Backbone, MechanicalModel};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Spring2RParams {
    pub l1: f64,
    pub l2: f64,
    /// Point masses at the elbow and at the tip.
    pub m1: f64,
    pub m2: f64,
    /// Gravity along `−y`.
    pub gravity: f64,
    /// Viscous joint damping.
    pub damping: f64,
}

impl Default for Spring2RParams {
    fn default() -> Self {
        Spring2RParams {
            l1: 0.3,
            l2: 0.25,
            m1: 0.5,
            m2: 0.3,
            gravity: 9.81,
            damping: 0.05,
        }
    }
}

pub struct Spring2RModel {
    pub params: Spring2RParams,
}

impl Spring2RModel {
    pub fn new(params: Spring2RParams) -> Self {
        Spring2RModel { params }
    }
}

impl MechanicalModel for Spring2RModel {
    fn dof(&self) -> usize {
        2
    }

    fn inertia(&self, q: &DVector<f64>) -> DMatrix<f64> {
        let p = &self.params;
        let c2 = q[1].cos();
        let m11 = p.m1 * p.l1 * p.l1 + p.m2 * (p.l1 * p.l1 + p.l2 * p.l2 + 2.0 * p.l1 * p.l2 * c2);
        let m12 = p.m2 * (p.l2 * p.l2 + p.l1 * p.l2 * c2);
        let m22 = p.m2 * p.l2 * p.l2;
        DMatrix::from_row_slice(2, 2, &[m11, m12, m12, m22])
    }

    fn velocity_forces(&self, q: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let p = &self.params;
        let h = p.m2 * p.l1 * p.l2 * q[1].sin();
        DVector::from_vec(vec![-h * (2.0 * v[0] * v[1] + v[1] * v[1]), h * v[0] * v[0]])
    }

    fn potential(&self, q: &DVector<f64>) -> f64 {
        let p = &self.params;
        let y1 = p.l1 * q[0].sin();
        let y2 = y1 + p.l2 * (q[0] + q[1]).sin();
        p.gravity * (p.m1 * y1 + p.m2 * y2)
    }

    fn potential_gradient(&self, q: &DVector<f64>) -> DVector<f64> {
        let p = &self.params;
        let c1 = q[0].cos();
        let c12 = (q[0] + q[1]).cos();
        DVector::from_vec(vec![
            p.gravity * ((p.m1 + p.m2) * p.l1 * c1 + p.m2 * p.l2 * c12),
            p.gravity * p.m2 * p.l2 * c12,
        ])
    }

    fn damping(&self, _q: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        v * self.params.damping
    }

    fn strictly_damped(&self) -> bool {
        self.params.damping > 0.0
    }

    fn inertia_rate(&self, q: &DVector<f64>, v: &DVector<f64>) -> DMatrix<f64> {
        let p = &self.params;
        let d = -p.m2 * p.l1 * p.l2 * q[1].sin() * v[1];
        DMatrix::from_row_slice(2, 2, &[2.0 * d, d, d, 0.0])
    }
}

pub struct Spring2RActuation {
    pub l1: f64,
    pub l2: f64,
}

impl ActuationModel for Spring2RActuation {
    fn dof(&self) -> usize {
        2
    }

    fn inputs(&self) -> usize {
        2
    }

    fn matrix(&self, q: &DVector<f64>) -> DMatrix<f64> {
        let (s1, c1) = q[0].sin_cos();
        let c12 = (q[0] + q[1]).cos();
        DMatrix::from_row_slice(
            2,
            2,
            &[-self.l1 * s1, self.l1 * c1 + self.l2 * c12, 0.0, self.l2 * c12],
        )
    }

    fn actuation_coordinates(&self, q: &DVector<f64>) -> Option<DVector<f64>> {
        Some(DVector::from_vec(vec![
            self.l1 * q[0].cos(),
            self.l1 * q[0].sin() + self.l2 * (q[0] + q[1]).sin(),
        ]))
    }

    fn is_singular(&self, q: &DVector<f64>) -> bool {
        q[0].sin().abs() < 1e-6 || (q[0] + q[1]).cos().abs() < 1e-6
    }
}

impl Backbone for Spring2RActuation {
    fn backbone(&self, q: &DVector<f64>) -> Vec<[f64; 3]> {
        let (s1, c1) = q[0].sin_cos();
        let (s12, c12) = (q[0] + q[1]).sin_cos();
        vec![
            [0.0, 0.0, 0.0],
            [self.l1 * c1, self.l1 * s1, 0.0],
            [self.l1 * c1 + self.l2 * c12, self.l1 * s1 + self.l2 * s12, 0.0],
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{christoffel_velocity_forces, forward_dynamics, ConfigState};
    use std::f64::consts::PI;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn acceleration_matches_dense_solve() {
        let p = Spring2RParams::default();
        let m = Spring2RModel::new(p.clone());
        let act = Spring2RActuation { l1: p.l1, l2: p.l2 };
        let q = v(&[PI / 4.0, PI / 6.0]);
        let s = ConfigState::at_rest(q.clone()).unwrap();
        let u = v(&[1.0, 0.0]);
        let got = forward_dynamics(&m, &act, &s, &u).unwrap();
        let rhs = act.matrix(&q) * &u - m.potential_gradient(&q);
        let want = m.inertia(&q).lu().solve(&rhs).unwrap();
        assert!((got - want).amax() < 1e-12);
    }

    #[test]
    fn coriolis_and_gravity_are_consistent() {
        let m = Spring2RModel::new(Spring2RParams::default());
        let q = v(&[0.4, 1.1]);
        let qd = v(&[0.7, -1.3]);
        assert!((m.velocity_forces(&q, &qd) - christoffel_velocity_forces(&m, &q, &qd)).amax() < 1e-6);
        let fd = crate::numeric::jacobian_fd(|x| DVector::from_element(1, m.potential(x)), &q, 1e-6);
        assert!((m.potential_gradient(&q).transpose() - fd).amax() < 1e-7);
    }

    #[test]
    fn declared_singularities() {
        let act = Spring2RActuation { l1: 0.3, l2: 0.25 };
        assert!(act.is_singular(&v(&[0.0, 0.3])));
        assert!(act.is_singular(&v(&[0.5, PI / 2.0 - 0.5])));
        assert!(!act.is_singular(&v(&[0.5, 0.3])));
        let det = act.matrix(&v(&[PI, 0.3])).determinant();
        assert!(det.abs() < 1e-12);
    }
}
