//! One-joint finger with two tendons: a flexor routed through two eyelets at
//! offsets `(a, b)` from the joint, and a second tendon on a pulley of radius `R`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::{ActuationModel, Backbone, MechanicalModel};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FingerParams {
    /// Tendon attachment offsets of the flexor.
    pub a: f64,
    pub b: f64,
    /// Pulley radius of the second tendon.
    pub radius: f64,
    pub inertia: f64,
    pub stiffness: f64,
    pub damping: f64,
    /// Phalanx length, used for the exported backbone only.
    pub length: f64,
}

impl Default for FingerParams {
    fn default() -> Self {
        FingerParams {
            a: 0.01,
            b: 0.02,
            radius: 0.008,
            inertia: 2e-4,
            stiffness: 0.02,
            damping: 5e-4,
            length: 0.04,
        }
    }
}

pub struct FingerModel {
    pub params: FingerParams,
}

impl FingerModel {
    pub fn new(params: FingerParams) -> Self {
        FingerModel { params }
    }
}

impl MechanicalModel for FingerModel {
    fn dof(&self) -> usize {
        1
    }

    fn inertia(&self, _q: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, self.params.inertia)
    }

    fn velocity_forces(&self, _q: &DVector<f64>, _v: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(1)
    }

    fn potential(&self, q: &DVector<f64>) -> f64 {
        0.5 * self.params.stiffness * q[0] * q[0]
    }

    fn potential_gradient(&self, q: &DVector<f64>) -> DVector<f64> {
        DVector::from_element(1, self.params.stiffness * q[0])
    }

    fn damping(&self, _q: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        v * self.params.damping
    }

    fn strictly_damped(&self) -> bool {
        self.params.damping > 0.0
    }

    fn inertia_rate(&self, _q: &DVector<f64>, _v: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(1, 1)
    }
}

pub struct FingerActuation {
    pub a: f64,
    pub b: f64,
    pub radius: f64,
    pub length: f64,
}

impl FingerActuation {
    pub fn new(p: &FingerParams) -> Self {
        FingerActuation {
            a: p.a,
            b: p.b,
            radius: p.radius,
            length: p.length,
        }
    }

    fn rho(&self) -> f64 {
        self.a.hypot(self.b)
    }

    fn beta(&self) -> f64 {
        (self.a / self.b).atan()
    }

    /// Joint angle at which the flexor loses its moment arm.
    pub fn flexor_singularity(&self) -> f64 {
        -2.0 * self.beta()
    }
}

impl ActuationModel for FingerActuation {
    fn dof(&self) -> usize {
        1
    }

    fn inputs(&self) -> usize {
        2
    }

    fn matrix(&self, q: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_row_slice(1, 2, &[self.rho() * (self.beta() + 0.5 * q[0]).sin(), -self.radius])
    }

    /// Tendon excursions from `q = 0`.
    fn actuation_coordinates(&self, q: &DVector<f64>) -> Option<DVector<f64>> {
        let (rho, beta) = (self.rho(), self.beta());
        Some(DVector::from_vec(vec![
            -2.0 * rho * ((beta + 0.5 * q[0]).cos() - beta.cos()),
            -self.radius * q[0],
        ]))
    }

    fn coordinate_inverse(&self, columns: &[usize], y: &DVector<f64>) -> Option<DVector<f64>> {
        match columns {
            [0] => {
                let (rho, beta) = (self.rho(), self.beta());
                let c = beta.cos() - y[0] / (2.0 * rho);
                (c.abs() <= 1.0).then(|| DVector::from_element(1, 2.0 * (c.acos() - beta)))
            }
            [1] => Some(DVector::from_element(1, -y[0] / self.radius)),
            _ => None,
        }
    }
}

impl Backbone for FingerActuation {
    fn backbone(&self, q: &DVector<f64>) -> Vec<[f64; 3]> {
        let (s, c) = q[0].sin_cos();
        vec![[0.0, 0.0, 0.0], [self.length * c, self.length * s, 0.0]]
    }
}
