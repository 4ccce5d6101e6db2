//! Planar satellite in polar coordinates `q = (r, ϑ)` driven by a normal and
//! a tangential thruster. Only the normal force is collocated.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::{ActuationModel, MechanicalModel};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SatelliteParams {
    pub mass: f64,
    /// Uniform field along `−y` of the orbital plane; zero by default.
    pub gravity: f64,
}

impl Default for SatelliteParams {
    fn default() -> Self {
        SatelliteParams {
            mass: 1.0,
            gravity: 0.0,
        }
    }
}

pub struct SatelliteModel {
    pub params: SatelliteParams,
}

impl SatelliteModel {
    pub fn new(params: SatelliteParams) -> Self {
        SatelliteModel { params }
    }
}

impl MechanicalModel for SatelliteModel {
    fn dof(&self) -> usize {
        2
    }

    fn inertia(&self, q: &DVector<f64>) -> DMatrix<f64> {
        let m = self.params.mass;
        DMatrix::from_row_slice(2, 2, &[m, 0.0, 0.0, m * q[0] * q[0]])
    }

    fn velocity_forces(&self, q: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let m = self.params.mass;
        DVector::from_vec(vec![-m * q[0] * v[1] * v[1], 2.0 * m * q[0] * v[0] * v[1]])
    }

    fn potential(&self, q: &DVector<f64>) -> f64 {
        self.params.mass * self.params.gravity * q[0] * q[1].sin()
    }

    fn potential_gradient(&self, q: &DVector<f64>) -> DVector<f64> {
        let mg = self.params.mass * self.params.gravity;
        DVector::from_vec(vec![mg * q[1].sin(), mg * q[0] * q[1].cos()])
    }

    fn inertia_rate(&self, q: &DVector<f64>, v: &DVector<f64>) -> DMatrix<f64> {
        let m = self.params.mass;
        DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 2.0 * m * q[0] * v[0]])
    }
}

/// `A(q) = [[1, 0], [0, r]]`: radial thrust and a tangential force at radius `r`.
pub struct SatelliteActuation;

impl ActuationModel for SatelliteActuation {
    fn dof(&self) -> usize {
        2
    }

    fn inputs(&self) -> usize {
        2
    }

    fn matrix(&self, q: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, q[0]])
    }

    fn is_singular(&self, q: &DVector<f64>) -> bool {
        q[0].abs() < 1e-9
    }
}
