//! Linear mechanics with constant or volume-gradient actuation.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::dynamics::{ActuationModel, MechanicalModel};
use crate::error::{check_dim, Error, Result};
use crate::numeric::{directional_derivative5, fd_step};

/// `M q̈ + B q̇ + K (q − q_rest) = A u` with constant diagonal `M`, `B`, `K`.
pub struct LinearMechanics {
    pub mass: DVector<f64>,
    pub stiffness: DVector<f64>,
    pub damping: DVector<f64>,
    pub rest: DVector<f64>,
}

impl LinearMechanics {
    pub fn new(mass: Vec<f64>, stiffness: Vec<f64>, damping: Vec<f64>) -> Result<Self> {
        let n = mass.len();
        check_dim("stiffness", n, stiffness.len())?;
        check_dim("damping", n, damping.len())?;
        if mass.iter().any(|&m| !(m > 0.0)) {
            return Err(Error::InvalidArgument("masses must be positive".into()));
        }
        Ok(LinearMechanics {
            mass: DVector::from_vec(mass),
            stiffness: DVector::from_vec(stiffness),
            damping: DVector::from_vec(damping),
            rest: DVector::zeros(n),
        })
    }
}

impl MechanicalModel for LinearMechanics {
    fn dof(&self) -> usize {
        self.mass.len()
    }

    fn inertia(&self, _q: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.mass)
    }

    fn velocity_forces(&self, _q: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(v.len())
    }

    fn potential(&self, q: &DVector<f64>) -> f64 {
        let e = q - &self.rest;
        0.5 * e.dot(&self.stiffness.component_mul(&e))
    }

    fn potential_gradient(&self, q: &DVector<f64>) -> DVector<f64> {
        self.stiffness.component_mul(&(q - &self.rest))
    }

    fn damping(&self, _q: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        self.damping.component_mul(v)
    }

    fn strictly_damped(&self) -> bool {
        self.damping.iter().all(|&b| b > 0.0)
    }

    fn inertia_rate(&self, q: &DVector<f64>, _v: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(q.len(), q.len())
    }
}

/// Configuration-independent `A`; `g(q) = Aᵀ q`.
pub struct ConstantActuation {
    pub a: DMatrix<f64>,
}

impl ActuationModel for ConstantActuation {
    fn dof(&self) -> usize {
        self.a.nrows()
    }

    fn inputs(&self) -> usize {
        self.a.ncols()
    }

    fn matrix(&self, _q: &DVector<f64>) -> DMatrix<f64> {
        self.a.clone()
    }

    fn actuation_coordinates(&self, q: &DVector<f64>) -> Option<DVector<f64>> {
        Some(self.a.tr_mul(q))
    }

    fn coordinate_inverse(&self, columns: &[usize], y: &DVector<f64>) -> Option<DVector<f64>> {
        if columns.len() != self.a.nrows() {
            return None;
        }
        self.a.select_columns(columns).transpose().lu().solve(y)
    }
}

pub type VolumeFn = Arc<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>;

/// Fluidic chambers whose generalized forces are pressure times the
/// gradient of the chamber volume.
#[derive(Clone)]
pub struct VolumetricActuation {
    dof: usize,
    volumes: Vec<VolumeFn>,
    reference: Vec<f64>,
}

impl VolumetricActuation {
    pub fn new(dof: usize, volumes: Vec<VolumeFn>, reference: Vec<f64>) -> Result<Self> {
        check_dim("reference volumes", volumes.len(), reference.len())?;
        if volumes.is_empty() {
            return Err(Error::InvalidArgument("at least one chamber is required".into()));
        }
        Ok(VolumetricActuation {
            dof,
            volumes,
            reference,
        })
    }

    pub fn volume(&self, i: usize, q: &DVector<f64>) -> f64 {
        (self.volumes[i])(q)
    }
}

impl ActuationModel for VolumetricActuation {
    fn dof(&self) -> usize {
        self.dof
    }

    fn inputs(&self) -> usize {
        self.volumes.len()
    }

    /// Column `i` is `∂V_i/∂q` by fourth-order central differences.
    fn matrix(&self, q: &DVector<f64>) -> DMatrix<f64> {
        let n = self.dof;
        let mut a = DMatrix::zeros(n, self.volumes.len());
        for k in 0..n {
            let mut e = DVector::zeros(n);
            e[k] = 1.0;
            let h = fd_step(1e-3, q[k]);
            let d = directional_derivative5(
                |x| DVector::from_iterator(self.volumes.len(), self.volumes.iter().map(|v| v(x))),
                q,
                &e,
                h,
            );
            a.row_mut(k).copy_from(&d.transpose());
        }
        a
    }

    /// Volume variations `V_i(q) − V_i*`.
    fn actuation_coordinates(&self, q: &DVector<f64>) -> Option<DVector<f64>> {
        Some(DVector::from_iterator(
            self.volumes.len(),
            self.volumes.iter().zip(&self.reference).map(|(v, r)| v(q) - r),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_volumes_give_constant_matrix() {
        let vol = VolumetricActuation::new(
            2,
            vec![Arc::new(|q: &DVector<f64>| 2.0 * q[0] - q[1])],
            vec![0.0],
        )
        .unwrap();
        let a1 = vol.matrix(&DVector::from_vec(vec![0.3, -1.0]));
        let a2 = vol.matrix(&DVector::from_vec(vec![5.0, 2.0]));
        assert!((a1[(0, 0)] - 2.0).abs() < 1e-12 && (a1[(1, 0)] + 1.0).abs() < 1e-12);
        assert!((a1 - a2).amax() < 1e-11);
    }

    #[test]
    fn bilinear_volume_gradient() {
        let vol =
            VolumetricActuation::new(2, vec![Arc::new(|q: &DVector<f64>| q[0] * q[1])], vec![0.5]).unwrap();
        let q = DVector::from_vec(vec![0.7, -1.2]);
        let a = vol.matrix(&q);
        assert!((a[(0, 0)] - q[1]).abs() < 1e-12 && (a[(1, 0)] - q[0]).abs() < 1e-12);
        assert!((vol.actuation_coordinates(&q).unwrap()[0] - (q[0] * q[1] - 0.5)).abs() < 1e-15);
    }

    #[test]
    fn constant_inverse() {
        let act = ConstantActuation {
            a: DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.3, 1.0]),
        };
        let q = DVector::from_vec(vec![0.4, -0.9]);
        let g = act.actuation_coordinates(&q).unwrap();
        let back = act.coordinate_inverse(&[0, 1], &g).unwrap();
        assert!((back - q).amax() < 1e-14);
    }
}
