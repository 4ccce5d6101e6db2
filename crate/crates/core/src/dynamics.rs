//! Euler–Lagrange model contract in manipulator form
//! `M(q) q̈ + c(q, q̇) + ∇U(q) + d(q, q̇) = A(q) u`, plus energy diagnostics.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use crate::error::{check_dim, Error, Result};
use crate::numeric::{directional_derivative5_mat, fd_step, spd_solve};

#[derive(Clone, Debug, PartialEq)]
pub struct ConfigState {
    pub q: DVector<f64>,
    pub qdot: DVector<f64>,
}

impl ConfigState {
    pub fn new(q: DVector<f64>, qdot: DVector<f64>) -> Result<Self> {
        if q.is_empty() {
            return Err(Error::InvalidArgument("configuration must have at least one coordinate".into()));
        }
        check_dim("qdot", q.len(), qdot.len())?;
        if q.iter().chain(qdot.iter()).any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("state contains non-finite entries".into()));
        }
        Ok(ConfigState { q, qdot })
    }

    pub fn at_rest(q: DVector<f64>) -> Result<Self> {
        let n = q.len();
        Self::new(q, DVector::zeros(n))
    }

    pub fn dof(&self) -> usize {
        self.q.len()
    }
}

/// All terms of the equations of motion at one state.
#[derive(Clone, Debug)]
pub struct DynamicsTerms {
    pub inertia: DMatrix<f64>,
    pub velocity_forces: DVector<f64>,
    pub potential_gradient: DVector<f64>,
    pub damping: DVector<f64>,
}

pub trait MechanicalModel: Send + Sync {
    fn dof(&self) -> usize;
    fn inertia(&self, q: &DVector<f64>) -> DMatrix<f64>;
    fn velocity_forces(&self, q: &DVector<f64>, qdot: &DVector<f64>) -> DVector<f64>;
    fn potential(&self, q: &DVector<f64>) -> f64;
    fn potential_gradient(&self, q: &DVector<f64>) -> DVector<f64>;

    fn damping(&self, _q: &DVector<f64>, qdot: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(qdot.len())
    }

    /// Whether `q̇ᵀ d(q, q̇) > 0` for every nonzero `q̇`.
    fn strictly_damped(&self) -> bool {
        false
    }

    /// `Ṁ = Σ_k ∂M/∂q_k q̇_k`. The default differentiates `inertia` numerically
    /// along `q̇`; models with exact derivatives should override it.
    fn inertia_rate(&self, q: &DVector<f64>, qdot: &DVector<f64>) -> DMatrix<f64> {
        let n = qdot.norm();
        if n == 0.0 {
            return DMatrix::zeros(q.len(), q.len());
        }
        let dir = qdot / n;
        let h = fd_step(1e-3, q.amax());
        directional_derivative5_mat(|x| self.inertia(x), q, &dir, h) * n
    }

    fn evaluate(&self, q: &DVector<f64>, qdot: &DVector<f64>) -> DynamicsTerms {
        DynamicsTerms {
            inertia: self.inertia(q),
            velocity_forces: self.velocity_forces(q, qdot),
            potential_gradient: self.potential_gradient(q),
            damping: self.damping(q, qdot),
        }
    }
}

/// Coriolis/centrifugal forces from Christoffel symbols of the first kind,
/// with `∂M/∂q_k` taken by central differences.
pub fn christoffel_velocity_forces(
    model: &dyn MechanicalModel,
    q: &DVector<f64>,
    qdot: &DVector<f64>,
) -> DVector<f64> {
    let n = q.len();
    let partials: Vec<DMatrix<f64>> = (0..n)
        .map(|k| {
            let h = fd_step(1e-4, q[k]);
            let mut qp = q.clone();
            let mut qm = q.clone();
            qp[k] += h;
            qm[k] -= h;
            (model.inertia(&qp) - model.inertia(&qm)) / (2.0 * h)
        })
        .collect();
    let mut c = DVector::zeros(n);
    for i in 0..n {
        let mut acc = 0.0;
        for j in 0..n {
            for k in 0..n {
                acc += (partials[k][(i, j)] - 0.5 * partials[i][(j, k)]) * qdot[j] * qdot[k];
            }
        }
        c[i] = acc;
    }
    c
}

pub trait ActuationModel: Send + Sync {
    fn dof(&self) -> usize;
    fn inputs(&self) -> usize;
    fn matrix(&self, q: &DVector<f64>) -> DMatrix<f64>;

    /// Closed-form actuation coordinates `g` with `∂g/∂q = Aᵀ`, if known.
    fn actuation_coordinates(&self, _q: &DVector<f64>) -> Option<DVector<f64>> {
        None
    }

    fn is_singular(&self, _q: &DVector<f64>) -> bool {
        false
    }

    /// Closed-form inverse of `q ↦ g(q)[columns]` when `columns.len() == dof`.
    fn coordinate_inverse(&self, _columns: &[usize], _y: &DVector<f64>) -> Option<DVector<f64>> {
        None
    }
}

/// Sampled centerline of a continuum body, for export and tip-error metrics.
pub trait Backbone: Send + Sync {
    fn backbone(&self, q: &DVector<f64>) -> Vec<[f64; 3]>;

    fn tip(&self, q: &DVector<f64>) -> [f64; 3] {
        *self.backbone(q).last().expect("backbone has at least one point")
    }
}

/// A mechanical model paired with its actuation.
#[derive(Clone)]
pub struct Plant {
    pub name: String,
    pub mechanics: Arc<dyn MechanicalModel>,
    pub actuation: Arc<dyn ActuationModel>,
    pub backbone: Option<Arc<dyn Backbone>>,
    /// Box of configurations on which the model is meant to be sampled.
    pub domain: Vec<(f64, f64)>,
    /// Configuration where simulations start by default.
    pub home: DVector<f64>,
    /// Preferred actuated rows or input columns for a chart, if any.
    pub chart_selection: Option<Vec<usize>>,
}

impl std::fmt::Debug for Plant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Plant")
            .field("name", &self.name)
            .field("dof", &self.mechanics.dof())
            .field("inputs", &self.actuation.inputs())
            .finish()
    }
}

impl Plant {
    pub fn dof(&self) -> usize {
        self.mechanics.dof()
    }

    pub fn inputs(&self) -> usize {
        self.actuation.inputs()
    }

    pub fn forward_dynamics(&self, state: &ConfigState, u: &DVector<f64>) -> Result<DVector<f64>> {
        forward_dynamics(self.mechanics.as_ref(), self.actuation.as_ref(), state, u)
    }

    pub fn hamiltonian(&self, state: &ConfigState) -> Result<f64> {
        hamiltonian(self.mechanics.as_ref(), state)
    }
}

fn check_state(model: &dyn MechanicalModel, state: &ConfigState) -> Result<()> {
    check_dim("q", model.dof(), state.q.len())?;
    check_dim("qdot", model.dof(), state.qdot.len())
}

fn check_actuation(
    model: &dyn MechanicalModel,
    act: &dyn ActuationModel,
    u: &DVector<f64>,
) -> Result<()> {
    check_dim("actuation dof", model.dof(), act.dof())?;
    check_dim("u", act.inputs(), u.len())
}

/// Solve the equations of motion for `q̈`.
pub fn forward_dynamics(
    model: &dyn MechanicalModel,
    act: &dyn ActuationModel,
    state: &ConfigState,
    u: &DVector<f64>,
) -> Result<DVector<f64>> {
    check_state(model, state)?;
    check_actuation(model, act, u)?;
    let terms = model.evaluate(&state.q, &state.qdot);
    let rhs = act.matrix(&state.q) * u
        - &terms.velocity_forces
        - &terms.potential_gradient
        - &terms.damping;
    spd_solve(&terms.inertia, &rhs)
}

/// `H = ½ q̇ᵀ M q̇ + U`.
pub fn hamiltonian(model: &dyn MechanicalModel, state: &ConfigState) -> Result<f64> {
    check_state(model, state)?;
    let m = model.inertia(&state.q);
    Ok(0.5 * state.qdot.dot(&(m * &state.qdot)) + model.potential(&state.q))
}

/// Time derivative of `H` along `(q, q̇, q̈)` by the chain rule.
pub fn hamiltonian_rate(
    model: &dyn MechanicalModel,
    state: &ConfigState,
    qddot: &DVector<f64>,
) -> Result<f64> {
    check_state(model, state)?;
    check_dim("qddot", model.dof(), qddot.len())?;
    let (q, v) = (&state.q, &state.qdot);
    let m = model.inertia(q);
    let mdot = model.inertia_rate(q, v);
    Ok(v.dot(&(m * qddot)) + 0.5 * v.dot(&(mdot * v)) + model.potential_gradient(q).dot(v))
}

/// `|Ḣ − q̇ᵀ A u + q̇ᵀ d|`, which vanishes for exact dynamics.
pub fn power_balance_residual(
    model: &dyn MechanicalModel,
    act: &dyn ActuationModel,
    state: &ConfigState,
    u: &DVector<f64>,
    qddot: &DVector<f64>,
) -> Result<f64> {
    check_actuation(model, act, u)?;
    let hdot = hamiltonian_rate(model, state, qddot)?;
    let v = &state.qdot;
    let p_in = v.dot(&(act.matrix(&state.q) * u));
    let p_damp = v.dot(&model.damping(&state.q, v));
    Ok((hdot - p_in + p_damp).abs())
}

/// Largest relative asymmetry and smallest eigenvalue of `M(q)`.
pub fn inertia_diagnostics(model: &dyn MechanicalModel, q: &DVector<f64>) -> (f64, f64) {
    let m = model.inertia(q);
    let asym = (&m - m.transpose()).amax() / m.amax().max(f64::MIN_POSITIVE);
    let lo = m.symmetric_eigenvalues().min();
    (asym, lo)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    /// Planar point mass in polar coordinates: a model with non-trivial
    /// Coriolis terms that exercises the default implementations.
    pub struct Polar;

    impl MechanicalModel for Polar {
        fn dof(&self) -> usize {
            2
        }
        fn inertia(&self, q: &DVector<f64>) -> DMatrix<f64> {
            DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, q[0] * q[0]]))
        }
        fn velocity_forces(&self, q: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
            DVector::from_vec(vec![-q[0] * v[1] * v[1], 2.0 * q[0] * v[0] * v[1]])
        }
        fn potential(&self, q: &DVector<f64>) -> f64 {
            0.5 * (q[0] - 1.0).powi(2)
        }
        fn potential_gradient(&self, q: &DVector<f64>) -> DVector<f64> {
            DVector::from_vec(vec![q[0] - 1.0, 0.0])
        }
    }

    struct Identity2;
    impl ActuationModel for Identity2 {
        fn dof(&self) -> usize {
            2
        }
        fn inputs(&self) -> usize {
            2
        }
        fn matrix(&self, _q: &DVector<f64>) -> DMatrix<f64> {
            DMatrix::identity(2, 2)
        }
    }

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn christoffel_matches_analytic_coriolis() {
        let q = v(&[1.3, 0.4]);
        let qd = v(&[0.7, -1.1]);
        let c = christoffel_velocity_forces(&Polar, &q, &qd);
        assert!((c - Polar.velocity_forces(&q, &qd)).amax() < 1e-6);
    }

    #[test]
    fn default_inertia_rate_and_power_balance() {
        let s = ConfigState::new(v(&[1.3, 0.4]), v(&[0.7, -1.1])).unwrap();
        let u = v(&[0.3, -0.2]);
        let qdd = forward_dynamics(&Polar, &Identity2, &s, &u).unwrap();
        let r = power_balance_residual(&Polar, &Identity2, &s, &u, &qdd).unwrap();
        assert!(r < 1e-9, "{r}");
    }

    #[test]
    fn dimension_errors() {
        let s = ConfigState::at_rest(v(&[1.0, 0.0])).unwrap();
        let err = forward_dynamics(&Polar, &Identity2, &s, &v(&[1.0])).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
        assert!(ConfigState::new(v(&[1.0]), v(&[1.0, 2.0])).is_err());
        assert!(ConfigState::new(v(&[f64::NAN]), v(&[0.0])).is_err());
    }

    #[test]
    fn singular_inertia_is_reported() {
        let s = ConfigState::at_rest(v(&[0.0, 0.0])).unwrap();
        let err = forward_dynamics(&Polar, &Identity2, &s, &v(&[0.0, 0.0])).unwrap_err();
        assert!(matches!(err, Error::SingularInertia { .. }));
    }

    #[test]
    fn hamiltonian_at_rest_is_potential() {
        let s = ConfigState::at_rest(v(&[2.0, 0.3])).unwrap();
        assert_eq!(hamiltonian(&Polar, &s).unwrap(), 0.5);
    }
}
