use nalgebra::{DMatrix, DVector};

use crate::dynamics::{ActuationModel, ConfigState};
use crate::error::{check_dim, Error, Result};

/// Online integral of the passive output `ẏ = A(q)ᵀ q̇`.
///
/// Uses the trapezoid rule on configuration increments, which is exact
/// whenever `A` is constant along the step.
#[derive(Clone, Debug)]
pub struct PathIntegrator {
    y: DVector<f64>,
    last: Option<(f64, DVector<f64>, DMatrix<f64>)>,
    index: usize,
}

impl PathIntegrator {
    pub fn new(inputs: usize) -> Self {
        PathIntegrator {
            y: DVector::zeros(inputs),
            last: None,
            index: 0,
        }
    }

    /// Start over from `y = 0` with no previous sample.
    pub fn reset(&mut self) {
        self.y.fill(0.0);
        self.last = None;
        self.index = 0;
    }

    /// Start over from a known value of `y`.
    pub fn reset_to(&mut self, y0: DVector<f64>) {
        self.reset();
        self.y = y0;
    }

    pub fn value(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn last_q(&self) -> Option<&DVector<f64>> {
        self.last.as_ref().map(|(_, q, _)| q)
    }

    pub fn push(&mut self, act: &dyn ActuationModel, t: f64, q: &DVector<f64>) -> Result<&DVector<f64>> {
        check_dim("q", act.dof(), q.len())?;
        check_dim("passive output", act.inputs(), self.y.len())?;
        let a = act.matrix(q);
        if let Some((t_prev, q_prev, a_prev)) = &self.last {
            if !(t > *t_prev) {
                return Err(Error::NonMonotoneTime { index: self.index, t });
            }
            let dq = q - q_prev;
            self.y += (a_prev.tr_mul(&dq) + a.tr_mul(&dq)) * 0.5;
        }
        self.last = Some((t, q.clone(), a));
        self.index += 1;
        Ok(&self.y)
    }
}

/// Integrate the passive output along a time-stamped path, starting from `y = 0`.
pub fn integrate_passive_output(
    integrator: &mut PathIntegrator,
    act: &dyn ActuationModel,
    path: &[(f64, ConfigState)],
) -> Result<DVector<f64>> {
    integrator.reset();
    for (t, s) in path {
        integrator.push(act, *t, &s.q)?;
    }
    Ok(integrator.value().clone())
}
