use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::integrability::{check_integrability, IntegrabilityReport, SamplingDomain, DEFAULT_TOLERANCE};
use crate::dynamics::ActuationModel;
use crate::error::{check_dim, Error, Result};
use crate::numeric::{jacobian_fd, sigma_min};
use crate::quadrature::GaussLegendre;

const NEWTON_TOL: f64 = 1e-10;
const NEWTON_MAX_ITER: usize = 50;
/// Relative singular-value floor below which a block counts as singular.
const SINGULAR_FLOOR: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    FullyActuated,
    Overactuated,
    Underactuated,
}

impl Regime {
    pub fn infer(n: usize, m: usize) -> Self {
        match m.cmp(&n) {
            std::cmp::Ordering::Equal => Regime::FullyActuated,
            std::cmp::Ordering::Greater => Regime::Overactuated,
            std::cmp::Ordering::Less => Regime::Underactuated,
        }
    }
}

/// A user-chosen complement `θ_u(q)` to the actuation coordinates.
pub trait UnactuatedComplement: Send + Sync {
    fn value(&self, q: &DVector<f64>) -> DVector<f64>;
    /// `∂θ_u/∂q`, of size `(n − m) × n`.
    fn jacobian(&self, q: &DVector<f64>) -> DMatrix<f64>;
}

#[derive(Clone)]
pub struct ChartOptions {
    /// Rows of `A` forming the actuated block (underactuated), or the input
    /// columns whose coordinates span the chart (overactuated). Chosen
    /// automatically when absent.
    pub selection: Option<Vec<usize>>,
    pub complement: Option<Arc<dyn UnactuatedComplement>>,
    /// Half-width factor of the local integrability box around `q0`.
    pub check_radius: f64,
    pub check_samples: usize,
    pub tolerance: f64,
}

impl Default for ChartOptions {
    fn default() -> Self {
        ChartOptions {
            selection: None,
            complement: None,
            check_radius: 0.05,
            check_samples: 64,
            tolerance: DEFAULT_TOLERANCE,
        }
    }
}

impl ChartOptions {
    pub fn with_selection(mut self, selection: Vec<usize>) -> Self {
        self.selection = Some(selection);
        self
    }

    pub fn with_complement(mut self, c: Arc<dyn UnactuatedComplement>) -> Self {
        self.complement = Some(c);
        self
    }
}

/// Decoupling coordinates `θ = h(q)` in which the generalized force becomes
/// `[I; 0] u` (or `[I, A_a⁻¹A_o] u` with redundant inputs).
#[derive(Clone)]
pub struct CoordinateChart {
    regime: Regime,
    act: Arc<dyn ActuationModel>,
    actuated_rows: Vec<usize>,
    complement_rows: Vec<usize>,
    inputs: Vec<usize>,
    redundant_inputs: Vec<usize>,
    complement: Option<Arc<dyn UnactuatedComplement>>,
    anchor: DVector<f64>,
    closed_form: bool,
    sigma_min: f64,
    report: IntegrabilityReport,
    rule: GaussLegendre,
}

impl std::fmt::Debug for CoordinateChart {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CoordinateChart")
            .field("regime", &self.regime)
            .field("actuated_rows", &self.actuated_rows)
            .field("inputs", &self.inputs)
            .finish()
    }
}

/// Greedily pick `count` rows of `a` maximizing the smallest singular value
/// of the selected block; ties go to the lowest index.
pub fn select_rows(a: &DMatrix<f64>, count: usize) -> (Vec<usize>, f64) {
    let mut chosen: Vec<usize> = Vec::with_capacity(count);
    let mut best_sigma = 0.0;
    for _ in 0..count {
        let mut best: Option<(usize, f64)> = None;
        for r in 0..a.nrows() {
            if chosen.contains(&r) {
                continue;
            }
            let mut rows = chosen.clone();
            rows.push(r);
            let s = sigma_min(&a.select_rows(&rows));
            match best {
                Some((_, bs)) if s <= bs * (1.0 + 1e-12) => {}
                _ => best = Some((r, s)),
            }
        }
        let (r, s) = best.expect("enough rows to select from");
        chosen.push(r);
        best_sigma = s;
    }
    chosen.sort_unstable();
    (chosen, best_sigma)
}

impl CoordinateChart {
    /// Build a chart around `q0`, after a local integrability check.
    pub fn build(
        act: Arc<dyn ActuationModel>,
        regime: Regime,
        q0: &DVector<f64>,
        opts: ChartOptions,
    ) -> Result<Self> {
        let (n, m) = (act.dof(), act.inputs());
        check_dim("q0", n, q0.len())?;
        if Regime::infer(n, m) != regime {
            return Err(Error::InvalidArgument(format!(
                "regime {regime:?} does not match n = {n}, m = {m}"
            )));
        }
        let domain = SamplingDomain::around(q0, opts.check_radius).with_samples(opts.check_samples);
        let report = check_integrability(act.as_ref(), &domain, opts.tolerance)?;
        if !report.is_integrable() {
            return Err(Error::NotCollocated(Box::new(report)));
        }

        let a = act.matrix(q0);
        let scale = crate::numeric::singular_values(&a).max().max(1.0);
        let (actuated_rows, inputs, sigma) = match regime {
            Regime::FullyActuated => ((0..n).collect(), (0..m).collect(), sigma_min(&a)),
            Regime::Underactuated => {
                let (rows, s) = match &opts.selection {
                    Some(rows) => {
                        validate_selection(rows, n, m)?;
                        let mut rows = rows.clone();
                        rows.sort_unstable();
                        let s = sigma_min(&a.select_rows(&rows));
                        (rows, s)
                    }
                    None => select_rows(&a, m),
                };
                (rows, (0..m).collect(), s)
            }
            Regime::Overactuated => {
                let (cols, s) = match &opts.selection {
                    Some(cols) => {
                        validate_selection(cols, m, n)?;
                        let mut cols = cols.clone();
                        cols.sort_unstable();
                        let s = sigma_min(&a.select_columns(&cols));
                        (cols, s)
                    }
                    None => select_rows(&a.transpose(), n),
                };
                ((0..n).collect(), cols, s)
            }
        };
        if !(sigma > SINGULAR_FLOOR * scale) {
            return Err(Error::SingularConfiguration { sigma_min: sigma });
        }
        let complement_rows: Vec<usize> = (0..n).filter(|r| !actuated_rows.contains(r)).collect();
        let redundant_inputs: Vec<usize> = (0..m).filter(|c| !inputs.contains(c)).collect();
        if opts.complement.is_some() && regime != Regime::Underactuated {
            return Err(Error::InvalidArgument(
                "an unactuated complement only applies to underactuated charts".into(),
            ));
        }
        let chart = CoordinateChart {
            regime,
            closed_form: act.actuation_coordinates(q0).is_some(),
            act,
            actuated_rows,
            complement_rows,
            inputs,
            redundant_inputs,
            complement: opts.complement,
            anchor: q0.clone(),
            sigma_min: sigma,
            report,
            rule: GaussLegendre::new(16),
        };
        if let Some(c) = &chart.complement {
            check_dim("complement size", n - m, c.value(q0).len())?;
            let sj = sigma_min(&chart.jacobian(q0));
            if !(sj > SINGULAR_FLOOR * scale) {
                return Err(Error::SingularConfiguration { sigma_min: sj });
            }
        }
        Ok(chart)
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    pub fn dof(&self) -> usize {
        self.act.dof()
    }

    /// Number of actuated chart coordinates `r = min(n, m)`.
    pub fn actuated_dim(&self) -> usize {
        self.inputs.len()
    }

    pub fn actuation(&self) -> &Arc<dyn ActuationModel> {
        &self.act
    }

    pub fn actuated_rows(&self) -> &[usize] {
        &self.actuated_rows
    }

    pub fn complement_rows(&self) -> &[usize] {
        &self.complement_rows
    }

    /// Inputs whose actuation coordinates make up `θ_a`.
    pub fn chart_inputs(&self) -> &[usize] {
        &self.inputs
    }

    pub fn redundant_inputs(&self) -> &[usize] {
        &self.redundant_inputs
    }

    pub fn anchor(&self) -> &DVector<f64> {
        &self.anchor
    }

    pub fn has_closed_form(&self) -> bool {
        self.closed_form
    }

    pub fn has_custom_complement(&self) -> bool {
        self.complement.is_some()
    }

    pub fn sigma_min_at_anchor(&self) -> f64 {
        self.sigma_min
    }

    pub fn integrability(&self) -> &IntegrabilityReport {
        &self.report
    }

    /// All `m` actuation coordinates `g(q)`: closed form when the model has
    /// one, otherwise a line integral of `Aᵀ` from the anchor.
    pub fn actuation_coordinates(&self, q: &DVector<f64>) -> DVector<f64> {
        if self.closed_form {
            if let Some(g) = self.act.actuation_coordinates(q) {
                return g;
            }
        }
        let dq = q - &self.anchor;
        let mut g = DVector::zeros(self.act.inputs());
        for (s, w) in self.rule.on_interval(0.0, 1.0) {
            let qs = &self.anchor + &dq * s;
            g += self.act.matrix(&qs).tr_mul(&dq) * w;
        }
        g
    }

    pub fn theta_a(&self, q: &DVector<f64>) -> DVector<f64> {
        let g = self.actuation_coordinates(q);
        DVector::from_iterator(self.inputs.len(), self.inputs.iter().map(|&i| g[i]))
    }

    pub fn theta_a_rate(&self, q: &DVector<f64>, qdot: &DVector<f64>) -> DVector<f64> {
        self.act.matrix(q).select_columns(&self.inputs).tr_mul(qdot)
    }

    pub fn theta_u(&self, q: &DVector<f64>) -> DVector<f64> {
        match &self.complement {
            Some(c) => c.value(q),
            None => DVector::from_iterator(
                self.complement_rows.len(),
                self.complement_rows.iter().map(|&r| q[r]),
            ),
        }
    }

    pub fn h(&self, q: &DVector<f64>) -> DVector<f64> {
        let ta = self.theta_a(q);
        let tu = self.theta_u(q);
        DVector::from_iterator(ta.len() + tu.len(), ta.iter().chain(tu.iter()).copied())
    }

    pub fn jacobian(&self, q: &DVector<f64>) -> DMatrix<f64> {
        let n = self.dof();
        let r = self.inputs.len();
        let a = self.act.matrix(q);
        let mut j = DMatrix::zeros(n, n);
        j.rows_mut(0, r)
            .copy_from(&a.select_columns(&self.inputs).transpose());
        match &self.complement {
            Some(c) => j.rows_mut(r, n - r).copy_from(&c.jacobian(q)),
            None => {
                for (k, &row) in self.complement_rows.iter().enumerate() {
                    j[(r + k, row)] = 1.0;
                }
            }
        }
        j
    }

    pub fn theta_rate(&self, q: &DVector<f64>, qdot: &DVector<f64>) -> DVector<f64> {
        self.jacobian(q) * qdot
    }

    fn guard(&self, j: &DMatrix<f64>) -> Result<()> {
        let s = crate::numeric::singular_values(j);
        let (lo, hi) = (s.min(), s.max().max(1.0));
        if !(lo > SINGULAR_FLOOR * hi) {
            return Err(Error::SingularConfiguration { sigma_min: lo });
        }
        Ok(())
    }

    /// `J_h(q)^{-T}` from an LU factorization.
    pub fn inverse_transpose_jacobian(&self, q: &DVector<f64>) -> Result<DMatrix<f64>> {
        let j = self.jacobian(q);
        self.guard(&j)?;
        j.transpose()
            .try_inverse()
            .ok_or(Error::SingularConfiguration { sigma_min: 0.0 })
    }

    /// `J_h(q)^{-T}` from its block-triangular structure, which needs only the
    /// inverse of the actuated block. Requires the default complement.
    pub fn block_inverse_transpose(&self, q: &DVector<f64>) -> Result<DMatrix<f64>> {
        if self.complement.is_some() {
            return Err(Error::InvalidArgument(
                "block inverse requires the default complement".into(),
            ));
        }
        let n = self.dof();
        let a = self.act.matrix(q);
        match self.regime {
            Regime::FullyActuated | Regime::Overactuated => {
                let block = a.select_columns(&self.inputs);
                self.guard(&block)?;
                block.try_inverse().ok_or(Error::SingularConfiguration { sigma_min: 0.0 })
            }
            Regime::Underactuated => {
                let m = self.inputs.len();
                let a_s = a.select_rows(&self.actuated_rows);
                self.guard(&a_s)?;
                let a_s_inv = a_s
                    .try_inverse()
                    .ok_or(Error::SingularConfiguration { sigma_min: 0.0 })?;
                let lower = -(a.select_rows(&self.complement_rows) * &a_s_inv);
                let mut out = DMatrix::zeros(n, n);
                for (bi, &col) in self.actuated_rows.iter().enumerate() {
                    for i in 0..m {
                        out[(i, col)] = a_s_inv[(i, bi)];
                    }
                    for k in 0..(n - m) {
                        out[(m + k, col)] = lower[(k, bi)];
                    }
                }
                for (k, &col) in self.complement_rows.iter().enumerate() {
                    out[(m + k, col)] = 1.0;
                }
                Ok(out)
            }
        }
    }

    /// Generalized force in chart coordinates, `J_h^{-T} A(q) u`.
    pub fn transform_force(&self, q: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("q", self.dof(), q.len())?;
        check_dim("u", self.act.inputs(), u.len())?;
        let j = self.jacobian(q);
        self.guard(&j)?;
        let tau_q = self.act.matrix(q) * u;
        j.transpose()
            .lu()
            .solve(&tau_q)
            .ok_or(Error::SingularConfiguration { sigma_min: 0.0 })
    }

    /// `A_a⁻¹ A_o`, the coupling of redundant inputs into the chart coordinates.
    pub fn redundant_coupling(&self, q: &DVector<f64>) -> Result<DMatrix<f64>> {
        let a = self.act.matrix(q);
        let block = a.select_columns(&self.inputs);
        self.guard(&block)?;
        let inv = block.try_inverse().ok_or(Error::SingularConfiguration { sigma_min: 0.0 })?;
        Ok(inv * a.select_columns(&self.redundant_inputs))
    }

    /// `|θ̇ᵀ τ_θ − q̇ᵀ A u|`.
    pub fn verify_power_invariance(
        &self,
        q: &DVector<f64>,
        qdot: &DVector<f64>,
        u: &DVector<f64>,
    ) -> Result<f64> {
        let tau_theta = self.transform_force(q, u)?;
        let theta_dot = self.theta_rate(q, qdot);
        let p_q = qdot.dot(&(self.act.matrix(q) * u));
        Ok((theta_dot.dot(&tau_theta) - p_q).abs())
    }

    /// `h⁻¹(θ)`, in closed form when available, otherwise by damped Newton
    /// iteration seeded at `guess`.
    pub fn inverse(&self, theta: &DVector<f64>, guess: &DVector<f64>) -> Result<DVector<f64>> {
        let n = self.dof();
        check_dim("theta", n, theta.len())?;
        check_dim("guess", n, guess.len())?;
        if self.closed_form && self.regime != Regime::Underactuated {
            if let Some(q) = self.act.coordinate_inverse(&self.inputs, theta) {
                return Ok(q);
            }
        }
        let scale = 1.0 + theta.amax();
        let mut q = guess.clone();
        let mut r = self.h(&q) - theta;
        let mut res = r.amax();
        for _ in 0..NEWTON_MAX_ITER {
            let j = self.jacobian(&q);
            let step = j
                .lu()
                .solve(&r)
                .ok_or(Error::SingularConfiguration { sigma_min: 0.0 })?;
            // Ill-conditioned charts meet the residual test long before q settles.
            if res <= NEWTON_TOL * scale && step.amax() <= NEWTON_TOL * (1.0 + q.amax()) {
                return Ok(q - step);
            }
            let mut lambda = 1.0;
            loop {
                let trial = &q - &step * lambda;
                let rt = self.h(&trial) - theta;
                let rt_res = rt.amax();
                if rt_res < res || rt_res <= NEWTON_TOL * scale || lambda < 1e-4 {
                    q = trial;
                    r = rt;
                    res = rt_res;
                    break;
                }
                lambda *= 0.5;
            }
        }
        if res <= NEWTON_TOL * scale {
            return Ok(q);
        }
        Err(Error::NotConverged {
            what: "chart inversion",
            iterations: NEWTON_MAX_ITER,
            residual: res,
        })
    }

    /// Residuals that certify the chart at `q`.
    pub fn diagnostics(&self, q: &DVector<f64>) -> Result<ChartDiagnostics> {
        let n = self.dof();
        let m = self.act.inputs();
        let r = self.inputs.len();
        let jit = self.inverse_transpose_jacobian(q)?;
        let j = self.jacobian(q);
        let inverse_residual = (&jit * j.transpose() - DMatrix::<f64>::identity(n, n)).amax();
        let fd = jacobian_fd(|x| self.h(x), q, 1e-6);
        let gradient_residual = (fd - &j).amax();
        let tau = jit * self.act.matrix(q);
        let mut expected = DMatrix::zeros(n, m);
        for (k, &c) in self.inputs.iter().enumerate() {
            expected[(k, c)] = 1.0;
        }
        if !self.redundant_inputs.is_empty() {
            let coupling = self.redundant_coupling(q)?;
            for (k, &c) in self.redundant_inputs.iter().enumerate() {
                for i in 0..r {
                    expected[(i, c)] = coupling[(i, k)];
                }
            }
        }
        let decoupling_residual = (tau - expected).amax();
        let block = match self.regime {
            Regime::Underactuated => self.act.matrix(q).select_rows(&self.actuated_rows),
            _ => self.act.matrix(q).select_columns(&self.inputs),
        };
        Ok(ChartDiagnostics {
            sigma_min: sigma_min(&block),
            inverse_residual,
            gradient_residual,
            decoupling_residual,
        })
    }

    pub fn summary(&self, q: &DVector<f64>) -> Result<ChartSummary> {
        Ok(ChartSummary {
            regime: self.regime,
            n: self.dof(),
            m: self.act.inputs(),
            actuated_rows: self.actuated_rows.clone(),
            complement_rows: self.complement_rows.clone(),
            chart_inputs: self.inputs.clone(),
            closed_form: self.closed_form,
            diagnostics: self.diagnostics(q)?,
        })
    }
}

fn validate_selection(sel: &[usize], universe: usize, count: usize) -> Result<()> {
    check_dim("selection size", count, sel.len())?;
    let mut seen = vec![false; universe];
    for &s in sel {
        if s >= universe || seen[s] {
            return Err(Error::InvalidArgument(format!("invalid selection {sel:?}")));
        }
        seen[s] = true;
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChartDiagnostics {
    pub sigma_min: f64,
    /// `max |J^{-T} Jᵀ − I|`.
    pub inverse_residual: f64,
    /// `max |J_fd − J|` with a central-difference Jacobian of `h`.
    pub gradient_residual: f64,
    /// `max |J^{-T} A − [I, A_a⁻¹A_o; 0]|`.
    pub decoupling_residual: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChartSummary {
    pub regime: Regime,
    pub n: usize,
    pub m: usize,
    pub actuated_rows: Vec<usize>,
    pub complement_rows: Vec<usize>,
    pub chart_inputs: Vec<usize>,
    pub closed_form: bool,
    pub diagnostics: ChartDiagnostics,
}

/// Convenience wrapper over [`CoordinateChart::build`].
pub fn build_chart(
    act: Arc<dyn ActuationModel>,
    regime: Regime,
    q0: &DVector<f64>,
    opts: ChartOptions,
) -> Result<CoordinateChart> {
    CoordinateChart::build(act, regime, q0, opts)
}

/// `J_h^{-T}(q) A(q) u`.
pub fn transform_force(chart: &CoordinateChart, q: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
    chart.transform_force(q, u)
}

pub fn verify_power_invariance(
    chart: &CoordinateChart,
    q: &DVector<f64>,
    qdot: &DVector<f64>,
    u: &DVector<f64>,
) -> Result<f64> {
    chart.verify_power_invariance(q, qdot, u)
}
