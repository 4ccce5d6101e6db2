//! Regulators acting on the actuation coordinates, and the q-space PD+
//! baseline they are compared against.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::collocation::CoordinateChart;
use crate::dynamics::{ConfigState, Plant};
use crate::error::{check_dim, Error, Result};
use crate::numeric::{is_positive_definite, jacobian_fd, pseudo_inverse, rank};

/// A gain given as a scalar (times identity), a diagonal, or a full matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GainSpec {
    Scalar(f64),
    Diagonal(Vec<f64>),
    Full(Vec<Vec<f64>>),
}

impl GainSpec {
    pub fn to_matrix(&self, m: usize) -> Result<DMatrix<f64>> {
        match self {
            GainSpec::Scalar(k) => Ok(DMatrix::identity(m, m) * *k),
            GainSpec::Diagonal(d) => {
                check_dim("gain diagonal", m, d.len())?;
                Ok(DMatrix::from_diagonal(&DVector::from_column_slice(d)))
            }
            GainSpec::Full(rows) => {
                check_dim("gain rows", m, rows.len())?;
                let mut out = DMatrix::zeros(m, m);
                for (i, r) in rows.iter().enumerate() {
                    check_dim("gain columns", m, r.len())?;
                    for (j, v) in r.iter().enumerate() {
                        out[(i, j)] = *v;
                    }
                }
                Ok(out)
            }
        }
    }
}

/// Serializable gain settings; every gain is multiplied by `knob`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GainsConfig {
    pub kp: GainSpec,
    pub kd: GainSpec,
    pub ki: GainSpec,
    pub gamma: f64,
    /// Scalar gains of the q-space PD+.
    pub kp_q: f64,
    pub kd_q: f64,
    pub knob: f64,
}

impl Default for GainsConfig {
    fn default() -> Self {
        GainsConfig {
            kp: GainSpec::Scalar(2.5e3),
            kd: GainSpec::Scalar(10.0),
            ki: GainSpec::Scalar(2e3),
            gamma: 1.0,
            kp_q: 2.5e3,
            kd_q: 10.0,
            knob: 1.0,
        }
    }
}

impl GainsConfig {
    pub fn build(&self, m: usize) -> Result<Gains> {
        let k = self.knob;
        if !(k > 0.0) {
            return Err(Error::InvalidGains(format!("knob must be positive, got {k}")));
        }
        Gains::new(
            self.kp.to_matrix(m)? * k,
            self.kd.to_matrix(m)? * k,
            self.ki.to_matrix(m)? * k,
            self.gamma,
            self.kp_q * k,
            self.kd_q * k,
        )
    }
}

#[derive(Clone, Debug)]
pub struct Gains {
    pub kp: DMatrix<f64>,
    pub kd: DMatrix<f64>,
    pub ki: DMatrix<f64>,
    pub gamma: f64,
    pub kp_q: f64,
    pub kd_q: f64,
}

fn check_spd(name: &str, k: &DMatrix<f64>) -> Result<()> {
    if !k.is_square() {
        return Err(Error::InvalidGains(format!("{name} is not square")));
    }
    let asym = (k - k.transpose()).amax();
    if asym > 1e-12 * (1.0 + k.amax()) {
        return Err(Error::InvalidGains(format!("{name} is not symmetric")));
    }
    if !is_positive_definite(k) {
        return Err(Error::InvalidGains(format!("{name} is not positive definite")));
    }
    Ok(())
}

impl Gains {
    pub fn new(
        kp: DMatrix<f64>,
        kd: DMatrix<f64>,
        ki: DMatrix<f64>,
        gamma: f64,
        kp_q: f64,
        kd_q: f64,
    ) -> Result<Self> {
        check_spd("K_P", &kp)?;
        check_spd("K_D", &kd)?;
        check_spd("K_I", &ki)?;
        let m = kp.nrows();
        check_dim("K_D", m, kd.nrows())?;
        check_dim("K_I", m, ki.nrows())?;
        if !(gamma > 0.0) {
            return Err(Error::InvalidGains(format!("gamma must be positive, got {gamma}")));
        }
        if !(kp_q >= 0.0 && kd_q >= 0.0) {
            return Err(Error::InvalidGains("q-space gains must be nonnegative".into()));
        }
        Ok(Gains {
            kp,
            kd,
            ki,
            gamma,
            kp_q,
            kd_q,
        })
    }

    /// `K_P = 2.5e3 I`, `K_D = 10 I`, `K_I = 2e3 I`, `γ = 1`, scaled by `knob`.
    pub fn standard(m: usize, knob: f64) -> Result<Self> {
        GainsConfig {
            knob,
            ..GainsConfig::default()
        }
        .build(m)
    }

    pub fn dim(&self) -> usize {
        self.kp.nrows()
    }
}

/// Accumulator of the saturated error, `z += dt · tanh(e)`.
#[derive(Clone, Debug)]
pub struct IntegralState {
    z: DVector<f64>,
}

impl IntegralState {
    pub fn new(m: usize) -> Self {
        IntegralState { z: DVector::zeros(m) }
    }

    pub fn value(&self) -> &DVector<f64> {
        &self.z
    }

    pub fn reset(&mut self) {
        self.z.fill(0.0);
    }

    pub fn advance(&mut self, e: &DVector<f64>, dt: f64) {
        self.z += e.map(f64::tanh) * dt;
    }
}

/// What a controller sees at one instant. `theta_a` and its rate cover the
/// chart inputs only and are empty without a chart.
pub struct Measurement<'a> {
    pub t: f64,
    pub state: &'a ConfigState,
    pub theta_a: &'a DVector<f64>,
    pub theta_a_rate: &'a DVector<f64>,
}

/// Setpoint of one reference window.
#[derive(Clone, Debug)]
pub struct Target {
    /// Desired actuation coordinates on the chart inputs.
    pub theta_a: Option<DVector<f64>>,
    /// Desired configuration, used by the q-space regulator.
    pub q: Option<DVector<f64>>,
}

pub trait Controller: Send {
    fn name(&self) -> &'static str;
    /// Length of the full input vector.
    fn inputs(&self) -> usize;
    fn set_target(&mut self, target: &Target) -> Result<()>;
    fn control(&mut self, meas: &Measurement<'_>, dt: f64) -> Result<DVector<f64>>;
    /// Controller energy, added to `H` in closed-loop bookkeeping.
    fn storage(&self, _meas: &Measurement<'_>) -> f64 {
        0.0
    }
    /// Unactuated part of the equilibrium for the current target, when known.
    fn theta_u_desired(&self) -> Option<&DVector<f64>> {
        None
    }
}

/// Open loop, `u ≡ 0`.
pub struct ZeroInput {
    pub m: usize,
}

impl Controller for ZeroInput {
    fn name(&self) -> &'static str {
        "zero"
    }

    fn inputs(&self) -> usize {
        self.m
    }

    fn set_target(&mut self, _target: &Target) -> Result<()> {
        Ok(())
    }

    fn control(&mut self, _meas: &Measurement<'_>, _dt: f64) -> Result<DVector<f64>> {
        Ok(DVector::zeros(self.m))
    }
}

fn scatter(m: usize, inputs: &[usize], v: &DVector<f64>) -> DVector<f64> {
    let mut u = DVector::zeros(m);
    for (k, &i) in inputs.iter().enumerate() {
        u[i] = v[k];
    }
    u
}

fn chart_target(target: &Target, r: usize) -> Result<DVector<f64>> {
    let t = target
        .theta_a
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("reference has no actuation-coordinate target".into()))?;
    check_dim("theta_ad", r, t.len())?;
    Ok(t.clone())
}

/// Proportional, tanh-saturated integral, derivative regulator on `θ_a`:
/// `u = K_P e − K_D θ̇_a + (K_I/γ) z`, `ż = tanh(e)`, `e = θ_ad − θ_a`.
pub struct PSatID {
    gains: Gains,
    integral: IntegralState,
    inputs: Vec<usize>,
    m: usize,
    target: Option<DVector<f64>>,
}

impl PSatID {
    pub fn new(gains: Gains, chart: &CoordinateChart) -> Result<Self> {
        let r = chart.chart_inputs().len();
        check_dim("gains", r, gains.dim())?;
        Ok(PSatID {
            integral: IntegralState::new(r),
            gains,
            inputs: chart.chart_inputs().to_vec(),
            m: chart.actuation().inputs(),
            target: None,
        })
    }

    pub fn integral(&self) -> &IntegralState {
        &self.integral
    }

    /// One evaluation of the law; the integral advances after `u` is formed.
    pub fn law(
        gains: &Gains,
        integral: &mut IntegralState,
        theta_a: &DVector<f64>,
        theta_a_rate: &DVector<f64>,
        theta_ad: &DVector<f64>,
        dt: f64,
    ) -> DVector<f64> {
        let e = theta_ad - theta_a;
        let u = &gains.kp * &e - &gains.kd * theta_a_rate + (&gains.ki * integral.value()) / gains.gamma;
        integral.advance(&e, dt);
        u
    }
}

impl Controller for PSatID {
    fn name(&self) -> &'static str {
        "p_sat_i_d"
    }

    fn inputs(&self) -> usize {
        self.m
    }

    fn set_target(&mut self, target: &Target) -> Result<()> {
        self.target = Some(chart_target(target, self.inputs.len())?);
        Ok(())
    }

    fn control(&mut self, meas: &Measurement<'_>, dt: f64) -> Result<DVector<f64>> {
        let target = self
            .target
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig("controller has no target".into()))?;
        let v = Self::law(&self.gains, &mut self.integral, meas.theta_a, meas.theta_a_rate, target, dt);
        Ok(scatter(self.m, &self.inputs, &v))
    }

    /// `½ eᵀ K_P e + eᵀ (K_I/γ) z`.
    fn storage(&self, meas: &Measurement<'_>) -> f64 {
        match &self.target {
            Some(t) => {
                let e = t - meas.theta_a;
                0.5 * e.dot(&(&self.gains.kp * &e))
                    + e.dot(&(&self.gains.ki * self.integral.value())) / self.gains.gamma
            }
            None => 0.0,
        }
    }
}

/// Static equilibrium with prescribed actuation coordinates.
#[derive(Clone, Debug)]
pub struct Equilibrium {
    pub q: DVector<f64>,
    pub theta_u: DVector<f64>,
    /// Chart-input forces holding the equilibrium.
    pub u: DVector<f64>,
    /// `‖∂U_θ/∂θ_u‖` at the solution.
    pub residual: f64,
}

const EQ_MAX_ITER: usize = 100;

/// Potential gradient in chart coordinates, `J_h^{-T} ∇U`.
pub fn chart_potential_gradient(plant: &Plant, chart: &CoordinateChart, q: &DVector<f64>) -> Result<DVector<f64>> {
    Ok(chart.inverse_transpose_jacobian(q)? * plant.mechanics.potential_gradient(q))
}

/// Solve `∂U_θ/∂θ_u = 0` with `θ_a = θ_ad`, by Newton iteration on
/// `∇U(q) = A_a(q) u`, `θ_a(q) = θ_ad` from `guess`, then check that the
/// reduced Hessian is positive definite.
pub fn equilibrium_unactuated(
    plant: &Plant,
    chart: &CoordinateChart,
    theta_ad: &DVector<f64>,
    guess: &DVector<f64>,
) -> Result<Equilibrium> {
    let n = plant.dof();
    let r = chart.chart_inputs().len();
    check_dim("theta_ad", r, theta_ad.len())?;
    check_dim("guess", n, guess.len())?;
    let inputs = chart.chart_inputs().to_vec();
    let act = chart.actuation().clone();
    let residual = |x: &DVector<f64>| -> DVector<f64> {
        let q = x.rows(0, n).into_owned();
        let u = x.rows(n, r).into_owned();
        let a = act.matrix(&q).select_columns(&inputs);
        let f = plant.mechanics.potential_gradient(&q) - a * u;
        let g = chart.theta_a(&q) - theta_ad;
        DVector::from_iterator(n + r, f.iter().chain(g.iter()).copied())
    };
    let a0 = act.matrix(guess).select_columns(&inputs);
    let u0 = pseudo_inverse(&a0)? * plant.mechanics.potential_gradient(guess);
    let mut x = DVector::from_iterator(n + r, guess.iter().chain(u0.iter()).copied());
    let mut f = residual(&x);
    let mut norm = f.norm();
    let mut converged = false;
    for _ in 0..EQ_MAX_ITER {
        let scale = 1.0 + x.amax();
        if norm < 1e-13 * scale {
            converged = true;
            break;
        }
        let j = jacobian_fd(&residual, &x, 1e-7);
        let Some(step) = j.lu().solve(&f) else {
            return Err(Error::SingularConfiguration { sigma_min: 0.0 });
        };
        let mut lambda = 1.0;
        loop {
            let trial = &x - &step * lambda;
            let ft = residual(&trial);
            let nt = ft.norm();
            if nt < norm || lambda < 1e-6 {
                let stalled = nt >= norm;
                x = trial;
                f = ft;
                norm = nt;
                if stalled {
                    converged = norm < 1e-10 * scale;
                }
                break;
            }
            lambda *= 0.5;
        }
        if lambda < 1e-6 {
            break;
        }
    }
    if !converged && norm > 1e-10 * (1.0 + x.amax()) {
        return Err(Error::NotConverged {
            what: "unactuated equilibrium",
            iterations: EQ_MAX_ITER,
            residual: norm,
        });
    }
    let q = x.rows(0, n).into_owned();
    let u = x.rows(n, r).into_owned();
    let grad = chart_potential_gradient(plant, chart, &q)?;
    let res = grad.rows(r, n - r).norm();
    if n > r {
        let hess = reduced_hessian(plant, chart, &q)?;
        if !is_positive_definite(&hess) {
            return Err(Error::AssumptionViolated(format!(
                "potential is not convex in the unactuated coordinates at the equilibrium (Hessian {hess:.3e})"
            )));
        }
    }
    Ok(Equilibrium {
        theta_u: chart.theta_u(&q),
        q,
        u,
        residual: res,
    })
}

/// `∂²U_θ/∂θ_u²` by central differences of the chart gradient.
pub fn reduced_hessian(plant: &Plant, chart: &CoordinateChart, q: &DVector<f64>) -> Result<DMatrix<f64>> {
    let n = plant.dof();
    let r = chart.chart_inputs().len();
    let theta = chart.h(q);
    let mut hess = DMatrix::zeros(n - r, n - r);
    for j in 0..(n - r) {
        let h = 1e-5 * (1.0 + theta[r + j].abs());
        let mut tp = theta.clone();
        tp[r + j] += h;
        let mut tm = theta.clone();
        tm[r + j] -= h;
        let gp = chart_potential_gradient(plant, chart, &chart.inverse(&tp, q)?)?;
        let gm = chart_potential_gradient(plant, chart, &chart.inverse(&tm, q)?)?;
        for i in 0..(n - r) {
            hess[(i, j)] = (gp[r + i] - gm[r + i]) / (2.0 * h);
        }
    }
    Ok((&hess + hess.transpose()) * 0.5)
}

/// PD+ with feedforward on `θ_a`: `u = u_eq + K_P e − K_D θ̇_a`, where `u_eq`
/// holds the equilibrium with `θ_a = θ_ad` and is recomputed per target.
pub struct PdPlusFeedforward {
    gains: Gains,
    plant: Plant,
    chart: Arc<CoordinateChart>,
    target: Option<(DVector<f64>, Equilibrium)>,
}

impl PdPlusFeedforward {
    pub fn new(gains: Gains, plant: Plant, chart: Arc<CoordinateChart>) -> Result<Self> {
        check_dim("gains", chart.chart_inputs().len(), gains.dim())?;
        Ok(PdPlusFeedforward {
            gains,
            plant,
            chart,
            target: None,
        })
    }

    pub fn equilibrium(&self) -> Option<&Equilibrium> {
        self.target.as_ref().map(|(_, e)| e)
    }

    pub fn feedforward(&self) -> Option<&DVector<f64>> {
        self.target.as_ref().map(|(_, e)| &e.u)
    }
}

impl Controller for PdPlusFeedforward {
    fn name(&self) -> &'static str {
        "pd_plus_ff"
    }

    fn inputs(&self) -> usize {
        self.chart.actuation().inputs()
    }

    fn set_target(&mut self, target: &Target) -> Result<()> {
        let theta_ad = chart_target(target, self.chart.chart_inputs().len())?;
        let guess = match (&target.q, &self.target) {
            (Some(q), _) => q.clone(),
            (None, Some((_, e))) => e.q.clone(),
            (None, None) => self.plant.home.clone(),
        };
        let eq = equilibrium_unactuated(&self.plant, &self.chart, &theta_ad, &guess)?;
        self.target = Some((theta_ad, eq));
        Ok(())
    }

    fn control(&mut self, meas: &Measurement<'_>, _dt: f64) -> Result<DVector<f64>> {
        let (theta_ad, eq) = self
            .target
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig("controller has no target".into()))?;
        let e = theta_ad - meas.theta_a;
        let v = &eq.u + &self.gains.kp * e - &self.gains.kd * meas.theta_a_rate;
        Ok(scatter(self.inputs(), self.chart.chart_inputs(), &v))
    }

    fn theta_u_desired(&self) -> Option<&DVector<f64>> {
        self.target.as_ref().map(|(_, e)| &e.theta_u)
    }
}

/// PD+ in configuration space:
/// `u = A†(q_d) ∇U(q_d) + A(q)ᵀ [k_P (q_d − q) − k_D q̇]`.
pub struct PdPlusQSpace {
    kp: f64,
    kd: f64,
    plant: Plant,
    target: Option<(DVector<f64>, DVector<f64>)>,
}

impl PdPlusQSpace {
    pub fn new(gains: &Gains, plant: Plant) -> Self {
        PdPlusQSpace {
            kp: gains.kp_q,
            kd: gains.kd_q,
            plant,
            target: None,
        }
    }

    pub fn feedforward_at(plant: &Plant, q_d: &DVector<f64>) -> Result<DVector<f64>> {
        let a = plant.actuation.matrix(q_d);
        if rank(&a, 1e-10) < a.nrows().min(a.ncols()) {
            return Err(Error::RankDeficient);
        }
        Ok(pseudo_inverse(&a)? * plant.mechanics.potential_gradient(q_d))
    }
}

impl Controller for PdPlusQSpace {
    fn name(&self) -> &'static str {
        "pd_plus_q"
    }

    fn inputs(&self) -> usize {
        self.plant.inputs()
    }

    fn set_target(&mut self, target: &Target) -> Result<()> {
        let q_d = target
            .q
            .clone()
            .ok_or_else(|| Error::InvalidConfig("q-space PD+ needs a configuration reference".into()))?;
        check_dim("q_d", self.plant.dof(), q_d.len())?;
        let ff = Self::feedforward_at(&self.plant, &q_d)?;
        self.target = Some((q_d, ff));
        Ok(())
    }

    fn control(&mut self, meas: &Measurement<'_>, _dt: f64) -> Result<DVector<f64>> {
        let (q_d, ff) = self
            .target
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig("controller has no target".into()))?;
        let s = meas.state;
        let a = self.plant.actuation.matrix(&s.q);
        let err = (q_d - &s.q) * self.kp - &s.qdot * self.kd;
        Ok(ff + a.tr_mul(&err))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collocation::{ChartOptions, CoordinateChart, Regime};
    use crate::models::build_plant;

    fn meas<'a>(s: &'a ConfigState, ta: &'a DVector<f64>, tr: &'a DVector<f64>) -> Measurement<'a> {
        Measurement {
            t: 0.0,
            state: s,
            theta_a: ta,
            theta_a_rate: tr,
        }
    }

    fn chart_for(plant: &Plant, q0: &DVector<f64>) -> Arc<CoordinateChart> {
        let mut opts = ChartOptions::default();
        if let Some(sel) = &plant.chart_selection {
            opts = opts.with_selection(sel.clone());
        }
        let regime = Regime::infer(plant.dof(), plant.inputs());
        Arc::new(CoordinateChart::build(plant.actuation.clone(), regime, q0, opts).unwrap())
    }

    #[test]
    fn gains_must_be_spd() {
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let id = DMatrix::identity(2, 2);
        assert!(matches!(
            Gains::new(bad, id.clone(), id.clone(), 1.0, 1.0, 1.0),
            Err(Error::InvalidGains(_))
        ));
        assert!(Gains::new(id.clone(), id.clone(), id.clone(), 0.0, 1.0, 1.0).is_err());
        let g = Gains::standard(3, 0.5).unwrap();
        assert_eq!(g.kp[(1, 1)], 1250.0);
    }

    #[test]
    fn p_sat_i_d_zero_error_is_pure_damping() {
        let g = Gains::standard(2, 1.0).unwrap();
        let mut z = IntegralState::new(2);
        let th = DVector::from_vec(vec![0.1, -0.2]);
        let rate = DVector::from_vec(vec![0.3, 0.5]);
        for _ in 0..10 {
            let u = PSatID::law(&g, &mut z, &th, &rate, &th, 1e-3);
            assert!((u + &rate * 10.0).amax() < 1e-12);
        }
    }

    #[test]
    fn integral_advances_after_output_with_slope_tanh_e() {
        let g = Gains::new(
            DMatrix::identity(1, 1),
            DMatrix::identity(1, 1),
            DMatrix::identity(1, 1),
            1.0,
            0.0,
            0.0,
        )
        .unwrap();
        let mut z = IntegralState::new(1);
        let th = DVector::from_element(1, 0.0);
        let target = DVector::from_element(1, 0.4);
        let rate = DVector::zeros(1);
        let dt = 0.01;
        let u0 = PSatID::law(&g, &mut z, &th, &rate, &target, dt);
        assert!((u0[0] - 0.4).abs() < 1e-15);
        for k in 1..50 {
            let u = PSatID::law(&g, &mut z, &th, &rate, &target, dt);
            let expect = 0.4 + k as f64 * dt * 0.4f64.tanh();
            assert!((u[0] - expect).abs() < 1e-12);
        }
        assert!((z.value()[0] - 50.0 * dt * 0.4f64.tanh()).abs() < 1e-12);
    }

    #[test]
    fn pd_plus_is_linear_in_the_error() {
        let plant = build_plant("constant", None).unwrap();
        let chart = chart_for(&plant, &plant.home);
        let kp = DMatrix::from_row_slice(3, 3, &[3.0, 1.0, 0.0, 1.0, 3.0, 0.0, 0.0, 0.0, 5.0]);
        let g = Gains::new(kp, DMatrix::identity(3, 3), DMatrix::identity(3, 3), 1.0, 0.0, 0.0).unwrap();
        // zero the potential by using a zero-stiffness copy of the plant
        let mut p = plant.clone();
        p.mechanics = Arc::new(crate::models::LinearMechanics::new(vec![1.0; 3], vec![0.0; 3], vec![0.1; 3]).unwrap());
        let mut c = PdPlusFeedforward::new(g, p, chart.clone()).unwrap();
        let v = DVector::from_vec(vec![1.0, -1.0, 0.0]) * 0.01;
        let theta_ad = DVector::from_vec(vec![0.2, 0.1, -0.3]);
        c.set_target(&Target {
            theta_a: Some(theta_ad.clone()),
            q: None,
        })
        .unwrap();
        let s = ConfigState::at_rest(DVector::zeros(3)).unwrap();
        let zero = DVector::zeros(3);
        let u = c.control(&meas(&s, &theta_ad, &zero), 1e-3).unwrap();
        assert!(u.amax() < 1e-9);
        let off = &theta_ad - &v;
        let u = c.control(&meas(&s, &off, &zero), 1e-3).unwrap();
        assert!((u - &v * 2.0).amax() < 1e-9);
    }

    #[test]
    fn spring2r_feedforward_matches_chain_rule() {
        let plant = build_plant("spring2r", None).unwrap();
        let chart = chart_for(&plant, &plant.home);
        let q_t = DVector::from_vec(vec![0.7, -0.3]);
        let theta_ad = chart.theta_a(&q_t);
        let mut c = PdPlusFeedforward::new(Gains::standard(2, 1.0).unwrap(), plant.clone(), chart.clone()).unwrap();
        c.set_target(&Target {
            theta_a: Some(theta_ad.clone()),
            q: None,
        })
        .unwrap();
        let ff = c.feedforward().unwrap().clone();
        let u_theta = |th: &DVector<f64>| {
            let q = chart.inverse(th, &q_t).unwrap();
            DVector::from_element(1, plant.mechanics.potential(&q))
        };
        let oracle = jacobian_fd(u_theta, &theta_ad, 1e-6).transpose();
        assert!((ff - oracle.column(0)).amax() < 1e-6);
    }

    #[test]
    fn pcc_equilibrium_has_small_residual_and_convex_hessian() {
        let plant = build_plant("pcc2", None).unwrap();
        let q0 = DVector::from_vec(vec![1.0, 0.4, 0.0, 1.5, 0.9, 0.0]);
        let chart = chart_for(&plant, &q0);
        let theta_ad = chart.theta_a(&q0);
        let eq = equilibrium_unactuated(&plant, &chart, &theta_ad, &q0).unwrap();
        assert!(eq.residual < 1e-9, "residual {}", eq.residual);
        assert!((chart.theta_a(&eq.q) - theta_ad).amax() < 1e-10);
        let grad = plant.mechanics.potential_gradient(&eq.q);
        let a = plant.actuation.matrix(&eq.q);
        assert!((grad - a * &eq.u).amax() < 1e-9);
    }

    #[test]
    fn gravity_free_equilibrium_is_elastic_rest() {
        let plant = build_plant("volumetric", None).unwrap();
        let chart = chart_for(&plant, &plant.home);
        let eq = equilibrium_unactuated(&plant, &chart, &DVector::zeros(2), &DVector::from_element(3, 0.1)).unwrap();
        assert!(eq.q.amax() < 1e-10 && eq.u.amax() < 1e-9);
    }

    #[test]
    fn q_space_feedforward_compensates_exactly_when_square() {
        let plant = build_plant("spring2r", None).unwrap();
        let q_d = DVector::from_vec(vec![0.9, -0.5]);
        let mut c = PdPlusQSpace::new(&Gains::standard(2, 1.0).unwrap(), plant.clone());
        c.set_target(&Target {
            theta_a: None,
            q: Some(q_d.clone()),
        })
        .unwrap();
        let s = ConfigState::at_rest(q_d.clone()).unwrap();
        let e = DVector::zeros(0);
        let u = c.control(&meas(&s, &e, &e), 1e-3).unwrap();
        let a = plant.actuation.matrix(&q_d);
        assert!((a * u - plant.mechanics.potential_gradient(&q_d)).amax() < 1e-10);
    }

    #[test]
    fn pseudo_inverse_identities() {
        let plant = build_plant("pcc2", None).unwrap();
        let q = DVector::from_vec(vec![1.2, 0.3, 0.001, 0.8, -0.6, -0.002]);
        let a = plant.actuation.matrix(&q);
        let pinv = pseudo_inverse(&a).unwrap();
        assert!((&pinv * &a - DMatrix::identity(3, 3)).amax() < 1e-10);
        let wide = a.transpose();
        let pw = pseudo_inverse(&wide).unwrap();
        assert!((&wide * pw - DMatrix::identity(3, 3)).amax() < 1e-10);
    }

    #[test]
    fn rank_deficient_target_is_rejected() {
        let plant = build_plant("satellite", None).unwrap();
        let mut c = PdPlusQSpace::new(&Gains::standard(2, 1.0).unwrap(), plant);
        let r = c.set_target(&Target {
            theta_a: None,
            q: Some(DVector::from_vec(vec![0.0, 0.3])),
        });
        assert!(matches!(r, Err(Error::RankDeficient)));
    }
}
