//! Fixed-step RK4 integration of open- and closed-loop runs, with work and
//! energy bookkeeping and CSV/JSON export.

use std::io::Write;
use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::collocation::CoordinateChart;
use crate::control::{Controller, Measurement, Target};
use crate::dynamics::{ConfigState, Plant};
use crate::error::{check_dim, Error, Result};
use crate::numeric::spd_solve;

#[derive(Clone, Debug)]
pub struct ReferenceStep {
    pub t_start: f64,
    pub target: Target,
}

/// Piecewise-constant setpoints, each active from its `t_start` until the next.
#[derive(Clone, Debug, Default)]
pub struct ReferenceSchedule {
    steps: Vec<ReferenceStep>,
}

impl ReferenceSchedule {
    pub fn new(steps: Vec<ReferenceStep>) -> Result<Self> {
        for (i, s) in steps.iter().enumerate() {
            if !(s.t_start >= 0.0) || !s.t_start.is_finite() {
                return Err(Error::InvalidConfig(format!("reference {i} starts at {}", s.t_start)));
            }
            if i > 0 && !(s.t_start > steps[i - 1].t_start) {
                return Err(Error::InvalidConfig("reference steps must be strictly ordered in time".into()));
            }
        }
        Ok(ReferenceSchedule { steps })
    }

    pub fn empty() -> Self {
        ReferenceSchedule::default()
    }

    pub fn steps(&self) -> &[ReferenceStep] {
        &self.steps
    }

    /// Index of the step active at `t`.
    pub fn active(&self, t: f64) -> Option<usize> {
        self.steps.iter().rposition(|s| s.t_start <= t)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThetaSource {
    /// Actuation coordinates from the model's closed form, when it has one.
    #[default]
    ClosedForm,
    /// Online integral of `Aᵀ q̇` along the simulated path.
    Integrated,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimOptions {
    pub dt: f64,
    pub t_final: f64,
    /// Record every `record_stride`-th step.
    pub record_stride: usize,
    /// Abort when `‖q̇‖∞` exceeds this.
    pub divergence_bound: f64,
    pub theta_source: ThetaSource,
    pub seed: u64,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            dt: 1e-3,
            t_final: 1.0,
            record_stride: 1,
            divergence_bound: 1e6,
            theta_source: ThetaSource::ClosedForm,
            seed: 0,
        }
    }
}

impl SimOptions {
    pub fn new(dt: f64, t_final: f64) -> Self {
        SimOptions {
            dt,
            t_final,
            ..SimOptions::default()
        }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.record_stride = stride;
        self
    }

    pub fn with_theta_source(mut self, source: ThetaSource) -> Self {
        self.theta_source = source;
        self
    }

    /// Number of steps, requiring `t_final` to be a multiple of `dt`.
    pub fn steps(&self) -> Result<usize> {
        if !(self.dt > 0.0) || !(self.t_final >= 0.0) {
            return Err(Error::InvalidConfig("dt must be positive and t_final nonnegative".into()));
        }
        if self.record_stride == 0 {
            return Err(Error::InvalidConfig("record stride must be positive".into()));
        }
        let k = (self.t_final / self.dt).round();
        if (k * self.dt - self.t_final).abs() > 1e-9 * self.t_final.max(self.dt) {
            return Err(Error::InvalidConfig(format!(
                "t_final {} is not a multiple of dt {}",
                self.t_final, self.dt
            )));
        }
        Ok(k as usize)
    }
}

#[derive(Clone, Debug)]
pub struct Sample {
    pub t: f64,
    pub q: DVector<f64>,
    pub qdot: DVector<f64>,
    /// Chart coordinates, or `q` without a chart.
    pub theta: DVector<f64>,
    pub theta_rate: DVector<f64>,
    pub u: DVector<f64>,
    pub h: f64,
    pub storage: f64,
    pub input_power: f64,
    pub damping_power: f64,
    /// Accumulated `∫ P_in dt` and `∫ P_damp dt`.
    pub work_in: f64,
    pub work_damping: f64,
    /// Active reference window, if any.
    pub window: Option<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub model: String,
    pub controller: String,
    pub dt: f64,
    pub t_final: f64,
    pub seed: u64,
    pub record_stride: usize,
    pub dof: usize,
    pub inputs: usize,
    pub steps_taken: usize,
    pub theta_source: ThetaSource,
    pub failure: Option<String>,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub meta: TrajectoryMeta,
    pub samples: Vec<Sample>,
}

struct Stage {
    qddot: DVector<f64>,
    /// Passive output rate `Aᵀ q̇`.
    y_rate: DVector<f64>,
    p_in: f64,
    p_damp: f64,
}

fn stage(plant: &Plant, q: &DVector<f64>, v: &DVector<f64>, u: &DVector<f64>) -> Result<Stage> {
    let terms = plant.mechanics.evaluate(q, v);
    let a = plant.actuation.matrix(q);
    let force = &a * u;
    let rhs = &force - &terms.velocity_forces - &terms.potential_gradient - &terms.damping;
    Ok(Stage {
        qddot: spd_solve(&terms.inertia, &rhs)?,
        y_rate: a.tr_mul(v),
        p_in: v.dot(&force),
        p_damp: v.dot(&terms.damping),
    })
}

struct Rk4State {
    q: DVector<f64>,
    v: DVector<f64>,
    /// Passive output `∫ Aᵀ q̇ dt` since the start.
    y: DVector<f64>,
    w_in: f64,
    w_damp: f64,
}

/// One RK4 step with `u` held over the step.
fn rk4_step(plant: &Plant, s: &Rk4State, u: &DVector<f64>, dt: f64) -> Result<Rk4State> {
    let k1 = stage(plant, &s.q, &s.v, u)?;
    let q2 = &s.q + &s.v * (0.5 * dt);
    let v2 = &s.v + &k1.qddot * (0.5 * dt);
    let k2 = stage(plant, &q2, &v2, u)?;
    let q3 = &s.q + &v2 * (0.5 * dt);
    let v3 = &s.v + &k2.qddot * (0.5 * dt);
    let k3 = stage(plant, &q3, &v3, u)?;
    let q4 = &s.q + &v3 * dt;
    let v4 = &s.v + &k3.qddot * dt;
    let k4 = stage(plant, &q4, &v4, u)?;
    let w = dt / 6.0;
    Ok(Rk4State {
        q: &s.q + (&s.v + &v2 * 2.0 + &v3 * 2.0 + &v4) * w,
        v: &s.v + (&k1.qddot + &k2.qddot * 2.0 + &k3.qddot * 2.0 + &k4.qddot) * w,
        y: &s.y + (&k1.y_rate + &k2.y_rate * 2.0 + &k3.y_rate * 2.0 + &k4.y_rate) * w,
        w_in: s.w_in + w * (k1.p_in + 2.0 * k2.p_in + 2.0 * k3.p_in + k4.p_in),
        w_damp: s.w_damp + w * (k1.p_damp + 2.0 * k2.p_damp + 2.0 * k3.p_damp + k4.p_damp),
    })
}

/// Actuation coordinates seen by the controller.
struct ThetaTracker<'a> {
    chart: &'a CoordinateChart,
    /// Actuation coordinates at the start, when `θ_a` comes from the
    /// integrated passive output.
    origin: Option<DVector<f64>>,
}

impl<'a> ThetaTracker<'a> {
    fn new(chart: &'a CoordinateChart, source: ThetaSource, q0: &DVector<f64>) -> Self {
        let integrate = source == ThetaSource::Integrated || chart.actuation().actuation_coordinates(q0).is_none();
        let origin = integrate.then(|| chart.actuation_coordinates(q0));
        ThetaTracker { chart, origin }
    }

    /// `(θ, θ_a)` with `θ_a` on the chart inputs; `y` is the passive output
    /// accumulated by the integrator.
    fn theta(&self, q: &DVector<f64>, y: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let ta = match &self.origin {
            Some(y0) => DVector::from_iterator(
                self.chart.chart_inputs().len(),
                self.chart.chart_inputs().iter().map(|&i| y0[i] + y[i]),
            ),
            None => self.chart.theta_a(q),
        };
        let tu = self.chart.theta_u(q);
        let full = DVector::from_iterator(ta.len() + tu.len(), ta.iter().chain(tu.iter()).copied());
        (full, ta)
    }
}

/// Integrate `plant` under `controller` from `initial` over `[0, t_final]`.
///
/// Divergence or a singular inertia ends the run early; the trajectory is
/// returned with `meta.failure` set.
pub fn integrate(
    plant: &Plant,
    chart: Option<&CoordinateChart>,
    controller: &mut dyn Controller,
    schedule: &ReferenceSchedule,
    initial: &ConfigState,
    opts: &SimOptions,
) -> Result<Trajectory> {
    let n = plant.dof();
    let m = plant.inputs();
    check_dim("initial q", n, initial.q.len())?;
    check_dim("controller inputs", m, controller.inputs())?;
    let steps = opts.steps()?;
    if let Some(last) = schedule.steps().last() {
        if last.t_start >= opts.t_final && opts.t_final > 0.0 {
            return Err(Error::InvalidConfig("reference schedule does not fit in t_final".into()));
        }
    }
    let tracker = match chart {
        Some(c) => {
            check_dim("chart dof", n, c.dof())?;
            Some(ThetaTracker::new(c, opts.theta_source, &initial.q))
        }
        None => None,
    };
    let mut meta = TrajectoryMeta {
        model: plant.name.clone(),
        controller: controller.name().into(),
        dt: opts.dt,
        t_final: opts.t_final,
        seed: opts.seed,
        record_stride: opts.record_stride,
        dof: n,
        inputs: m,
        steps_taken: 0,
        theta_source: opts.theta_source,
        failure: None,
    };
    let mut samples = Vec::with_capacity(steps / opts.record_stride + 2);
    let mut s = Rk4State {
        q: initial.q.clone(),
        v: initial.qdot.clone(),
        y: DVector::zeros(m),
        w_in: 0.0,
        w_damp: 0.0,
    };
    let mut window: Option<usize> = None;
    let empty = DVector::zeros(0);
    for k in 0..=steps {
        let t = k as f64 * opts.dt;
        let active = schedule.active(t + 1e-9 * opts.dt);
        if active != window {
            if let Some(i) = active {
                controller.set_target(&schedule.steps()[i].target)?;
            }
            window = active;
        }
        let state = ConfigState {
            q: s.q.clone(),
            qdot: s.v.clone(),
        };
        let (theta, theta_a, theta_rate, theta_a_rate) = match (&tracker, chart) {
            (Some(tr), Some(c)) => {
                let (th, ta) = tr.theta(&s.q, &s.y);
                let rate = c.theta_rate(&s.q, &s.v);
                let ta_rate = c.theta_a_rate(&s.q, &s.v);
                (th, ta, rate, ta_rate)
            }
            _ => (s.q.clone(), empty.clone(), s.v.clone(), empty.clone()),
        };
        let meas = Measurement {
            t,
            state: &state,
            theta_a: &theta_a,
            theta_a_rate: &theta_a_rate,
        };
        let u = controller.control(&meas, opts.dt)?;
        check_dim("u", m, u.len())?;
        if k % opts.record_stride == 0 || k == steps {
            let st = stage(plant, &s.q, &s.v, &u);
            let (p_in, p_damp) = st.as_ref().map(|x| (x.p_in, x.p_damp)).unwrap_or((f64::NAN, f64::NAN));
            samples.push(Sample {
                t,
                h: plant.hamiltonian(&state)?,
                storage: controller.storage(&meas),
                q: s.q.clone(),
                qdot: s.v.clone(),
                theta,
                theta_rate,
                u: u.clone(),
                input_power: p_in,
                damping_power: p_damp,
                work_in: s.w_in,
                work_damping: s.w_damp,
                window,
            });
        }
        if k == steps {
            break;
        }
        match rk4_step(plant, &s, &u, opts.dt) {
            Ok(next) => {
                let finite = next.q.iter().chain(next.v.iter()).all(|x| x.is_finite());
                if !finite || next.v.amax() > opts.divergence_bound {
                    meta.failure = Some(format!("state diverged at t = {:.6}", t + opts.dt));
                    break;
                }
                s = next;
            }
            Err(e) => {
                meta.failure = Some(format!("step failed at t = {t:.6}: {e}"));
                break;
            }
        }
        meta.steps_taken = k + 1;
    }
    Ok(Trajectory { meta, samples })
}

impl Trajectory {
    pub fn failed(&self) -> bool {
        self.meta.failure.is_some()
    }

    pub fn last(&self) -> &Sample {
        self.samples.last().expect("trajectory has at least one sample")
    }

    /// Largest `|H(t) − H(0)| / |H(0)|` over the recorded samples.
    pub fn max_energy_drift(&self) -> f64 {
        let h0 = self.samples[0].h;
        let scale = h0.abs().max(f64::MIN_POSITIVE);
        self.samples.iter().map(|s| (s.h - h0).abs() / scale).fold(0.0, f64::max)
    }

    /// `|∫(P_in − P_damp) dt − ΔH|`, relative to the largest energy involved.
    pub fn energy_residual(&self) -> f64 {
        let (a, b) = (&self.samples[0], self.last());
        let dh = b.h - a.h;
        let work = (b.work_in - a.work_in) - (b.work_damping - a.work_damping);
        let scale = [a.h.abs(), b.h.abs(), b.work_in.abs(), b.work_damping.abs()]
            .into_iter()
            .fold(f64::MIN_POSITIVE, f64::max);
        (work - dh).abs() / scale
    }

    /// Smallest input recorded over the run.
    pub fn min_input(&self) -> f64 {
        self.samples
            .iter()
            .flat_map(|s| s.u.iter().copied())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn column_names(&self) -> Vec<String> {
        let (n, m) = (self.meta.dof, self.meta.inputs);
        let mut cols = vec!["t".to_string()];
        cols.extend((1..=n).map(|i| format!("q{i}")));
        cols.extend((1..=n).map(|i| format!("qd{i}")));
        cols.extend((1..=n).map(|i| format!("theta{i}")));
        cols.extend((1..=m).map(|i| format!("u{i}")));
        cols.extend(["H", "P_in", "P_damp"].map(String::from));
        cols
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(self.column_names())?;
        for s in &self.samples {
            let mut row: Vec<String> = Vec::with_capacity(4 + 3 * s.q.len() + s.u.len());
            row.push(s.t.to_string());
            for v in s.q.iter().chain(s.qdot.iter()).chain(s.theta.iter()).chain(s.u.iter()) {
                row.push(v.to_string());
            }
            for v in [s.h, s.input_power, s.damping_power] {
                row.push(v.to_string());
            }
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    /// Metadata sidecar, with the column list and run-level diagnostics.
    pub fn metadata(&self) -> Value {
        json!({
            "model": self.meta.model,
            "controller": self.meta.controller,
            "dt": self.meta.dt,
            "t_final": self.meta.t_final,
            "seed": self.meta.seed,
            "record_stride": self.meta.record_stride,
            "dof": self.meta.dof,
            "inputs": self.meta.inputs,
            "steps_taken": self.meta.steps_taken,
            "theta_source": self.meta.theta_source,
            "failure": self.meta.failure,
            "columns": self.column_names(),
            "energy_residual": self.energy_residual(),
            "max_energy_drift": self.max_energy_drift(),
            "min_input": self.min_input(),
        })
    }

    /// Backbone curves of every `every`-th recorded sample as
    /// `frame, t, node, x, y, z` rows.
    pub fn write_backbone<W: Write>(&self, plant: &Plant, every: usize, w: W) -> Result<()> {
        let bb = plant
            .backbone
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig(format!("model `{}` has no backbone", plant.name)))?;
        let every = every.max(1);
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["frame", "t", "node", "x", "y", "z"])?;
        for (frame, s) in self.samples.iter().step_by(every).enumerate() {
            for (node, p) in bb.backbone(&s.q).iter().enumerate() {
                out.write_record([
                    frame.to_string(),
                    s.t.to_string(),
                    node.to_string(),
                    p[0].to_string(),
                    p[1].to_string(),
                    p[2].to_string(),
                ])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::ZeroInput;
    use crate::models::build_plant;

    #[test]
    fn step_count_requires_a_multiple() {
        assert_eq!(SimOptions::new(1e-3, 6.0).steps().unwrap(), 6000);
        assert!(SimOptions::new(0.3, 1.0).steps().is_err());
        assert!(SimOptions::new(0.0, 1.0).steps().is_err());
    }

    #[test]
    fn schedule_must_be_ordered() {
        let t = Target { theta_a: None, q: None };
        let steps = vec![
            ReferenceStep { t_start: 1.0, target: t.clone() },
            ReferenceStep { t_start: 0.5, target: t.clone() },
        ];
        assert!(ReferenceSchedule::new(steps).is_err());
        let s = ReferenceSchedule::new(vec![
            ReferenceStep { t_start: 0.0, target: t.clone() },
            ReferenceStep { t_start: 2.0, target: t },
        ])
        .unwrap();
        assert_eq!(s.active(1.99), Some(0));
        assert_eq!(s.active(2.0), Some(1));
    }

    #[test]
    fn free_satellite_conserves_energy() {
        let plant = build_plant("satellite", None).unwrap();
        let init = ConfigState::new(DVector::from_vec(vec![1.0, 0.0]), DVector::from_vec(vec![0.1, 0.5])).unwrap();
        let mut c = ZeroInput { m: 2 };
        let traj = integrate(
            &plant,
            None,
            &mut c,
            &ReferenceSchedule::empty(),
            &init,
            &SimOptions::new(1e-3, 10.0).with_stride(100),
        )
        .unwrap();
        assert!(!traj.failed());
        assert!(traj.max_energy_drift() < 1e-8, "{}", traj.max_energy_drift());
        assert_eq!(traj.samples.len(), 101);
    }

    #[test]
    fn csv_has_fixed_column_order() {
        let plant = build_plant("finger", None).unwrap();
        let init = ConfigState::at_rest(DVector::from_element(1, 0.2)).unwrap();
        let mut c = ZeroInput { m: 2 };
        let traj = integrate(
            &plant,
            None,
            &mut c,
            &ReferenceSchedule::empty(),
            &init,
            &SimOptions::new(1e-3, 0.01),
        )
        .unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let header = text.lines().next().unwrap();
        assert_eq!(header, "t,q1,qd1,theta1,u1,u2,H,P_in,P_damp");
        assert_eq!(text.lines().count(), 12);
    }
}
