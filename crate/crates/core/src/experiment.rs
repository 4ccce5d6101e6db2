//! JSON-configured runs: plant, chart, controller, reference schedule and
//! integrator settings, plus the per-window summary written next to the
//! trajectory.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::collocation::{ChartOptions, CoordinateChart, Regime};
use crate::control::{Controller, GainsConfig, PSatID, PdPlusFeedforward, PdPlusQSpace, Target, ZeroInput};
use crate::dynamics::{ConfigState, Plant};
use crate::error::{check_dim, Error, Result};
use crate::models::build_plant;
use crate::numeric::jacobian_fd;
use crate::simulate::{integrate, ReferenceSchedule, ReferenceStep, SimOptions, Trajectory};

pub const SCHEMA_VERSION: u64 = 1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    #[default]
    Zero,
    PSatID,
    PdPlusFf,
    PdPlusQ,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    pub kind: ControllerKind,
    pub gains: GainsConfig,
}

/// One setpoint. Exactly one of `theta`, `q` or `tensions` is given; with
/// `tensions`, the static equilibrium under those inputs is computed and
/// rounded to `decimals` decimal places to give `q_d`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceConfig {
    pub t_start: f64,
    #[serde(default)]
    pub theta: Option<Vec<f64>>,
    #[serde(default)]
    pub q: Option<Vec<f64>>,
    #[serde(default)]
    pub tensions: Option<Vec<f64>>,
    #[serde(default = "default_decimals")]
    pub decimals: u32,
}

fn default_decimals() -> u32 {
    2
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialConfig {
    pub q: Option<Vec<f64>>,
    pub qdot: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChartConfig {
    pub selection: Option<Vec<usize>>,
    /// Anchor of the chart; the initial configuration when absent.
    pub q0: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: u64,
    #[serde(default)]
    pub name: Option<String>,
    pub model: String,
    /// Inline parameters of the model.
    #[serde(default)]
    pub params: Option<Value>,
    /// JSON file with one section per model name.
    #[serde(default)]
    pub params_file: Option<PathBuf>,
    #[serde(default)]
    pub controller: ControllerConfig,
    #[serde(default)]
    pub references: Vec<ReferenceConfig>,
    #[serde(default)]
    pub sim: SimOptions,
    #[serde(default)]
    pub initial: InitialConfig,
    #[serde(default)]
    pub chart: ChartConfig,
    /// Export the backbone of every n-th recorded sample.
    #[serde(default)]
    pub backbone_every: Option<usize>,
    /// Tolerance on `‖θ_a − θ_ad‖` used for settling times.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

fn default_tolerance() -> f64 {
    1e-3
}

/// Recursively overlay `patch` onto `base`.
pub fn merge_json(base: &mut Value, patch: &Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge_json(slot, v),
                    _ => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (b, p) => *b = p.clone(),
    }
}

/// Expand a config document into one config per run. A top-level `runs`
/// list overlays each entry on the remaining fields.
pub fn expand_runs(doc: &Value) -> Result<Vec<ExperimentConfig>> {
    let mut base = doc.clone();
    let runs = match base.as_object_mut() {
        Some(obj) => obj.remove("runs"),
        None => return Err(Error::InvalidConfig("config must be a JSON object".into())),
    };
    let has_runs = runs.is_some();
    let docs: Vec<Value> = match runs {
        None => vec![base],
        Some(Value::Array(list)) if !list.is_empty() => list
            .iter()
            .map(|r| {
                let mut d = base.clone();
                merge_json(&mut d, r);
                d
            })
            .collect(),
        Some(_) => return Err(Error::InvalidConfig("`runs` must be a non-empty list".into())),
    };
    let mut out = Vec::with_capacity(docs.len());
    for (i, d) in docs.into_iter().enumerate() {
        let mut cfg: ExperimentConfig =
            serde_json::from_value(d).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        if cfg.schema != SCHEMA_VERSION {
            return Err(Error::InvalidConfig(format!(
                "unsupported schema {}, expected {SCHEMA_VERSION}",
                cfg.schema
            )));
        }
        if cfg.name.is_none() {
            cfg.name = Some(if !has_runs {
                format!("{}-{}", cfg.model, controller_label(cfg.controller.kind))
            } else {
                format!("{}-{}-{i}", cfg.model, controller_label(cfg.controller.kind))
            });
        }
        out.push(cfg);
    }
    let mut names: Vec<&String> = out.iter().filter_map(|c| c.name.as_ref()).collect();
    names.sort();
    if names.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidConfig("run names must be unique".into()));
    }
    Ok(out)
}

fn controller_label(kind: ControllerKind) -> &'static str {
    match kind {
        ControllerKind::Zero => "zero",
        ControllerKind::PSatID => "p_sat_i_d",
        ControllerKind::PdPlusFf => "pd_plus_ff",
        ControllerKind::PdPlusQ => "pd_plus_q",
    }
}

/// Round to `decimals` places; `-0.0` comes back as `0.0`.
pub fn round_decimals(x: f64, decimals: u32) -> f64 {
    if !x.is_finite() {
        return x;
    }
    let scale = 10f64.powi(decimals as i32);
    (x * scale).round() / scale + 0.0
}

/// Solve `∇U(q) = A(q) u` for `q` by damped Newton iteration from `guess`.
pub fn static_equilibrium(plant: &Plant, u: &DVector<f64>, guess: &DVector<f64>) -> Result<DVector<f64>> {
    check_dim("tensions", plant.inputs(), u.len())?;
    check_dim("guess", plant.dof(), guess.len())?;
    let f = |q: &DVector<f64>| plant.mechanics.potential_gradient(q) - plant.actuation.matrix(q) * u;
    // Descent merit: the shaped potential when θ is known in closed form, else |f|².
    let merit = |q: &DVector<f64>, r: &DVector<f64>| match plant.actuation.actuation_coordinates(q) {
        Some(theta) => plant.mechanics.potential(q) - u.dot(&theta),
        None => r.norm_squared(),
    };
    let tol = 1e-12 * (1.0 + u.amax());
    let mut q = guess.clone();
    let mut r = f(&q);
    let mut e = merit(&q, &r);
    for _ in 0..100 {
        if r.norm() < tol {
            return Ok(q);
        }
        // Saddle-free Newton: flip negative curvature so every step descends.
        let j = jacobian_fd(f, &q, 1e-7);
        let eig = ((&j + j.transpose()) * 0.5).symmetric_eigen();
        let scale = eig.eigenvalues.amax().max(f64::MIN_POSITIVE);
        let inv = eig.eigenvalues.map(|l| 1.0 / l.abs().max(1e-8 * scale));
        let step = &eig.eigenvectors * DVector::from_fn(q.len(), |i, _| inv[i] * eig.eigenvectors.column(i).dot(&r));
        let mut lambda = 1.0;
        loop {
            let trial = &q - &step * lambda;
            let rt = f(&trial);
            let et = merit(&trial, &rt);
            if et <= e || rt.norm() < r.norm() || lambda < 1e-8 {
                q = trial;
                r = rt;
                e = et;
                break;
            }
            lambda *= 0.5;
        }
    }
    let norm = r.norm();
    if norm < 1e-9 * (1.0 + u.amax()) {
        return Ok(q);
    }
    Err(Error::NotConverged {
        what: "static equilibrium",
        iterations: 100,
        residual: norm,
    })
}

const CONTINUATION_STEPS: usize = 16;

/// Everything assembled from a config, ready to integrate.
pub struct Setup {
    pub name: String,
    pub plant: Plant,
    pub chart: Option<Arc<CoordinateChart>>,
    pub schedule: ReferenceSchedule,
    pub initial: ConfigState,
    pub config: ExperimentConfig,
}

fn vector(what: &'static str, n: usize, v: &[f64]) -> Result<DVector<f64>> {
    check_dim(what, n, v.len())?;
    Ok(DVector::from_column_slice(v))
}

fn model_section(cfg: &ExperimentConfig, base_dir: &Path) -> Result<Option<Value>> {
    let mut section = None;
    if let Some(file) = &cfg.params_file {
        let path = if file.is_absolute() { file.clone() } else { base_dir.join(file) };
        let doc: Value = serde_json::from_str(&std::fs::read_to_string(&path)?)?;
        section = doc.get(&cfg.model).cloned();
    }
    if let Some(inline) = &cfg.params {
        match &mut section {
            Some(s) => merge_json(s, inline),
            None => section = Some(inline.clone()),
        }
    }
    Ok(section)
}

pub fn build_chart_for(plant: &Plant, q0: &DVector<f64>, selection: Option<Vec<usize>>) -> Result<CoordinateChart> {
    let mut opts = ChartOptions::default();
    if let Some(sel) = selection.or_else(|| plant.chart_selection.clone()) {
        opts = opts.with_selection(sel);
    }
    CoordinateChart::build(plant.actuation.clone(), Regime::infer(plant.dof(), plant.inputs()), q0, opts)
}

pub fn prepare(cfg: &ExperimentConfig, base_dir: &Path) -> Result<Setup> {
    let section = model_section(cfg, base_dir)?;
    let plant = build_plant(&cfg.model, section.as_ref())?;
    let n = plant.dof();
    let q_init = match &cfg.initial.q {
        Some(q) => vector("initial q", n, q)?,
        None => plant.home.clone(),
    };
    let qdot_init = match &cfg.initial.qdot {
        Some(v) => vector("initial qdot", n, v)?,
        None => DVector::zeros(n),
    };
    let initial = ConfigState::new(q_init.clone(), qdot_init)?;
    let q0 = match &cfg.chart.q0 {
        Some(q) => vector("chart q0", n, q)?,
        None => q_init.clone(),
    };
    let chart = match build_chart_for(&plant, &q0, cfg.chart.selection.clone()) {
        Ok(c) => Some(Arc::new(c)),
        Err(Error::NotCollocated(_)) if matches!(cfg.controller.kind, ControllerKind::Zero | ControllerKind::PdPlusQ) => None,
        Err(e) => return Err(e),
    };

    let mut steps = Vec::with_capacity(cfg.references.len());
    let mut guess = q_init;
    let mut last_u: Option<DVector<f64>> = None;
    for (i, r) in cfg.references.iter().enumerate() {
        let given = [r.theta.is_some(), r.q.is_some(), r.tensions.is_some()];
        if given.iter().filter(|&&g| g).count() != 1 {
            return Err(Error::InvalidConfig(format!(
                "reference {i} must give exactly one of theta, q or tensions"
            )));
        }
        let q_d = if let Some(t) = &r.tensions {
            let u = vector("tensions", plant.inputs(), t)?;
            // Continuation from the previous reference keeps the branch the plant actually follows.
            if let Some(prev) = &last_u {
                for k in 1..CONTINUATION_STEPS {
                    let s = k as f64 / CONTINUATION_STEPS as f64;
                    guess = static_equilibrium(&plant, &(prev * (1.0 - s) + &u * s), &guess)?;
                }
            }
            let q_eq = static_equilibrium(&plant, &u, &guess)?;
            guess = q_eq.clone();
            last_u = Some(u);
            Some(q_eq.map(|x| round_decimals(x, r.decimals)))
        } else {
            r.q.as_ref().map(|q| vector("reference q", n, q)).transpose()?
        };
        let theta_a = match (&r.theta, &q_d, &chart) {
            (Some(t), _, _) => Some(DVector::from_column_slice(t)),
            (None, Some(q), Some(c)) => Some(c.theta_a(q)),
            _ => None,
        };
        steps.push(ReferenceStep {
            t_start: r.t_start,
            target: Target { theta_a, q: q_d },
        });
    }
    Ok(Setup {
        name: cfg.name.clone().unwrap_or_else(|| cfg.model.clone()),
        schedule: ReferenceSchedule::new(steps)?,
        plant,
        chart,
        initial,
        config: cfg.clone(),
    })
}

pub fn make_controller(setup: &Setup) -> Result<Box<dyn Controller>> {
    let cfg = &setup.config.controller;
    let plant = &setup.plant;
    let need_chart = || {
        setup
            .chart
            .clone()
            .ok_or_else(|| Error::InvalidConfig("this controller needs a collocated chart".into()))
    };
    Ok(match cfg.kind {
        ControllerKind::Zero => Box::new(ZeroInput { m: plant.inputs() }),
        ControllerKind::PSatID => {
            let chart = need_chart()?;
            let gains = cfg.gains.build(chart.chart_inputs().len())?;
            Box::new(PSatID::new(gains, &chart)?)
        }
        ControllerKind::PdPlusFf => {
            let chart = need_chart()?;
            let gains = cfg.gains.build(chart.chart_inputs().len())?;
            Box::new(PdPlusFeedforward::new(gains, plant.clone(), chart)?)
        }
        ControllerKind::PdPlusQ => {
            let r = setup.chart.as_ref().map_or(plant.inputs().min(plant.dof()), |c| c.chart_inputs().len());
            let gains = cfg.gains.build(r)?;
            Box::new(PdPlusQSpace::new(&gains, plant.clone()))
        }
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WindowSummary {
    pub index: usize,
    pub t_start: f64,
    pub t_end: f64,
    /// `‖θ_a − θ_ad‖` at the end of the window.
    pub theta_error: Option<f64>,
    /// `‖q − q_d‖` at the end of the window.
    pub q_error: Option<f64>,
    /// Distance between the tips of `q` and `q_d`.
    pub tip_error: Option<f64>,
    /// First time after which the θ error stays below the tolerance.
    pub settle_time: Option<f64>,
    pub theta_desired: Option<Vec<f64>>,
    pub q_desired: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunSummary {
    pub name: String,
    pub model: String,
    pub controller: String,
    pub failure: Option<String>,
    pub windows: Vec<WindowSummary>,
    pub min_input: f64,
    pub energy_residual: f64,
    pub max_energy_drift: f64,
}

impl RunSummary {
    pub fn max_theta_error(&self) -> Option<f64> {
        self.windows.iter().filter_map(|w| w.theta_error).reduce(f64::max)
    }
}

fn theta_error(chart: &CoordinateChart, theta: &DVector<f64>, target: &DVector<f64>) -> f64 {
    let r = chart.chart_inputs().len();
    (theta.rows(0, r) - target).norm()
}

pub fn summarize(setup: &Setup, traj: &Trajectory) -> RunSummary {
    let steps = setup.schedule.steps();
    let mut windows = Vec::with_capacity(steps.len());
    for (i, step) in steps.iter().enumerate() {
        let t_end = steps.get(i + 1).map_or(traj.meta.t_final, |s| s.t_start);
        let in_window: Vec<_> = traj.samples.iter().filter(|s| s.window == Some(i)).collect();
        let last = in_window.last();
        let theta_err = |s: &crate::simulate::Sample| match (&setup.chart, &step.target.theta_a) {
            (Some(c), Some(t)) => Some(theta_error(c, &s.theta, t)),
            _ => None,
        };
        let theta_error = last.and_then(|s| theta_err(s));
        let q_error = match (last, &step.target.q) {
            (Some(s), Some(q)) => Some((&s.q - q).norm()),
            _ => None,
        };
        let tip_error = match (last, &step.target.q, &setup.plant.backbone) {
            (Some(s), Some(q), Some(bb)) => {
                let (a, b) = (bb.tip(&s.q), bb.tip(q));
                Some(((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt())
            }
            _ => None,
        };
        let settle_time = if theta_error.is_some() {
            let mut settle = None;
            for s in &in_window {
                match theta_err(s) {
                    Some(e) if e < setup.config.tolerance => {
                        settle.get_or_insert(s.t - step.t_start);
                    }
                    _ => settle = None,
                }
            }
            settle
        } else {
            None
        };
        windows.push(WindowSummary {
            index: i,
            t_start: step.t_start,
            t_end,
            theta_error,
            q_error,
            tip_error,
            settle_time,
            theta_desired: step.target.theta_a.as_ref().map(|v| v.iter().copied().collect()),
            q_desired: step.target.q.as_ref().map(|v| v.iter().copied().collect()),
        });
    }
    RunSummary {
        name: setup.name.clone(),
        model: traj.meta.model.clone(),
        controller: traj.meta.controller.clone(),
        failure: traj.meta.failure.clone(),
        windows,
        min_input: traj.min_input(),
        energy_residual: traj.energy_residual(),
        max_energy_drift: traj.max_energy_drift(),
    }
}

pub struct RunOutput {
    pub setup: Setup,
    pub trajectory: Trajectory,
    pub summary: RunSummary,
}

pub fn run(cfg: &ExperimentConfig, base_dir: &Path) -> Result<RunOutput> {
    let setup = prepare(cfg, base_dir)?;
    let mut controller = make_controller(&setup)?;
    let trajectory = integrate(
        &setup.plant,
        setup.chart.as_deref(),
        controller.as_mut(),
        &setup.schedule,
        &setup.initial,
        &cfg.sim,
    )?;
    let summary = summarize(&setup, &trajectory);
    Ok(RunOutput {
        setup,
        trajectory,
        summary,
    })
}

/// Run every config on its own thread; results keep the input order.
pub fn run_all(configs: &[ExperimentConfig], base_dir: &Path) -> Vec<Result<RunOutput>> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = configs
            .iter()
            .map(|c| scope.spawn(move || run(c, base_dir)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::InvalidConfig("run panicked".into()))))
            .collect()
    })
}

/// Write `<name>.csv`, `<name>.json` and optionally `<name>_backbone.csv`.
pub fn write_outputs(out_dir: &Path, run: &RunOutput) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    let name = &run.setup.name;
    let csv_path = out_dir.join(format!("{name}.csv"));
    run.trajectory.save_csv(&csv_path)?;
    let mut written = vec![csv_path];
    let mut meta = run.trajectory.metadata();
    meta["name"] = json!(name);
    meta["summary"] = serde_json::to_value(&run.summary)?;
    meta["config"] = serde_json::to_value(&run.setup.config)?;
    let json_path = out_dir.join(format!("{name}.json"));
    std::fs::write(&json_path, serde_json::to_string_pretty(&meta)?)?;
    written.push(json_path);
    if let Some(every) = run.setup.config.backbone_every {
        if run.setup.plant.backbone.is_some() {
            let path = out_dir.join(format!("{name}_backbone.csv"));
            run.trajectory
                .write_backbone(&run.setup.plant, every, std::fs::File::create(&path)?)?;
            written.push(path);
        }
    }
    Ok(written)
}
