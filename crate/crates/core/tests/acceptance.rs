//! One test per headline acceptance criterion.

use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};
use std::time::Instant;

use collocate::collocation::{Regime, SamplingDomain, Verdict};
use collocate::control::ZeroInput;
use collocate::experiment::{build_chart_for, static_equilibrium};
use collocate::models::gvs::{GvsParams, GvsRod, Routing};
use collocate::models::LinearMechanics;
use collocate::numeric::jacobian_fd;
use collocate::{
    build_plant, check_integrability, expand_runs, integrate, run_all, ConfigState, PathIntegrator, Plant,
    ReferenceSchedule, RunSummary, SimOptions,
};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

const COLLOCATED: [&str; 7] = ["spring2r", "finger", "pcc2", "gvs", "gvs-reduced", "volumetric", "constant"];

fn random_q(plant: &Plant, rng: &mut ChaCha8Rng) -> DVector<f64> {
    loop {
        let q = DVector::from_iterator(plant.dof(), plant.domain.iter().map(|&(lo, hi)| rng.random_range(lo..hi)));
        if !plant.actuation.is_singular(&q) {
            return q;
        }
    }
}

fn random_vec(n: usize, scale: f64, rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-scale..scale))
}

#[test]
fn integrability_classification() {
    let t0 = Instant::now();
    let tol = 1e-4;
    let sat = build_plant("satellite", None).unwrap();
    let report = check_integrability(sat.actuation.as_ref(), &SamplingDomain::new(sat.domain.clone()), tol).unwrap();
    assert_eq!(report.columns[0].verdict, Verdict::Integrable);
    assert_eq!(report.columns[1].verdict, Verdict::NonIntegrable);
    assert!((report.columns[1].worst_residual - 1.0).abs() < 1e-3, "{}", report.columns[1].worst_residual);
    for name in COLLOCATED {
        let plant = build_plant(name, None).unwrap();
        let report =
            check_integrability(plant.actuation.as_ref(), &SamplingDomain::new(plant.domain.clone()), tol).unwrap();
        for c in &report.columns {
            assert_eq!(c.verdict, Verdict::Integrable, "{name} column {}", c.column);
            assert!(c.worst_residual < tol, "{name} column {}: {}", c.column, c.worst_residual);
        }
    }
    assert!(t0.elapsed().as_secs_f64() < 10.0, "took {:?}", t0.elapsed());
}

#[test]
fn closed_form_gradients_match_actuation_matrix() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for name in COLLOCATED {
        let plant = build_plant(name, None).unwrap();
        let act = plant.actuation.clone();
        assert!(act.actuation_coordinates(&plant.home).is_some(), "{name} has no closed form");
        for _ in 0..200 {
            let q = random_q(&plant, &mut rng);
            let jac = jacobian_fd(|x| act.actuation_coordinates(x).unwrap(), &q, 1e-6);
            let err = (jac - act.matrix(&q).transpose()).amax();
            assert!(err < 1e-5, "{name}: {err:.3e} at {q:?}");
        }
    }
}

fn decoupling_residuals(name: &str, samples: usize) -> (f64, f64) {
    let plant = build_plant(name, None).unwrap();
    let chart = build_chart_for(&plant, &plant.home, None).unwrap();
    assert_eq!(chart.regime(), Regime::Underactuated);
    let m = plant.inputs();
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let (mut top, mut bottom) = (0.0_f64, 0.0_f64);
    for _ in 0..samples {
        let q = random_q(&plant, &mut rng);
        let u = random_vec(m, 10.0, &mut rng);
        let tau = chart.transform_force(&q, &u).unwrap();
        top = top.max((tau.rows(0, m) - &u).amax());
        bottom = bottom.max(tau.rows(m, plant.dof() - m).amax());
    }
    (top, bottom)
}

#[test]
fn decoupling_identity() {
    let t0 = Instant::now();
    let (top, bottom) = decoupling_residuals("pcc2", 1000);
    assert!(top < 1e-9 && bottom < 1e-9, "pcc2: {top:.3e} {bottom:.3e}");
    let plant = build_plant("gvs-reduced", None).unwrap();
    assert_eq!((plant.dof(), plant.inputs()), (9, 4));
    let (top, bottom) = decoupling_residuals("gvs-reduced", 1000);
    assert!(top < 1e-9 && bottom < 1e-9, "gvs-reduced: {top:.3e} {bottom:.3e}");
    assert!(t0.elapsed().as_secs_f64() < 30.0, "took {:?}", t0.elapsed());
}

#[test]
fn power_invariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for name in COLLOCATED {
        let plant = build_plant(name, None).unwrap();
        let chart = build_chart_for(&plant, &plant.home, None).unwrap();
        let act = plant.actuation.clone();
        for _ in 0..1000 {
            let q = random_q(&plant, &mut rng);
            let qdot = random_vec(plant.dof(), 2.0, &mut rng);
            let u = random_vec(plant.inputs(), 10.0, &mut rng);
            let p_q = qdot.dot(&(act.matrix(&q) * &u));
            let r = chart.verify_power_invariance(&q, &qdot, &u).unwrap();
            assert!(r < 1e-9 * (1.0 + p_q.abs()), "{name}: {r:.3e} vs {p_q:.3e}");
        }
    }
}

#[test]
fn cable_length_identity() {
    let params = GvsParams::full();
    let length = params.length;
    let rod = GvsRod::new(params).unwrap();
    let tendons = &rod.params().tendons;
    let oblique = tendons.iter().any(|t| matches!(t.routing, Routing::Oblique { .. }));
    let helical = tendons.iter().any(|t| matches!(t.routing, Routing::Helical { .. }));
    let short = tendons.iter().any(|t| t.end_or(length) < length);
    assert!(oblique && helical && short);
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let eps = 1e-6;
    for _ in 0..50 {
        let q = random_vec(rod.dof(), 5.0, &mut rng);
        let a = rod.actuation_matrix(&q);
        for j in 0..rod.dof() {
            let mut qp = q.clone();
            let mut qm = q.clone();
            qp[j] += eps;
            qm[j] -= eps;
            let d = (rod.cable_lengths(&qp).unwrap() - rod.cable_lengths(&qm).unwrap()) / (2.0 * eps);
            for i in 0..rod.tendons() {
                let err = (d[i] - a[(j, i)]).abs();
                assert!(err < 1e-6, "tendon {i}, coordinate {j}: {err:.3e}");
            }
        }
    }
}

fn time_path(points: impl Fn(f64) -> DVector<f64>, dt: f64) -> Vec<(f64, ConfigState)> {
    let steps = (1.0 / dt).round() as usize;
    (0..=steps)
        .map(|k| {
            let s = k as f64 * dt;
            (s, ConfigState::at_rest(points(s)).unwrap())
        })
        .collect()
}

fn passive_output(plant: &Plant, path: &[(f64, ConfigState)]) -> DVector<f64> {
    let mut integ = PathIntegrator::new(plant.inputs());
    collocate::integrate_passive_output(&mut integ, plant.actuation.as_ref(), path).unwrap()
}

#[test]
fn path_independence() {
    let dt = 1e-3;
    let mut rng = ChaCha8Rng::seed_from_u64(53);
    for name in COLLOCATED {
        let plant = build_plant(name, None).unwrap();
        let n = plant.dof();
        let (a, b) = (random_q(&plant, &mut rng), random_q(&plant, &mut rng));
        let width = DVector::from_iterator(n, plant.domain.iter().map(|&(lo, hi)| hi - lo));
        let bend = random_vec(n, 0.2, &mut rng).component_mul(&width);
        let straight = time_path(|s| &a + (&b - &a) * s, dt);
        let curved = time_path(|s| &a + (&b - &a) * s + &bend * (std::f64::consts::PI * s).sin(), dt);
        let (y1, y2) = (passive_output(&plant, &straight), passive_output(&plant, &curved));
        let err = (&y1 - &y2).amax();
        assert!(err < 5e-6, "{name}: {err:.3e}");
    }
    let sat = build_plant("satellite", None).unwrap();
    let corner = |x: f64, y: f64| DVector::from_vec(vec![x, y]);
    let leg = |from: DVector<f64>, to: DVector<f64>| move |s: f64| &from + (&to - &from) * s;
    let join = |p: Vec<(f64, ConfigState)>, q: Vec<(f64, ConfigState)>| {
        let mut out = p;
        out.extend(q.into_iter().skip(1).map(|(t, s)| (t + 1.0, s)));
        out
    };
    let lower = join(
        time_path(leg(corner(1.0, -0.5), corner(2.0, -0.5)), dt),
        time_path(leg(corner(2.0, -0.5), corner(2.0, 0.5)), dt),
    );
    let upper = join(
        time_path(leg(corner(1.0, -0.5), corner(1.0, 0.5)), dt),
        time_path(leg(corner(1.0, 0.5), corner(2.0, 0.5)), dt),
    );
    let gap = (passive_output(&sat, &lower) - passive_output(&sat, &upper)).abs();
    assert!(gap[0] < 5e-6, "satellite column 1: {:.3e}", gap[0]);
    assert!(gap[1] > 1e-2, "satellite column 2: {:.3e}", gap[1]);
}

/// Equilibrium plus the slowest elastic mode, scaled to `amplitude` in its
/// largest coordinate.
fn modal_start(plant: &Plant, amplitude: f64) -> DVector<f64> {
    let n = plant.dof();
    let q_eq = static_equilibrium(plant, &DVector::zeros(plant.inputs()), &plant.home).unwrap();
    let m = plant.mechanics.inertia(&q_eq);
    let k = jacobian_fd(|x| plant.mechanics.potential_gradient(x), &q_eq, 1e-6);
    let k = (&k + k.transpose()) * 0.5;
    let l = m.cholesky().unwrap();
    let linv = l.l().try_inverse().unwrap();
    let eig = (&linv * k * linv.transpose()).symmetric_eigen();
    let scale = eig.eigenvalues.amax();
    let i = (0..n)
        .filter(|&i| eig.eigenvalues[i] > 1e-6 * scale)
        .min_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]))
        .unwrap();
    let v = linv.transpose() * eig.eigenvectors.column(i);
    q_eq + &v * (amplitude / v.amax())
}

fn conservative_cases() -> Vec<(String, Plant, ConfigState)> {
    let mut out = Vec::new();
    let sat = build_plant("satellite", None).unwrap();
    out.push((
        "satellite".into(),
        sat,
        ConfigState::new(DVector::from_vec(vec![1.0, 0.0]), DVector::from_vec(vec![-0.5, 8.0])).unwrap(),
    ));
    let undamped: [(&str, Value, f64); 4] = [
        ("spring2r", json!({"damping": 0.0}), 0.2),
        ("finger", json!({"damping": 0.0}), 0.3),
        (
            "pcc2",
            json!({"gravity": 0.0, "bend_damping": 0.0, "direction_damping": 0.0, "axial_damping": 0.0}),
            0.5,
        ),
        ("gvs-reduced", json!({"gravity": 0.0, "damping": 0.0}), 1.0),
    ];
    for (name, params, amp) in undamped {
        let plant = build_plant(name, Some(&params)).unwrap();
        let q = modal_start(&plant, amp);
        out.push((name.into(), plant, ConfigState::at_rest(q).unwrap()));
    }
    let base = build_plant("constant", None).unwrap();
    let mech = LinearMechanics::new(vec![1.0; 3], vec![2.0, 3.0, 4.0], vec![0.0; 3]).unwrap();
    let linear = Plant {
        name: "constant-undamped".into(),
        mechanics: Arc::new(mech),
        ..base
    };
    let q = DVector::from_vec(vec![0.5, -0.3, 0.2]);
    out.push(("constant".into(), linear, ConfigState::at_rest(q).unwrap()));
    out
}

fn free_run(plant: &Plant, start: &ConfigState, dt: f64, t_final: f64) -> collocate::Trajectory {
    let mut ctrl = ZeroInput { m: plant.inputs() };
    let opts = SimOptions::new(dt, t_final).with_stride((0.01 / dt).round() as usize);
    let traj = integrate(plant, None, &mut ctrl, &ReferenceSchedule::empty(), start, &opts).unwrap();
    assert!(!traj.failed(), "{}: {:?}", plant.name, traj.meta.failure);
    traj
}

#[test]
fn energy_conservation_and_rk4_order() {
    for (name, plant, start) in conservative_cases() {
        let traj = free_run(&plant, &start, 1e-3, 10.0);
        let drift = traj.max_energy_drift();
        assert!(drift < 1e-8, "{name}: relative drift {drift:.3e}");
        let final_state = |dt: f64| {
            let t = free_run(&plant, &start, dt, 2.0);
            let s = t.last();
            DVector::from_iterator(2 * plant.dof(), s.q.iter().chain(s.qdot.iter()).copied())
        };
        let reference = final_state(1.25e-4);
        let e1 = (final_state(1e-3) - &reference).amax();
        let e2 = (final_state(5e-4) - &reference).amax();
        eprintln!("{name}: drift {drift:.3e}, order factor {:.2}", e1 / e2);
        assert!(e1 / e2 >= 11.0, "{name}: order factor {:.2} ({e1:.3e} / {e2:.3e})", e1 / e2);
    }
}

fn config_path(file: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(file)
}

fn regulation_runs(file: &str) -> Vec<RunSummary> {
    let path = config_path(file);
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let configs = expand_runs(&doc).unwrap();
    run_all(&configs, path.parent().unwrap())
        .into_iter()
        .map(|r| r.unwrap().summary)
        .collect()
}

struct Regulation {
    pcc2: Vec<RunSummary>,
    gvs: Vec<RunSummary>,
    seconds: f64,
}

fn regulation() -> &'static Regulation {
    static CELL: OnceLock<Regulation> = OnceLock::new();
    CELL.get_or_init(|| {
        let t0 = Instant::now();
        let (pcc2, gvs) = std::thread::scope(|s| {
            let a = s.spawn(|| regulation_runs("regulation_pcc2.json"));
            let b = s.spawn(|| regulation_runs("regulation_gvs.json"));
            (a.join().unwrap(), b.join().unwrap())
        });
        Regulation {
            pcc2,
            gvs,
            seconds: t0.elapsed().as_secs_f64(),
        }
    })
}

fn by_controller<'a>(runs: &'a [RunSummary], controller: &str) -> &'a RunSummary {
    runs.iter().find(|r| r.controller == controller).unwrap()
}

fn assert_regulates(run: &RunSummary) {
    assert!(run.failure.is_none(), "{}: {:?}", run.name, run.failure);
    assert_eq!(run.windows.len(), 3);
    for w in &run.windows {
        let e = w.theta_error.unwrap();
        assert!(e < 1e-3, "{} window {}: {e:.3e}", run.name, w.index);
        let settle = w.settle_time.unwrap_or(f64::INFINITY);
        assert!(settle <= 2.0, "{} window {} never settled", run.name, w.index);
    }
}

#[test]
fn regulation_p_sat_i_d_and_pd_plus_feedforward() {
    let reg = regulation();
    for runs in [&reg.pcc2, &reg.gvs] {
        assert_regulates(by_controller(runs, "p_sat_i_d"));
        assert_regulates(by_controller(runs, "pd_plus_ff"));
    }
    assert!(reg.seconds < 300.0, "took {:.0} s", reg.seconds);
}

fn mean_theta_error(run: &RunSummary) -> f64 {
    let errs: Vec<f64> = run.windows.iter().map(|w| w.theta_error.unwrap_or(f64::INFINITY)).collect();
    errs.iter().sum::<f64>() / errs.len() as f64
}

#[test]
fn q_space_pd_plus_leaves_larger_steady_state_error() {
    let reg = regulation();
    for runs in [&reg.pcc2, &reg.gvs] {
        let ours = by_controller(runs, "p_sat_i_d");
        let q_space = by_controller(runs, "pd_plus_q");
        let (a, b) = (mean_theta_error(ours), mean_theta_error(q_space));
        assert!(b >= 10.0 * a, "{}: q-space {b:.3e} vs P-satI-D {a:.3e}", q_space.model);
    }
}
