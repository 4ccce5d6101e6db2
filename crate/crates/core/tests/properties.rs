use collocate::control::IntegralState;
use collocate::dynamics::{hamiltonian_rate, inertia_diagnostics};
use collocate::experiment::build_chart_for;
use collocate::numeric::jacobian_fd;
use collocate::{build_plant, power_balance_residual, ConfigState, CoordinateChart, Plant};
use nalgebra::DVector;
use proptest::prelude::*;

const COLLOCATED: [&str; 7] = ["spring2r", "finger", "pcc2", "gvs", "gvs-reduced", "volumetric", "constant"];
const ALL: [&str; 8] = ["satellite", "spring2r", "finger", "pcc2", "gvs", "gvs-reduced", "volumetric", "constant"];

struct Fixture {
    plant: Plant,
    chart: Option<CoordinateChart>,
}

fn fixtures() -> &'static [Fixture] {
    static CELL: std::sync::OnceLock<Vec<Fixture>> = std::sync::OnceLock::new();
    CELL.get_or_init(|| {
        ALL.iter()
            .map(|&name| {
                let plant = build_plant(name, None).unwrap();
                let chart =
                    COLLOCATED.contains(&name).then(|| build_chart_for(&plant, &plant.home, None).unwrap());
                Fixture { plant, chart }
            })
            .collect()
    })
}

fn fixture(name: &str) -> &'static Fixture {
    let i = ALL.iter().position(|&n| n == name).unwrap();
    &fixtures()[i]
}

/// Map unit-interval samples into the plant's box; `None` on a declared singularity.
fn point(plant: &Plant, unit: &[f64]) -> Option<DVector<f64>> {
    let q = DVector::from_iterator(
        plant.dof(),
        plant.domain.iter().zip(unit).map(|(&(lo, hi), &s)| lo + (hi - lo) * s),
    );
    (!plant.actuation.is_singular(&q)).then_some(q)
}

fn signed(unit: &[f64], n: usize, scale: f64) -> DVector<f64> {
    DVector::from_iterator(n, unit.iter().take(n).map(|s| scale * (2.0 * s - 1.0)))
}

fn units(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..1.0_f64, len)
}

const MAX_DOF: usize = 15;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn inertia_is_symmetric_positive_definite(model in prop::sample::select(ALL.to_vec()), s in units(MAX_DOF)) {
        let plant = &fixture(model).plant;
        let q = point(plant, &s);
        prop_assume!(q.is_some());
        let (asym, lo) = inertia_diagnostics(plant.mechanics.as_ref(), &q.unwrap());
        prop_assert!(asym < 1e-12, "{model}: asymmetry {asym:.3e}");
        prop_assert!(lo > 0.0, "{model}: smallest eigenvalue {lo:.3e}");
    }

    #[test]
    fn power_balance_and_passivity(
        model in prop::sample::select(ALL.to_vec()),
        s in units(MAX_DOF),
        v in units(MAX_DOF),
        u in units(8),
    ) {
        let plant = &fixture(model).plant;
        let q = point(plant, &s);
        prop_assume!(q.is_some());
        let state = ConfigState::new(q.unwrap(), signed(&v, plant.dof(), 1.0)).unwrap();
        let u = signed(&u, plant.inputs(), 5.0);
        let qddot = plant.forward_dynamics(&state, &u).unwrap();
        let again = plant.forward_dynamics(&state, &u).unwrap();
        prop_assert_eq!(&qddot, &again);
        let (mech, act) = (plant.mechanics.as_ref(), plant.actuation.as_ref());
        let hdot = hamiltonian_rate(mech, &state, &qddot).unwrap();
        let r = power_balance_residual(mech, act, &state, &u, &qddot).unwrap();
        prop_assert!(r < 1e-9 * (1.0 + hdot.abs()), "{model}: residual {r:.3e}, Ḣ {hdot:.3e}");
        let p_in = state.qdot.dot(&(act.matrix(&state.q) * &u));
        prop_assert!(hdot <= p_in + 1e-9 * (1.0 + hdot.abs()), "{model}: Ḣ {hdot:.3e} > input power {p_in:.3e}");
    }

    #[test]
    fn chart_jacobian_matches_finite_differences(model in prop::sample::select(COLLOCATED.to_vec()), s in units(MAX_DOF)) {
        let fx = fixture(model);
        let q = point(&fx.plant, &s);
        prop_assume!(q.is_some());
        let q = q.unwrap();
        let chart = fx.chart.as_ref().unwrap();
        let fd = jacobian_fd(|x| chart.h(x), &q, 1e-6);
        let err = (fd - chart.jacobian(&q)).amax();
        prop_assert!(err < 1e-5, "{model}: {err:.3e}");
    }

    #[test]
    fn chart_inverse_round_trips(model in prop::sample::select(COLLOCATED.to_vec()), s in units(MAX_DOF), nudge in units(MAX_DOF)) {
        let fx = fixture(model);
        let q = point(&fx.plant, &s);
        prop_assume!(q.is_some());
        let q = q.unwrap();
        let chart = fx.chart.as_ref().unwrap();
        prop_assume!(chart.jacobian(&q).svd(false, false).singular_values.min() > 1e-6);
        let width = DVector::from_iterator(q.len(), fx.plant.domain.iter().map(|&(lo, hi)| hi - lo));
        let guess = &q + signed(&nudge, q.len(), 1e-3).component_mul(&width);
        let back = chart.inverse(&chart.h(&q), &guess).unwrap();
        let err = (&back - &q).amax();
        let tol = if matches!(model, "constant" | "finger") { 1e-12 } else { 1e-9 };
        prop_assert!(err < tol * (1.0 + q.amax()), "{model}: {err:.3e}");
    }

    #[test]
    fn transformed_force_decouples(model in prop::sample::select(COLLOCATED.to_vec()), s in units(MAX_DOF), u in units(8)) {
        let fx = fixture(model);
        let q = point(&fx.plant, &s);
        prop_assume!(q.is_some());
        let q = q.unwrap();
        let chart = fx.chart.as_ref().unwrap();
        prop_assume!(chart.jacobian(&q).svd(false, false).singular_values.min() > 1e-6);
        let m = fx.plant.inputs();
        let u = signed(&u, m, 5.0);
        let tau = chart.transform_force(&q, &u).unwrap();
        let r = chart.chart_inputs().len();
        if r == m {
            prop_assert!((tau.rows(0, m) - &u).amax() < 1e-9 * (1.0 + u.amax()));
        }
        let rest = tau.rows(r, q.len() - r).amax();
        prop_assert!(rest < 1e-9 * (1.0 + u.amax()), "{model}: {rest:.3e}");
    }

    #[test]
    fn integral_increment_is_bounded(e in prop::collection::vec(-50.0..50.0_f64, 1..6), dt in 1e-5..1e-1_f64, steps in 1usize..20) {
        let m = e.len();
        let e = DVector::from_vec(e);
        let mut z = IntegralState::new(m);
        for _ in 0..steps {
            let before = z.value().clone();
            z.advance(&e, dt);
            let step = (z.value() - before).norm();
            prop_assert!(step <= dt * (m as f64).sqrt() * (1.0 + 1e-12));
        }
        z.reset();
        prop_assert_eq!(z.value().amax(), 0.0);
    }
}
