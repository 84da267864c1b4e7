use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use pmx::channels::{random_instrument, InstrumentSet};
use pmx::operator_algebra::{Field, Matrix, Operator, SystemLabel, C64};
use pmx::optimize::{optimize_instruments, Backend, SolverTolerances};
use pmx::pauli::{decompose, is_ocb_allowed, support_of, PauliString};
use pmx::process::{
    born_probabilities, causal_process, lgyni, normalization_residuals, project_locally_accessible, random_process,
    validate_process, CorrelationFunctional, ProcessMatrix, Theory, Tolerances,
};
use pmx::twirl::GroupRep;

const LEGS: [&str; 4] = ["A1", "A2", "B1", "B2"];

fn qubit(name: &str) -> SystemLabel {
    SystemLabel::new(name, 2)
}

fn legs() -> Vec<SystemLabel> {
    LEGS.map(qubit).to_vec()
}

fn instruments(field: Field, settings: usize, outcomes: usize, rng: &mut ChaCha8Rng) -> (InstrumentSet, InstrumentSet) {
    let a = random_instrument("A", field, settings, outcomes, &qubit("A1"), &qubit("A2"), rng).unwrap();
    let b = random_instrument("B", field, settings, outcomes, &qubit("B1"), &qubit("B2"), rng).unwrap();
    (a, b)
}

fn twirled_theory(which: u8) -> Theory {
    let rep = match which % 3 {
        0 => GroupRep::z2_parity(&LEGS),
        1 => GroupRep::z3_phase(&LEGS),
        _ => GroupRep::s3_standard(&LEGS),
    };
    Theory::Twirled(Box::new(rep))
}

fn max_forbidden(op: &Operator) -> f64 {
    decompose(op)
        .unwrap()
        .iter()
        .filter(|(s, _)| !is_ocb_allowed(&support_of(s)).unwrap())
        .map(|(_, c)| c.norm())
        .fold(0.0, f64::max)
}

fn random_state(name: &str, rng: &mut ChaCha8Rng) -> Operator {
    let g = Matrix::from_fn(2, 2, |_, _| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)));
    let rho = g.matmul(&g.adjoint());
    let tr = rho.trace().re;
    Operator::from_matrix(vec![qubit(name)], rho.scale_re(1.0 / tr)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn born_probabilities_of_rqt_processes_are_distributions(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = random_process(Theory::Rqt, &legs(), &mut rng).unwrap();
        let (a, b) = instruments(Field::Real, 2, 2, &mut rng);
        let p = born_probabilities(&w, &a, &b).unwrap();
        for x in 0..2 {
            for y in 0..2 {
                let mut row = 0.0;
                for ao in 0..2 {
                    for bo in 0..2 {
                        let v = p.p(ao, bo, x, y);
                        prop_assert!((-1e-10..=1.0 + 1e-10).contains(&v));
                        row += v;
                    }
                }
                prop_assert!((row - 1.0).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn locally_accessible_part_has_no_forbidden_support(seed in any::<u64>(), which in 0u8..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let theory = if which == 3 { Theory::Rqt } else { twirled_theory(which) };
        let w = random_process(theory, &legs(), &mut rng).unwrap();
        let (la, ga) = project_locally_accessible(&w).unwrap();
        prop_assert!(max_forbidden(&la) <= 1e-10);
        prop_assert!(la.add(&ga).unwrap().matrix().max_abs_diff(w.op().matrix()) <= 1e-12);
    }

    #[test]
    fn normalization_residuals_match_channel_probabilities(seed in any::<u64>(), real in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (theory, field) = if real { (Theory::Rqt, Field::Real) } else { (Theory::Qt, Field::Complex) };
        let w = random_process(theory.clone(), &legs(), &mut rng).unwrap();
        let res = normalization_residuals(&w).unwrap();
        prop_assert!(res.max_abs() <= 1e-10);

        // IZIZ lies on the forbidden support {A2, B2}.
        let loop_term = PauliString::bipartite("IZIZ").unwrap().to_operator().scale(0.01);
        let bad = ProcessMatrix::new(w.op().add(&loop_term).unwrap(), theory).unwrap();
        prop_assert!(normalization_residuals(&bad).unwrap().max_abs() > 1e-3);

        let (mut good_dev, mut bad_dev): (f64, f64) = (0.0, 0.0);
        for _ in 0..100 {
            let (a, b) = instruments(field, 1, 1, &mut rng);
            good_dev = good_dev.max((born_probabilities(&w, &a, &b).unwrap().p(0, 0, 0, 0) - 1.0).abs());
            bad_dev = bad_dev.max((born_probabilities(&bad, &a, &b).unwrap().p(0, 0, 0, 0) - 1.0).abs());
        }
        prop_assert!(good_dev <= 1e-9);
        prop_assert!(bad_dev > 1e-4);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn causal_processes_respect_the_causal_bound(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rho = random_state("A1", &mut rng);
        let chan = random_instrument("C", Field::Complex, 1, 1, &qubit("A2"), &qubit("B1"), &mut rng).unwrap();
        let w = causal_process(&rho, chan.element(0, 0), qubit("B2"), Theory::Qt).unwrap();
        prop_assert!(validate_process(&w, &Tolerances::default()).unwrap().passed());
        let (a, b) = instruments(Field::Complex, 2, 2, &mut rng);
        let (ma, mb, v) = optimize_instruments(
            &w, &a, &b, &Theory::Qt, &CorrelationFunctional::lgyni(), 4, Backend::Clarabel, &SolverTolerances::default(),
        ).unwrap();
        prop_assert!(v <= 0.75 + 1e-7, "{}", v);
        prop_assert!((lgyni(&born_probabilities(&w, &ma, &mb).unwrap()).unwrap() - v).abs() <= 1e-12);
    }
}
