use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use pmx::channels::{random_instrument, ChoiOperator};
use pmx::operator_algebra::{Field, Matrix, SystemLabel, C64};
use pmx::process::{random_process, validate_process, Theory, Tolerances};
use pmx::twirl::{
    average_process, cyclic_cayley, decode_instrument_twirled, encode_instrument_twirled, is_covariant,
    simulate_qt_in_twirled, twirl_choi, GroupRep,
};
use pmx::Error;

const LEGS: [&str; 4] = ["A1", "A2", "B1", "B2"];

fn qubit(name: &str) -> SystemLabel {
    SystemLabel::new(name, 2)
}

fn rep(which: u8) -> GroupRep {
    match which % 3 {
        0 => GroupRep::z2_parity(&LEGS),
        1 => GroupRep::z3_phase(&LEGS),
        _ => GroupRep::s3_standard(&LEGS),
    }
}

fn random_choi(input: &str, output: &str, rng: &mut ChaCha8Rng) -> ChoiOperator {
    random_instrument("T", Field::Complex, 1, 2, &qubit(input), &qubit(output), rng).unwrap().element(0, 0).clone()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn twirled_choi_is_covariant_and_idempotent(seed in any::<u64>(), which in 0u8..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = rep(which);
        let m = random_choi("A1", "A2", &mut rng);
        let t = twirl_choi(&m, &g).unwrap();
        prop_assert!(is_covariant(&t, &g, 1e-10).unwrap());
        prop_assert!(twirl_choi(&t, &g).unwrap().matrix().max_abs_diff(t.matrix()) <= 1e-12);
        prop_assert!((t.matrix().trace() - m.matrix().trace()).norm() <= 1e-12);
    }

    #[test]
    fn averaging_preserves_pairings_with_covariant_testers(seed in any::<u64>(), which in 0u8..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = rep(which);
        let legs: Vec<SystemLabel> = LEGS.map(qubit).to_vec();
        let w = random_process(Theory::Twirled(Box::new(g.clone())), &legs, &mut rng).unwrap();
        let avg = average_process(&w, &g).unwrap();
        prop_assert!(validate_process(&avg, &Tolerances::default()).unwrap().passed());
        let ta = twirl_choi(&random_choi("A1", "A2", &mut rng), &g).unwrap();
        let tb = twirl_choi(&random_choi("B1", "B2", &mut rng), &g).unwrap();
        let tester = ta.op().tensor(tb.op()).unwrap();
        let before = w.op().hs_inner(&tester).unwrap();
        let after = avg.op().hs_inner(&tester).unwrap();
        prop_assert!((before - after).norm() <= 1e-10);
    }

    #[test]
    fn decode_inverts_twirled_encoding(seed in any::<u64>(), order in 2usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = GroupRep::new(cyclic_cayley(order), BTreeMap::new()).unwrap();
        let m = random_choi("A1", "A2", &mut rng);
        let enc = encode_instrument_twirled(&m, &g).unwrap();
        prop_assert_eq!(enc.input().dim, 2 * order);
        let dec = decode_instrument_twirled(&enc, &g).unwrap();
        prop_assert!(dec.matrix().max_abs_diff(m.matrix()) <= 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn parity_simulation_reproduces_probabilities(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = GroupRep::new(cyclic_cayley(2), BTreeMap::new()).unwrap();
        let legs: Vec<SystemLabel> = LEGS.map(qubit).to_vec();
        let w = random_process(Theory::Qt, &legs, &mut rng).unwrap();
        let a = random_instrument("A", Field::Complex, 2, 2, &legs[0], &legs[1], &mut rng).unwrap();
        let b = random_instrument("B", Field::Complex, 2, 2, &legs[2], &legs[3], &mut rng).unwrap();
        let sim = simulate_qt_in_twirled(&w, &[&a, &b], &g).unwrap();
        prop_assert!(sim.max_deviation <= 1e-9);
        prop_assert!(sim.invariance_deviation <= 1e-10);
        prop_assert!(sim.validation.passed());
    }
}

#[test]
fn non_homomorphic_unitaries_are_rejected() {
    let z = Matrix::diag(&[C64::new(1.0, 0.0), C64::new(-1.0, 0.0)]);
    let x = Matrix::from_real(2, 2, &[0.0, 1.0, 1.0, 0.0]);
    for bad in [vec![Matrix::identity(2), z.clone(), x.clone()], vec![Matrix::identity(2), z, x.scale_re(2.0)]] {
        let r = GroupRep::uniform(cyclic_cayley(3), bad, &["A1"]);
        assert!(matches!(r, Err(Error::InvalidGroup(_))));
    }
}
