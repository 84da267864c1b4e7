//! Acceptance criteria 1–10, one PASS/FAIL line each.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use pmx::certify::{load_reference_certificate, reference_tables, verify_certificate, Certificate, FunctionalSpec, ToleranceProfile};
use pmx::channels::{decode_choi, encode_choi, encode_instrument, random_instrument, realify_matrix, ChoiOperator, InstrumentSet};
use pmx::operator_algebra::{Field, Matrix, Operator, SystemLabel, C64};
use pmx::optimize::{
    build_opt_instrument, build_opt_w, optimize_instruments, seesaw, solve, Backend, Party, SeesawConfig, SolverTolerances,
};
use pmx::pauli::{decompose, forbidden_coefficients, is_ocb_allowed, support_of};
use pmx::process::{
    born_probabilities, causal_process, normalization_residuals, project_locally_accessible,
    random_process, rqt_embed_process, validate_process, CorrelationFunctional, Distribution, ProcessMatrix, Theory,
    Tolerances,
};
use pmx::twirl::{average_process, cyclic_cayley, s3_cayley, simulate_qt_in_twirled, GroupRep};

const LGYNI_STAR: f64 = 0.8602061136164;
const QT_BOUND: f64 = 0.8194;

type Verdict = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn ok<T>(r: pmx::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn qubit(name: &str) -> SystemLabel {
    SystemLabel::new(name, 2)
}

fn qubit_legs() -> Vec<SystemLabel> {
    ["A1", "A2", "B1", "B2"].map(qubit).to_vec()
}

fn random_instruments(field: Field, rng: &mut ChaCha8Rng) -> Result<(InstrumentSet, InstrumentSet), String> {
    let ma = ok(random_instrument("A", field, 2, 2, &qubit("A1"), &qubit("A2"), rng))?;
    let mb = ok(random_instrument("B", field, 2, 2, &qubit("B1"), &qubit("B2"), rng))?;
    Ok((ma, mb))
}

fn max_diff(p: &Distribution, q: &Distribution) -> Result<f64, String> {
    ok(p.max_abs_diff(q))
}

/// Largest `|Tr W − 4|`, `max|r^S|`, `−λ_min(W)` and instrument TP residuals
/// compared against the criterion-2 bounds.
fn strict_residuals(cert: &Certificate) -> Result<String, String> {
    let res = ok(normalization_residuals(&cert.process))?;
    let trace = res.trace_residual().abs();
    let r = res.subsets.iter().map(|s| s.max_abs()).fold(0.0, f64::max);
    let lmin = ok(cert.process.op().min_eigenvalue())?;
    let tp = cert.ma.tp_residual().max(cert.mb.tp_residual());
    ensure(trace <= 1e-11, || format!("|Tr W - 4| = {trace:.3e} > 1e-11"))?;
    ensure(r <= 1e-12, || format!("max|r| = {r:.3e} > 1e-12"))?;
    ensure(lmin >= -1e-11, || format!("min eig = {lmin:.3e} < -1e-11"))?;
    ensure(tp <= 1e-9, || format!("instrument TP residual = {tp:.3e} > 1e-9"))?;
    Ok(format!("|Tr W-4| {trace:.1e}, max|r| {r:.1e}, min eig {lmin:.1e}, TP {tp:.1e}"))
}

fn criterion_1() -> Verdict {
    let t = Instant::now();
    let cert = ok(load_reference_certificate())?;
    let report = verify_certificate(&cert, &ToleranceProfile::default());
    let tables = ok(reference_tables())?;
    let elapsed = t.elapsed().as_secs_f64();
    let raw = Distribution::from_bipartite_rows(&tables.distribution_raw);
    let d = max_diff(&cert.distribution, &raw)?;
    ensure(d <= 1e-9, || format!("max |p - p_table| = {d:.3e}"))?;
    ensure((cert.value - LGYNI_STAR).abs() <= 1e-9, || format!("LGYNI = {:.13}", cert.value))?;
    ensure(report.passed(), || format!("failing rows: {:?}", report.failing().map(|r| &r.name).collect::<Vec<_>>()))?;
    ensure(elapsed < 1.0, || format!("runtime {elapsed:.2} s"))?;
    Ok(format!("max |p - table| {d:.1e}, LGYNI {:.13}, {elapsed:.3} s", cert.value))
}

fn criterion_2() -> Verdict {
    let t = Instant::now();
    let cert = ok(load_reference_certificate())?;
    let detail = strict_residuals(&cert)?;
    let elapsed = t.elapsed().as_secs_f64();
    ensure(elapsed < 1.0, || format!("runtime {elapsed:.2} s"))?;
    Ok(format!("{detail}, {elapsed:.3} s"))
}

fn criterion_3() -> Verdict {
    let t = Instant::now();
    let cert = ok(load_reference_certificate())?;
    let top = ok(forbidden_coefficients(cert.process.op()))?;
    let table = ok(reference_tables())?.forbidden_top;
    let elapsed = t.elapsed().as_secs_f64();
    ensure(top.len() >= table.len(), || format!("only {} forbidden coefficients", top.len()))?;
    let mut worst: f64 = 0.0;
    for (k, ((s, v), (label, want))) in top.iter().zip(&table).enumerate() {
        ensure(&s.label() == label, || format!("rank {k}: {} instead of {label}", s.label()))?;
        ensure(v.signum() == want.signum(), || format!("rank {k}: sign of {label}"))?;
        worst = worst.max((v - want).abs());
    }
    ensure(worst <= 1e-8, || format!("max coefficient deviation {worst:.3e}"))?;
    ensure(elapsed < 1.0, || format!("runtime {elapsed:.2} s"))?;
    Ok(format!("12 labels in order, max deviation {worst:.1e}, {elapsed:.3} s"))
}

fn criterion_4() -> Verdict {
    let t = Instant::now();
    let cfg = SeesawConfig::new(Theory::Rqt, CorrelationFunctional::lgyni());
    let r = ok(seesaw(&cfg))?;
    let elapsed = t.elapsed().as_secs_f64();
    let cert = ok(Certificate::assemble(r.w, r.ma, r.mb, FunctionalSpec::Lgyni, Default::default()))?;
    ensure(cert.value > QT_BOUND, || format!("I* = {:.10} does not exceed {QT_BOUND}", cert.value))?;
    let report = verify_certificate(&cert, &ToleranceProfile::default());
    ensure(report.passed(), || format!("failing rows: {:?}", report.failing().map(|r| &r.name).collect::<Vec<_>>()))?;
    let detail = strict_residuals(&cert)?;
    ensure(cert.value >= 0.85, || format!("I* = {:.10} below target 0.85", cert.value))?;
    Ok(format!("I* {:.10} (restart {}), {detail}, {elapsed:.1} s", cert.value, r.restart))
}

fn criterion_5() -> Verdict {
    let cert = ok(load_reference_certificate())?;
    let f = CorrelationFunctional::lgyni();
    let tol = SolverTolerances::default();
    let t = Instant::now();
    let pw = ok(build_opt_w(&cert.ma, &cert.mb, &Theory::Rqt, &f))?;
    let rw = ok(solve(&pw.sdp, Backend::Clarabel, &tol))?;
    let tw = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let pb = ok(build_opt_instrument(Party::B, &cert.process, &cert.ma, &Theory::Rqt, &f, 2, 2))?;
    let rb = ok(solve(&pb.sdp, Backend::Clarabel, &tol))?;
    let tb = t.elapsed().as_secs_f64();
    ensure(rw.value >= LGYNI_STAR - 1e-6, || format!("OptW objective {:.10}", rw.value))?;
    ensure(rb.value >= LGYNI_STAR - 1e-6, || format!("OptB objective {:.10}", rb.value))?;
    ensure(tw < 10.0 && tb < 10.0, || format!("runtimes {tw:.2} s, {tb:.2} s"))?;
    Ok(format!("OptW {:.10} ({tw:.2} s), OptB {:.10} ({tb:.2} s)", rw.value, rb.value))
}

/// `Re ⊗ I + Im ⊗ J` on the `2i+u` index.
fn realify_oracle(m: &Matrix) -> Matrix {
    let one = Matrix::identity(2);
    let j = Matrix::from_real(2, 2, &[0.0, -1.0, 1.0, 0.0]);
    let re = m.map(|z| C64::new(z.re, 0.0));
    let im = m.map(|z| C64::new(z.im, 0.0));
    re.kron(&one).add(&im.kron(&j))
}

fn gaussian_complex(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
}

fn criterion_6() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut hom: f64 = 0.0;
    let mut round: f64 = 0.0;
    let trials = 120;
    for t in 0..trials {
        let (di, dout) = (1 + t % 3, 1 + (t / 3) % 3);
        let (a, b) = (gaussian_complex(3, 3, &mut rng), gaussian_complex(3, 3, &mut rng));
        let ra = realify_matrix(&a);
        hom = hom
            .max(ra.max_abs_diff(&realify_oracle(&a)))
            .max(realify_matrix(&a.add(&b)).max_abs_diff(&ra.add(&realify_matrix(&b))))
            .max(realify_matrix(&a.matmul(&b)).max_abs_diff(&ra.matmul(&realify_matrix(&b))))
            .max(realify_matrix(&a.adjoint()).max_abs_diff(&ra.transpose()));

        let inst = ok(random_instrument("A", Field::Complex, 1, 2, &SystemLabel::new("X1", di), &SystemLabel::new("X2", dout), &mut rng))?;
        let cptp = ok(inst.element(0, 0).add(inst.element(0, 1)))?;
        for m in [inst.element(0, 0).clone(), cptp.clone()] {
            let enc = ok(encode_choi(&m))?;
            let dec = ok(decode_choi(&enc.choi))?;
            round = round.max(dec.matrix().max_abs_diff(m.matrix()));
            let (tp, tp_enc) = (m.tp_residual(), enc.choi.tp_residual());
            let (tni, tni_enc) = (m.trace_nonincreasing_margin(), enc.choi.trace_nonincreasing_margin());
            ensure((tp < 1e-10) == (tp_enc < 1e-10), || format!("trial {t}: TP {tp:.2e} vs encoded {tp_enc:.2e}"))?;
            ensure(tni >= -1e-10 && tni_enc >= -1e-10, || format!("trial {t}: trace-nonincreasing margin {tni_enc:.2e}"))?;
        }
        let big = ChoiOperator::new(cptp.op().scale(1.5)).map_err(|e| e.to_string())?;
        let big_enc = ok(encode_choi(&big))?.choi;
        ensure(big_enc.trace_nonincreasing_margin() < -1e-3, || format!("trial {t}: scaled map encodes as trace-nonincreasing"))?;
        let dec_big = ok(decode_choi(&big_enc))?;
        ensure(dec_big.trace_nonincreasing_margin() < -1e-3, || format!("trial {t}: scaled map decodes as trace-nonincreasing"))?;
    }
    ensure(hom <= 1e-12, || format!("homomorphism deviation {hom:.3e}"))?;
    ensure(round <= 1e-12, || format!("decode(encode) deviation {round:.3e}"))?;
    Ok(format!("{trials} maps, homomorphism {hom:.1e}, decode(encode) {round:.1e}"))
}

fn criterion_7() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    let trials = 24;
    for t in 0..trials {
        let w = ok(random_process(Theory::Qt, &qubit_legs(), &mut rng))?;
        let (ma, mb) = random_instruments(Field::Complex, &mut rng)?;
        let p = ok(born_probabilities(&w, &ma, &mb))?;
        let rw = ok(rqt_embed_process(&w))?;
        let report = ok(validate_process(&rw, &Tolerances::default()))?;
        ensure(report.passed(), || format!("trial {t}: embedded process invalid: {}", report.summary()))?;
        let q = ok(born_probabilities(&rw, &ok(encode_instrument(&ma))?, &ok(encode_instrument(&mb))?))?;
        worst = worst.max(max_diff(&p, &q)?);
    }
    ensure(worst <= 1e-10, || format!("max probability deviation {worst:.3e}"))?;
    Ok(format!("{trials} experiments, max deviation {worst:.1e}"))
}

fn criterion_8() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let trials = 20;
    let mut lines = Vec::new();
    let groups: [(&str, Vec<Vec<usize>>, bool); 3] =
        [("Z2", cyclic_cayley(2), true), ("Z3", cyclic_cayley(3), true), ("S3", s3_cayley(), false)];
    for (name, cayley, bipartite) in groups {
        let group = ok(GroupRep::new(cayley, Default::default()))?;
        let legs: Vec<SystemLabel> = if bipartite { qubit_legs() } else { vec![qubit("A1"), qubit("A2")] };
        let (mut dev, mut inv): (f64, f64) = (0.0, 0.0);
        for t in 0..trials {
            let w = ok(random_process(Theory::Qt, &legs, &mut rng))?;
            let ma = ok(random_instrument("A", Field::Complex, 2, 2, &legs[0], &legs[1], &mut rng))?;
            let sim = if bipartite {
                let mb = ok(random_instrument("B", Field::Complex, 2, 2, &legs[2], &legs[3], &mut rng))?;
                ok(simulate_qt_in_twirled(&w, &[&ma, &mb], &group))?
            } else {
                ok(simulate_qt_in_twirled(&w, &[&ma], &group))?
            };
            ensure(sim.validation.passed(), || format!("{name} trial {t}: simulating process invalid: {}", sim.validation.summary()))?;
            dev = dev.max(sim.max_deviation);
            inv = inv.max(sim.invariance_deviation);
            if t == 0 {
                let Theory::Twirled(rep) = sim.w_hat.theory() else { return Err(format!("{name}: simulating process is not twirled")) };
                let avg = ok(average_process(&sim.w_hat, rep))?;
                let report = ok(validate_process(&avg, &Tolerances::default()))?;
                ensure(report.passed(), || format!("{name}: averaged simulating process invalid: {}", report.summary()))?;
            }
        }
        ensure(dev <= 1e-9, || format!("{name}: probability deviation {dev:.3e}"))?;
        ensure(inv <= 1e-10, || format!("{name}: invariance deviation {inv:.3e}"))?;
        lines.push(format!("{name} dev {dev:.1e} inv {inv:.1e}"));
    }
    let q = ["A1", "A2", "B1", "B2"];
    for (name, rep) in [("Z2", GroupRep::z2_parity(&q)), ("Z3", GroupRep::z3_phase(&q)), ("S3", GroupRep::s3_standard(&q))] {
        for t in 0..trials {
            let w = ok(random_process(Theory::Twirled(Box::new(rep.clone())), &qubit_legs(), &mut rng))?;
            let avg = ok(average_process(&w, &rep))?;
            let report = ok(validate_process(&avg, &Tolerances::default()))?;
            ensure(report.passed(), || format!("{name} twirled process {t}: average invalid: {}", report.summary()))?;
        }
    }
    Ok(format!("{trials} experiments per group; {}; averages of {trials} twirled processes per group valid", lines.join(", ")))
}

fn random_functional(rng: &mut ChaCha8Rng) -> CorrelationFunctional {
    let mut f = CorrelationFunctional::lgyni();
    for c in f.coefficients.iter_mut() {
        *c = rng.sample::<f64, _>(StandardNormal);
    }
    f.offset = 0.0;
    f
}

fn criterion_9() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let tol = SolverTolerances::default();
    let (mut forbidden, mut born): (f64, f64) = (0.0, 0.0);
    let trials = 50;
    for t in 0..trials {
        let (ma, mb) = random_instruments(Field::Real, &mut rng)?;
        let p = ok(build_opt_w(&ma, &mb, &Theory::Rqt, &random_functional(&mut rng)))?;
        let w = ok(p.extract(&ok(solve(&p.sdp, Backend::Clarabel, &tol))?))?;
        let report = ok(validate_process(&w, &Tolerances::default()))?;
        ensure(report.passed(), || format!("trial {t}: OptW process invalid: {}", report.summary()))?;
        let (la, _) = ok(project_locally_accessible(&w))?;
        for (s, c) in ok(decompose(&la))?.iter() {
            if !ok(is_ocb_allowed(&support_of(&s)))? {
                forbidden = forbidden.max(c.norm());
            }
        }
        let wla = ok(ProcessMatrix::new(la, Theory::Rqt))?;
        for _ in 0..3 {
            let (ta, tb) = random_instruments(Field::Real, &mut rng)?;
            born = born.max(max_diff(&ok(born_probabilities(&w, &ta, &tb))?, &ok(born_probabilities(&wla, &ta, &tb))?)?);
        }
    }
    ensure(forbidden <= 1e-10, || format!("forbidden coefficient of W_la {forbidden:.3e}"))?;
    ensure(born <= 1e-10, || format!("Born deviation between W and W_la {born:.3e}"))?;
    Ok(format!("{trials} processes, forbidden {forbidden:.1e}, Born deviation {born:.1e}"))
}

fn random_state(sys: SystemLabel, rng: &mut ChaCha8Rng) -> Result<Operator, String> {
    let g = gaussian_complex(sys.dim, sys.dim, rng);
    let rho = g.matmul(&g.adjoint());
    let tr = rho.trace().re;
    ok(Operator::from_matrix(vec![sys], rho.scale_re(1.0 / tr)))
}

/// `ρ_{first} ⊗ C_{second→third} ⊗ I_{fourth}` reordered to `A1, A2, B1, B2`.
fn ordered_process(a_first: bool, rng: &mut ChaCha8Rng) -> Result<ProcessMatrix, String> {
    let [p1, p2, q1, q2] = if a_first { ["A1", "A2", "B1", "B2"] } else { ["B1", "B2", "A1", "A2"] };
    let rho = random_state(qubit(p1), rng)?;
    let chan = ok(random_instrument("C", Field::Complex, 1, 1, &qubit(p2), &qubit(q1), rng))?;
    let w = ok(causal_process(&rho, chan.element(0, 0), qubit(q2), Theory::Qt))?;
    let op = ok(w.op().permute(&["A1", "A2", "B1", "B2"]))?;
    ok(ProcessMatrix::new(op, Theory::Qt))
}

fn criterion_10() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let f = CorrelationFunctional::lgyni();
    let tol = SolverTolerances::default();
    let mut best = f64::NEG_INFINITY;
    let trials = 20;
    for t in 0..trials {
        let w = ordered_process(t % 2 == 0, &mut rng)?;
        let report = ok(validate_process(&w, &Tolerances::default()))?;
        ensure(report.passed(), || format!("trial {t}: causal process invalid: {}", report.summary()))?;
        let (ma, mb) = random_instruments(Field::Complex, &mut rng)?;
        let (_, _, v) = ok(optimize_instruments(&w, &ma, &mb, &Theory::Qt, &f, 5, Backend::Clarabel, &tol))?;
        best = best.max(v);
        ensure(v <= 0.75 + 1e-6, || format!("trial {t}: LGYNI {v:.10} exceeds the causal bound"))?;
    }
    Ok(format!("{trials} causal processes, largest LGYNI {best:.10}"))
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 10] = [
        ("certificate replay", criterion_1),
        ("residual replay", criterion_2),
        ("Pauli diagnostic", criterion_3),
        ("separation reproduction", criterion_4),
        ("warm-start optimality", criterion_5),
        ("realification properties", criterion_6),
        ("RQT embedding properties", criterion_7),
        ("twirled simulation properties", criterion_8),
        ("invisibility properties", criterion_9),
        ("causal bound properties", criterion_10),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let verdict = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|_| Err("panicked".into()));
        let secs = t.elapsed().as_secs_f64();
        match verdict {
            Ok(detail) => println!("PASS criterion {} ({name}): {detail} [{secs:.2} s]", k + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {} ({name}): {why} [{secs:.2} s]", k + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all 10 acceptance criteria passed");
}
