//! SDP instances of the see-saw: the process step (OptW) and the instrument
//! steps (OptA, OptB).
//!
//! Real theories use real symmetric blocks directly. Complex-Hermitian
//! variables `H` use the embedding `R(H) = [[Re H, −Im H], [Im H, Re H]]`;
//! `Tr(A H) = ⟨R(A)/2, X⟩` and `H = (X11 + X22)/2 + i(X21 − X12)/2`.

use crate::channels::{ChoiOperator, InstrumentSet};
use crate::error::{shape, Error, Result};
use crate::operator_algebra::{Field, Matrix, Operator, SystemLabel, C64};
use crate::process::{contract_leading, tangent_basis, CorrelationFunctional, ProcessMatrix, Theory};

use super::sdp::{identity, Equality, SdpProblem, SolverResult};

/// Largest imaginary part accepted in data fed to a real-theory problem.
const REAL_INPUT_TOL: f64 = 1e-10;

fn variable_field(theory: &Theory) -> Result<Field> {
    match theory {
        Theory::Qt => Ok(Field::Complex),
        Theory::Rqt => Ok(Field::Real),
        Theory::Twirled(_) => Err(Error::Unsupported("see-saw problems for twirled theories".into())),
    }
}

fn block_size(field: Field, d: usize) -> usize {
    match field {
        Field::Real => d,
        Field::Complex => 2 * d,
    }
}

/// Coefficient `A` of `Tr(A H)` as a dense symmetric block.
fn coefficient(field: Field, a: &Matrix) -> Vec<f64> {
    let n = a.rows();
    match field {
        Field::Real => (0..n * n).map(|i| 0.5 * (a.data()[i].re + a.data()[(i % n) * n + i / n].re)).collect(),
        Field::Complex => {
            let m = 2 * n;
            let mut out = vec![0.0; m * m];
            for i in 0..n {
                for j in 0..n {
                    let z = 0.5 * (a.get(i, j) + a.get(j, i).conj());
                    out[i * m + j] = 0.5 * z.re;
                    out[(n + i) * m + n + j] = 0.5 * z.re;
                    out[i * m + n + j] = -0.5 * z.im;
                    out[(n + i) * m + j] = 0.5 * z.im;
                }
            }
            out
        }
    }
}

/// Operator represented by a solved block.
fn recover(field: Field, x: &[f64], d: usize) -> Matrix {
    match field {
        Field::Real => Matrix::from_real(d, d, x),
        Field::Complex => {
            let m = 2 * d;
            Matrix::from_fn(d, d, |i, j| {
                C64::new(
                    0.5 * (x[i * m + j] + x[(d + i) * m + d + j]),
                    0.5 * (x[(d + i) * m + j] - x[i * m + d + j]),
                )
            })
        }
    }
}

fn check_real(field: Field, what: &str, imag: f64) -> Result<()> {
    if field == Field::Real && imag > REAL_INPUT_TOL {
        return shape(format!("{what} has imaginary parts up to {imag:.3e} in a real theory"));
    }
    Ok(())
}

fn check_functional(f: &CorrelationFunctional, outcomes: [usize; 2], settings: [usize; 2]) -> Result<()> {
    if f.outcomes != outcomes || f.settings != settings {
        return shape(format!(
            "functional shape {:?}|{:?} does not match instruments {outcomes:?}|{settings:?}",
            f.outcomes, f.settings
        ));
    }
    Ok(())
}

/// The process step: maximize the functional over valid processes for fixed
/// instruments.
#[derive(Clone, Debug)]
pub struct OptWProblem {
    pub sdp: SdpProblem,
    legs: Vec<SystemLabel>,
    field: Field,
    theory: Theory,
}

impl OptWProblem {
    pub fn extract(&self, r: &SolverResult) -> Result<ProcessMatrix> {
        let d: usize = self.legs.iter().map(|l| l.dim).product();
        let mat = recover(self.field, &r.blocks[0], d);
        ProcessMatrix::new(Operator::new(self.legs.clone(), self.field, mat)?, self.theory.clone())
    }
}

pub fn build_opt_w(
    ma: &InstrumentSet,
    mb: &InstrumentSet,
    theory: &Theory,
    functional: &CorrelationFunctional,
) -> Result<OptWProblem> {
    let field = variable_field(theory)?;
    check_real(field, "instrument A", ma.max_imag())?;
    check_real(field, "instrument B", mb.max_imag())?;
    check_functional(functional, [ma.outcomes(), mb.outcomes()], [ma.settings(), mb.settings()])?;
    let legs = vec![ma.input().clone(), ma.output().clone(), mb.input().clone(), mb.output().clone()];
    let d: usize = legs.iter().map(|l| l.dim).product();
    let n = block_size(field, d);

    let mut c = Matrix::zeros(d, d);
    for (x, a, m_a) in ma.iter() {
        for (y, b, m_b) in mb.iter() {
            let alpha = functional.coefficient(&[a, b], &[x, y]);
            if alpha != 0.0 {
                c.axpy(C64::new(alpha, 0.0), &m_a.matrix().kron(m_b.matrix()));
            }
        }
    }

    let local = |i: &SystemLabel, o: &SystemLabel| -> Result<Vec<Matrix>> {
        let basis = tangent_basis(theory, i, o)?;
        Ok(std::iter::once(Matrix::identity(i.dim * o.dim))
            .chain(basis.elements.iter().map(|e| e.matrix().clone()))
            .collect())
    };
    let la = local(&legs[0], &legs[1])?;
    let lb = local(&legs[2], &legs[3])?;
    let trace_target = (legs[1].dim * legs[3].dim) as f64;
    let mut equalities = Vec::with_capacity(la.len() * lb.len());
    for (i, ga) in la.iter().enumerate() {
        for (j, gb) in lb.iter().enumerate() {
            let rhs = if i == 0 && j == 0 { trace_target } else { 0.0 };
            equalities.push(Equality { terms: vec![(0, coefficient(field, &ga.kron(gb)))], rhs });
        }
    }
    let din = (legs[0].dim * legs[2].dim) as f64;
    let sdp = SdpProblem {
        sizes: vec![n],
        objective: vec![coefficient(field, &c)],
        constant: functional.offset,
        equalities,
        maximize: true,
        interior_point: Some(vec![identity(n, 1.0 / din)]),
    };
    Ok(OptWProblem { sdp, legs, field, theory: theory.clone() })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Party {
    A,
    B,
}

/// An instrument step: maximize the functional over one party's instruments
/// for a fixed process and fixed instruments of the other party.
#[derive(Clone, Debug)]
pub struct InstrumentProblem {
    pub sdp: SdpProblem,
    party: String,
    settings: usize,
    outcomes: usize,
    input: SystemLabel,
    output: SystemLabel,
    field: Field,
}

impl InstrumentProblem {
    pub fn extract(&self, r: &SolverResult) -> Result<InstrumentSet> {
        let d = self.input.dim * self.output.dim;
        let elements = (0..self.settings)
            .map(|x| {
                (0..self.outcomes)
                    .map(|a| {
                        let m = recover(self.field, &r.blocks[x * self.outcomes + a], d);
                        let op = Operator::new(vec![self.input.clone(), self.output.clone()], self.field, m)?;
                        ChoiOperator::new(op)
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        InstrumentSet::new(self.party.clone(), elements)
    }
}

pub fn build_opt_instrument(
    party: Party,
    w: &ProcessMatrix,
    other: &InstrumentSet,
    theory: &Theory,
    functional: &CorrelationFunctional,
    settings: usize,
    outcomes: usize,
) -> Result<InstrumentProblem> {
    let field = variable_field(theory)?;
    if w.parties() != 2 {
        return shape(format!("instrument step needs a bipartite process, got {} parties", w.parties()));
    }
    check_real(field, "process", w.op().matrix().max_imag())?;
    check_real(field, "fixed instrument", other.max_imag())?;
    let (var_k, fixed_k) = match party {
        Party::A => (0, 1),
        Party::B => (1, 0),
    };
    let (fi, fo) = w.party_legs(fixed_k);
    if other.input().dim != fi.dim || other.output().dim != fo.dim {
        return shape("fixed instrument does not match the process legs");
    }
    let (shape_o, shape_s) = match party {
        Party::A => ([outcomes, other.outcomes()], [settings, other.settings()]),
        Party::B => ([other.outcomes(), outcomes], [other.settings(), settings]),
    };
    check_functional(functional, shape_o, shape_s)?;
    let (input, output) = {
        let (i, o) = w.party_legs(var_k);
        (i.clone(), o.clone())
    };
    let d = input.dim * output.dim;
    let n = block_size(field, d);

    // Fixed party first so that its contraction is a leading partial trace.
    let names: Vec<String> = w.op().names().iter().map(|s| s.to_string()).collect();
    let order: Vec<&str> = if fixed_k == 0 {
        names.iter().map(String::as_str).collect()
    } else {
        vec![&names[2], &names[3], &names[0], &names[1]]
    };
    let wf = w.op().permute(&order)?;
    let pf = fi.dim * fo.dim;
    let contracted: Vec<Vec<Matrix>> = (0..other.settings())
        .map(|x| (0..other.outcomes()).map(|a| contract_leading(wf.matrix(), pf, other.element(x, a).matrix())).collect())
        .collect();
    let mut objective = Vec::with_capacity(settings * outcomes);
    for x in 0..settings {
        for a in 0..outcomes {
            let mut omega = Matrix::zeros(d, d);
            for (y, row) in contracted.iter().enumerate() {
                for (b, om) in row.iter().enumerate() {
                    let alpha = match party {
                        Party::A => functional.coefficient(&[a, b], &[x, y]),
                        Party::B => functional.coefficient(&[b, a], &[y, x]),
                    };
                    if alpha != 0.0 {
                        omega.axpy(C64::new(alpha, 0.0), om);
                    }
                }
            }
            objective.push(coefficient(field, &omega));
        }
    }

    // Tr_out Σ_a M_{a|x} = I: real parts of the upper triangle, and for
    // complex variables the imaginary parts above the diagonal.
    let (di, dout) = (input.dim, output.dim);
    let mut equalities = Vec::new();
    for x in 0..settings {
        for i in 0..di {
            for j in i..di {
                let mut parts = vec![(C64::new(0.5, 0.0), C64::new(0.5, 0.0), if i == j { 1.0 } else { 0.0 })];
                if field == Field::Complex && i < j {
                    parts.push((C64::new(0.0, 0.5), C64::new(0.0, -0.5), 0.0));
                }
                for (cij, cji, rhs) in parts {
                    let mut a = Matrix::zeros(d, d);
                    for o in 0..dout {
                        let (r, s) = (i * dout + o, j * dout + o);
                        if r == s {
                            a.set(r, s, C64::new(1.0, 0.0));
                        } else {
                            a.set(r, s, a.get(r, s) + cij);
                            a.set(s, r, a.get(s, r) + cji);
                        }
                    }
                    let coeff = coefficient(field, &a);
                    let terms = (0..outcomes).map(|o| (x * outcomes + o, coeff.clone())).collect();
                    equalities.push(Equality { terms, rhs });
                }
            }
        }
    }
    let x0 = identity(n, 1.0 / (dout * outcomes) as f64);
    let sdp = SdpProblem {
        sizes: vec![n; settings * outcomes],
        objective,
        constant: functional.offset,
        equalities,
        maximize: true,
        interior_point: Some(vec![x0; settings * outcomes]),
    };
    let party_name = match party {
        Party::A => "A",
        Party::B => "B",
    };
    Ok(InstrumentProblem { sdp, party: party_name.into(), settings, outcomes, input, output, field })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimize::sdp::{solve, Backend, SolverTolerances};
    use crate::process::{born_probabilities, Tolerances};
    use crate::{channels::random_instrument, process::validate_process};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn q(n: &str) -> SystemLabel {
        SystemLabel::new(n, 2)
    }

    #[test]
    fn embedding_round_trip_and_trace_identity() {
        let h = Matrix::from_vec(
            2,
            2,
            vec![C64::new(1.0, 0.0), C64::new(0.5, -0.25), C64::new(0.5, 0.25), C64::new(2.0, 0.0)],
        );
        let a = Matrix::from_vec(
            2,
            2,
            vec![C64::new(0.3, 0.0), C64::new(-1.0, 0.7), C64::new(-1.0, -0.7), C64::new(0.1, 0.0)],
        );
        let xh = coefficient(Field::Complex, &h).iter().map(|v| 2.0 * v).collect::<Vec<_>>();
        assert!(recover(Field::Complex, &xh, 2).max_abs_diff(&h) < 1e-15);
        let lhs = a.matmul(&h).trace().re;
        let rhs: f64 = coefficient(Field::Complex, &a).iter().zip(&xh).map(|(p, q)| p * q).sum();
        assert!((lhs - rhs).abs() < 1e-14);
    }

    #[test]
    fn constraint_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = CorrelationFunctional::lgyni();
        for (theory, field, count) in [(Theory::Rqt, Field::Real, 64), (Theory::Qt, Field::Complex, 169)] {
            let ma = random_instrument("A", field, 2, 2, &q("A1"), &q("A2"), &mut rng).unwrap();
            let mb = random_instrument("B", field, 2, 2, &q("B1"), &q("B2"), &mut rng).unwrap();
            let p = build_opt_w(&ma, &mb, &theory, &f).unwrap();
            assert_eq!(p.sdp.num_equalities(), count);
            let w = ProcessMatrix::new(Operator::identity(vec![q("A1"), q("A2"), q("B1"), q("B2")]).unwrap().scale(0.25), theory.clone()).unwrap();
            let pb = build_opt_instrument(Party::B, &w, &ma, &theory, &f, 2, 2).unwrap();
            assert_eq!(pb.sdp.num_equalities(), if field == Field::Real { 6 } else { 8 });
        }
    }

    #[test]
    fn opt_w_value_matches_born_rule_on_both_backends() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f = CorrelationFunctional::lgyni();
        for (theory, field) in [(Theory::Rqt, Field::Real), (Theory::Qt, Field::Complex)] {
            let ma = random_instrument("A", field, 2, 2, &q("A1"), &q("A2"), &mut rng).unwrap();
            let mb = random_instrument("B", field, 2, 2, &q("B1"), &q("B2"), &mut rng).unwrap();
            let prob = build_opt_w(&ma, &mb, &theory, &f).unwrap();
            let mut values = Vec::new();
            for backend in [Backend::Clarabel, Backend::Ipm] {
                let r = solve(&prob.sdp, backend, &SolverTolerances::default()).unwrap();
                let w = prob.extract(&r).unwrap();
                let rep = validate_process(&w, &Tolerances::default()).unwrap();
                assert!(rep.passed(), "{backend:?} {}", rep.summary());
                let v = f.evaluate(&born_probabilities(&w, &ma, &mb).unwrap()).unwrap();
                assert!((v - r.value).abs() < 1e-9);
                values.push(v);
            }
            assert!((values[0] - values[1]).abs() < 1e-7, "{values:?}");
        }
    }

    #[test]
    fn instrument_step_returns_valid_instruments() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let f = CorrelationFunctional::lgyni();
        for (theory, field) in [(Theory::Rqt, Field::Real), (Theory::Qt, Field::Complex)] {
            let ma = random_instrument("A", field, 2, 2, &q("A1"), &q("A2"), &mut rng).unwrap();
            let mb = random_instrument("B", field, 2, 2, &q("B1"), &q("B2"), &mut rng).unwrap();
            let pw = build_opt_w(&ma, &mb, &theory, &f).unwrap();
            let w = pw.extract(&solve(&pw.sdp, Backend::Clarabel, &SolverTolerances::default()).unwrap()).unwrap();
            for party in [Party::A, Party::B] {
                let other = if party == Party::A { &mb } else { &ma };
                let p = build_opt_instrument(party, &w, other, &theory, &f, 2, 2).unwrap();
                let r = solve(&p.sdp, Backend::Clarabel, &SolverTolerances::default()).unwrap();
                let inst = p.extract(&r).unwrap();
                assert!(inst.tp_residual() < 1e-12);
                assert!(inst.min_eigenvalue() >= -1e-12);
                let dist = if party == Party::A {
                    born_probabilities(&w, &inst, &mb).unwrap()
                } else {
                    born_probabilities(&w, &ma, &inst).unwrap()
                };
                assert!((f.evaluate(&dist).unwrap() - r.value).abs() < 1e-9);
            }
        }
    }
}
