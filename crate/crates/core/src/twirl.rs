//! Finite-group actions: representations, covariance, local twirling,
//! process averaging and the regular-representation reference frame.
//!
//! Enlarged legs keep their names; the leg `X` of dimension `d` becomes a
//! leg of dimension `d·|G|` with index `x·|G| + g`, i.e. the order is
//! `X1, R1 | X2, R2` within each party.

use std::collections::BTreeMap;

use serde_json::{json, Map, Value};

use crate::channels::{ChoiOperator, InstrumentSet, CP_TOL};
use crate::error::{shape, Error, Result};
use crate::operator_algebra::{Matrix, Operator, SystemLabel, C64, ONE};
use crate::process::{self, born_probabilities_n, Distribution, ProcessMatrix, Theory, Tolerances, ValidationReport};

/// Tolerance for the representation property checked at construction.
pub const REP_TOL: f64 = 1e-10;

/// Finite group given by its Cayley table (identity 0) together with
/// unitaries `U_g` for each named system.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupRep {
    cayley: Vec<Vec<usize>>,
    unitaries: BTreeMap<String, Vec<Matrix>>,
}

/// Checks the group axioms of a Cayley table with identity 0.
pub fn check_cayley(cayley: &[Vec<usize>]) -> Result<()> {
    let n = cayley.len();
    let bad = |m: String| Err(Error::InvalidGroup(m));
    if n == 0 {
        return bad("empty Cayley table".into());
    }
    for (g, row) in cayley.iter().enumerate() {
        if row.len() != n {
            return bad(format!("row {g} has {} entries, expected {n}", row.len()));
        }
        if row.iter().any(|&h| h >= n) {
            return bad(format!("row {g} has an entry outside 0..{n}"));
        }
        if cayley[0][g] != g || row[0] != g {
            return bad("element 0 is not the identity".into());
        }
        if !row.contains(&0) {
            return bad(format!("element {g} has no inverse"));
        }
    }
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                if cayley[cayley[a][b]][c] != cayley[a][cayley[b][c]] {
                    return bad(format!("associativity fails at ({a},{b},{c})"));
                }
            }
        }
    }
    Ok(())
}

/// Cyclic group `Z_n`.
pub fn cyclic_cayley(n: usize) -> Vec<Vec<usize>> {
    (0..n).map(|a| (0..n).map(|b| (a + b) % n).collect()).collect()
}

/// The six permutations of three symbols, identity first.
const S3_PERMS: [[usize; 3]; 6] = [[0, 1, 2], [1, 2, 0], [2, 0, 1], [1, 0, 2], [0, 2, 1], [2, 1, 0]];

/// Symmetric group `S_3`, with `g·h` acting as `g ∘ h`.
pub fn s3_cayley() -> Vec<Vec<usize>> {
    let idx = |p: [usize; 3]| S3_PERMS.iter().position(|&q| q == p).expect("closed");
    S3_PERMS
        .iter()
        .map(|g| S3_PERMS.iter().map(|h| idx([g[h[0]], g[h[1]], g[h[2]]])).collect())
        .collect()
}

/// Left-regular representation `L_h|g⟩ = |hg⟩`.
pub fn regular_rep(cayley: &[Vec<usize>]) -> Result<Vec<Matrix>> {
    check_cayley(cayley)?;
    let n = cayley.len();
    Ok((0..n)
        .map(|h| {
            let mut l = Matrix::zeros(n, n);
            for g in 0..n {
                l.set(cayley[h][g], g, ONE);
            }
            l
        })
        .collect())
}

impl GroupRep {
    /// Validates the table, unitarity, `U_0 = I` and `U_g U_h = U_{gh}`.
    pub fn new(cayley: Vec<Vec<usize>>, unitaries: BTreeMap<String, Vec<Matrix>>) -> Result<Self> {
        check_cayley(&cayley)?;
        let n = cayley.len();
        for (name, us) in &unitaries {
            if us.len() != n {
                return Err(Error::InvalidGroup(format!("system {name} has {} unitaries for order {n}", us.len())));
            }
            let d = us[0].rows();
            for (g, u) in us.iter().enumerate() {
                if u.rows() != d || u.cols() != d {
                    return Err(Error::InvalidGroup(format!("U_{g} on {name} is not {d}×{d}")));
                }
                if u.matmul(&u.adjoint()).max_abs_diff(&Matrix::identity(d)) > REP_TOL {
                    return Err(Error::InvalidGroup(format!("U_{g} on {name} is not unitary")));
                }
            }
            if us[0].max_abs_diff(&Matrix::identity(d)) > REP_TOL {
                return Err(Error::InvalidGroup(format!("U_0 on {name} is not the identity")));
            }
            for g in 0..n {
                for h in 0..n {
                    if us[g].matmul(&us[h]).max_abs_diff(&us[cayley[g][h]]) > REP_TOL {
                        return Err(Error::InvalidGroup(format!("U_{g} U_{h} ≠ U_(gh) on {name}")));
                    }
                }
            }
        }
        Ok(GroupRep { cayley, unitaries })
    }

    /// The same unitaries on every listed system.
    pub fn uniform(cayley: Vec<Vec<usize>>, unitaries: Vec<Matrix>, systems: &[&str]) -> Result<Self> {
        let map = systems.iter().map(|s| (s.to_string(), unitaries.clone())).collect();
        Self::new(cayley, map)
    }

    /// `Z_2` acting by `σ_z` on each qubit system.
    pub fn z2_parity(systems: &[&str]) -> Self {
        let z = Matrix::diag(&[ONE, -ONE]);
        Self::uniform(cyclic_cayley(2), vec![Matrix::identity(2), z], systems).expect("valid parity rep")
    }

    /// `Z_3` acting by `diag(1, ω^g)` with `ω = e^{2πi/3}` on each qubit system.
    pub fn z3_phase(systems: &[&str]) -> Self {
        let us = (0..3)
            .map(|g| Matrix::diag(&[ONE, C64::from_polar(1.0, 2.0 * std::f64::consts::PI * g as f64 / 3.0)]))
            .collect();
        Self::uniform(cyclic_cayley(3), us, systems).expect("valid Z3 rep")
    }

    /// `S_3` acting by its two-dimensional irreducible representation on each
    /// qubit system (the permutation action restricted to the complement of
    /// `(1,1,1)`), which is real orthogonal.
    pub fn s3_standard(systems: &[&str]) -> Self {
        let b = Matrix::from_real(
            3,
            2,
            &[
                1.0 / 2f64.sqrt(),
                1.0 / 6f64.sqrt(),
                -1.0 / 2f64.sqrt(),
                1.0 / 6f64.sqrt(),
                0.0,
                -2.0 / 6f64.sqrt(),
            ],
        );
        let us = S3_PERMS
            .iter()
            .map(|p| {
                let mut perm = Matrix::zeros(3, 3);
                for (i, &pi) in p.iter().enumerate() {
                    perm.set(pi, i, ONE);
                }
                b.transpose().matmul(&perm).matmul(&b)
            })
            .collect();
        Self::uniform(s3_cayley(), us, systems).expect("valid S3 rep")
    }

    /// Regular representation acting on the reference part of every enlarged
    /// leg: `Û_h = I_d ⊗ L_h` on a leg of dimension `d·|G|`.
    pub fn enlarged(cayley: &[Vec<usize>], legs: &[SystemLabel]) -> Result<Self> {
        let l = regular_rep(cayley)?;
        let n = cayley.len();
        let mut map = BTreeMap::new();
        for leg in legs {
            if leg.dim % n != 0 {
                return shape(format!("leg {} of dimension {} is not enlarged by |G| = {n}", leg.name, leg.dim));
            }
            let id = Matrix::identity(leg.dim / n);
            map.insert(leg.name.clone(), l.iter().map(|lh| id.kron(lh)).collect());
        }
        Self::new(cayley.to_vec(), map)
    }

    pub fn order(&self) -> usize {
        self.cayley.len()
    }

    pub fn cayley(&self) -> &[Vec<usize>] {
        &self.cayley
    }

    pub fn systems(&self) -> impl Iterator<Item = &str> {
        self.unitaries.keys().map(String::as_str)
    }

    pub fn unitary(&self, system: &str, g: usize) -> Result<&Matrix> {
        self.unitaries
            .get(system)
            .map(|us| &us[g])
            .ok_or_else(|| Error::Shape(format!("group has no representation on system {system}")))
    }

    fn check_leg(&self, leg: &SystemLabel) -> Result<()> {
        let d = self.unitary(&leg.name, 0)?.rows();
        if d != leg.dim {
            return shape(format!("representation on {} has dimension {d}, leg has {}", leg.name, leg.dim));
        }
        Ok(())
    }

    /// `V_g = U_g ⊗ Ū_g` applied by conjugation to the (input, output) legs of `op`.
    fn act(&self, op: &Operator, input: &str, output: &str, g: usize) -> Result<Operator> {
        op.conjugate_local(input, self.unitary(input, g)?, None)?
            .conjugate_local(output, &self.unitary(output, g)?.conj(), None)
    }

    /// Group average of `V_g · V_g†` on one (input, output) leg pair.
    pub fn twirl_legs(&self, op: &Operator, input: &str, output: &str) -> Result<Operator> {
        let mut acc = self.act(op, input, output, 0)?;
        for g in 1..self.order() {
            acc = acc.add(&self.act(op, input, output, g)?)?;
        }
        Ok(acc.scale(1.0 / self.order() as f64))
    }

    /// Conjugation of a multi-party operator by `⊗_k V_g^{(k)}` with the same
    /// `g` on every party; legs are taken pairwise as (input, output).
    pub fn act_globally(&self, op: &Operator, g: usize) -> Result<Operator> {
        let names: Vec<String> = op.names().iter().map(|s| s.to_string()).collect();
        let mut out = op.clone();
        for pair in names.chunks(2) {
            out = self.act(&out, &pair[0], &pair[1], g)?;
        }
        Ok(out)
    }

    /// `max_g ‖V_g W V_g† − W‖_max` with the same `g` on every party.
    pub fn invariance_deviation(&self, op: &Operator) -> Result<f64> {
        let mut dev: f64 = 0.0;
        for g in 1..self.order() {
            dev = dev.max(self.act_globally(op, g)?.max_abs_diff(op)?);
        }
        Ok(dev)
    }

    /// Group JSON with one unitary list per system.
    pub fn to_json(&self) -> Value {
        let mut reps = Map::new();
        for (name, us) in &self.unitaries {
            let list = us
                .iter()
                .map(|u| Operator::on(name, u.clone()).expect("square unitary").to_json())
                .collect();
            reps.insert(name.clone(), Value::Array(list));
        }
        json!({ "order": self.order(), "cayley": self.cayley, "reps": reps })
    }

    /// Parses group JSON. A key naming a party (no trailing digit) applies
    /// its unitaries to both legs `<party>1` and `<party>2`.
    pub fn from_json(v: &Value) -> Result<GroupRep> {
        let cayley: Vec<Vec<usize>> = serde_json::from_value(
            v.get("cayley").cloned().ok_or_else(|| Error::Format("group needs \"cayley\"".into()))?,
        )?;
        if let Some(order) = v.get("order").and_then(Value::as_u64) {
            if order as usize != cayley.len() {
                return Err(Error::InvalidGroup(format!("order {order} but Cayley table has {} rows", cayley.len())));
            }
        }
        let reps = v
            .get("reps")
            .and_then(Value::as_object)
            .ok_or_else(|| Error::Format("group needs \"reps\" object".into()))?;
        let mut map = BTreeMap::new();
        for (key, list) in reps {
            let list = list.as_array().ok_or_else(|| Error::Format(format!("reps.{key} must be an array")))?;
            let us = list
                .iter()
                .map(|u| Operator::from_json(u).map(Operator::into_matrix))
                .collect::<Result<Vec<_>>>()?;
            if key.ends_with(|c: char| c.is_ascii_digit()) {
                map.insert(key.clone(), us);
            } else {
                map.insert(format!("{key}1"), us.clone());
                map.insert(format!("{key}2"), us);
            }
        }
        GroupRep::new(cayley, map)
    }
}

/// Local twirl `(1/|G|) Σ_g V_g M V_g†` of a Choi operator.
pub fn twirl_choi(m: &ChoiOperator, rep: &GroupRep) -> Result<ChoiOperator> {
    rep.check_leg(m.input())?;
    rep.check_leg(m.output())?;
    let (i, o) = (m.input().name.clone(), m.output().name.clone());
    ChoiOperator::new(rep.twirl_legs(m.op(), &i, &o)?.with_inferred_field())
}

/// `max_g ‖V_g M V_g† − M‖_max`.
pub fn covariance_deviation(m: &ChoiOperator, rep: &GroupRep) -> Result<f64> {
    rep.check_leg(m.input())?;
    rep.check_leg(m.output())?;
    rep.invariance_deviation(m.op())
}

pub fn is_covariant(m: &ChoiOperator, rep: &GroupRep, tol: f64) -> Result<bool> {
    Ok(covariance_deviation(m, rep)? <= tol)
}

/// Averages a valid twirled process over independent local group actions;
/// the result is a valid ordinary process.
pub fn average_process(w: &ProcessMatrix, rep: &GroupRep) -> Result<ProcessMatrix> {
    let checked = ProcessMatrix::new(w.op().clone(), Theory::Twirled(Box::new(rep.clone())))?;
    let report = process::validate_process(&checked, &Tolerances::default())?;
    if !report.passed() {
        return Err(Error::NotAProcess(report.summary()));
    }
    let mut acc = w.op().clone();
    for k in 0..w.parties() {
        let (i, o) = w.party_legs(k);
        acc = rep.twirl_legs(&acc, &i.name, &o.name)?;
    }
    ProcessMatrix::new(acc.hermitian_part().with_inferred_field(), Theory::Qt)
}

fn enlarge(label: &SystemLabel, order: usize) -> SystemLabel {
    SystemLabel::new(label.name.clone(), label.dim * order)
}

/// `Γ(M) = Σ_g |g⟩⟨g|_{R1} ⊗ |g⟩⟨g|_{R2} ⊗ M` on the enlarged legs.
pub fn encode_instrument_twirled(m: &ChoiOperator, rep: &GroupRep) -> Result<ChoiOperator> {
    let lmin = m.min_eigenvalue();
    if lmin < -CP_TOL {
        return Err(Error::NotCp(lmin));
    }
    let n = rep.order();
    let (d1, d2) = (m.input().dim, m.output().dim);
    let big = d1 * n * d2 * n;
    let mut out = Matrix::zeros(big, big);
    let idx = |x1: usize, x2: usize, g: usize| ((x1 * n + g) * d2 + x2) * n + g;
    for g in 0..n {
        for x1 in 0..d1 {
            for x2 in 0..d2 {
                for y1 in 0..d1 {
                    for y2 in 0..d2 {
                        out.set(idx(x1, x2, g), idx(y1, y2, g), m.matrix().get(x1 * d2 + x2, y1 * d2 + y2));
                    }
                }
            }
        }
    }
    ChoiOperator::from_matrix(enlarge(m.input(), n), enlarge(m.output(), n), out)
}

/// `D(M̂) = (1/|G|) Σ_g Tr_{R2}[⟨g|_{R1} M̂ |g⟩_{R1}]`.
pub fn decode_instrument_twirled(m: &ChoiOperator, rep: &GroupRep) -> Result<ChoiOperator> {
    let lmin = m.min_eigenvalue();
    if lmin < -CP_TOL {
        return Err(Error::NotCp(lmin));
    }
    let n = rep.order();
    let (e1, e2) = (m.input().dim, m.output().dim);
    if e1 % n != 0 || e2 % n != 0 {
        return shape("legs are not enlarged by the group order");
    }
    let (d1, d2) = (e1 / n, e2 / n);
    let mut out = Matrix::zeros(d1 * d2, d1 * d2);
    for x1 in 0..d1 {
        for x2 in 0..d2 {
            for y1 in 0..d1 {
                for y2 in 0..d2 {
                    let mut s = C64::new(0.0, 0.0);
                    for g in 0..n {
                        for r in 0..n {
                            s += m.matrix().get(((x1 * n + g) * e2) + x2 * n + r, ((y1 * n + g) * e2) + y2 * n + r);
                        }
                    }
                    out.set(x1 * d2 + x2, y1 * d2 + y2, s / n as f64);
                }
            }
        }
    }
    let input = SystemLabel::new(m.input().name.clone(), d1);
    let output = SystemLabel::new(m.output().name.clone(), d2);
    ChoiOperator::from_matrix(input, output, out)
}

/// `⟨g|` on the reference factor of a leg: the `d × d|G|` map `I_d ⊗ ⟨g|`.
fn reference_bra(d: usize, n: usize, g: usize) -> Matrix {
    let mut k = Matrix::zeros(d, d * n);
    for x in 0..d {
        k.set(x, x * n + g, ONE);
    }
    k
}

/// Hilbert–Schmidt adjoint of `⊗_k D_k`, written as the conjugation
/// `(1/|G|) Σ_{g,r} K_{g,r}† W K_{g,r}` per party with
/// `K_{g,r} = (I ⊗ ⟨g|) ⊗ (I ⊗ ⟨r|)`.
pub fn decode_twirled_adjoint(w: &Operator, order: usize) -> Result<Operator> {
    let mut cur = w.clone();
    let names: Vec<SystemLabel> = w.systems().to_vec();
    for leg in &names {
        let mut acc: Option<Operator> = None;
        for g in 0..order {
            let kd = reference_bra(leg.dim, order, g).adjoint();
            let term = cur.conjugate_local(&leg.name, &kd, None)?;
            acc = Some(match acc {
                None => term,
                Some(a) => a.add(&term)?,
            });
        }
        cur = acc.expect("order ≥ 1");
    }
    let parties = names.len() / 2;
    Ok(cur.scale((order as f64).powi(parties as i32).recip()).with_inferred_field())
}

/// Outcome of simulating an ordinary experiment inside a twirled world.
#[derive(Clone, Debug)]
pub struct Simulation {
    pub w_hat: ProcessMatrix,
    pub encoded: Vec<InstrumentSet>,
    pub original: Distribution,
    pub simulated: Distribution,
    pub max_deviation: f64,
    pub invariance_deviation: f64,
    pub validation: ValidationReport,
}

/// Realizes an ordinary process experiment in the twirled world of `group`
/// using the regular representation as a reference frame.
///
/// Only the Cayley table of `group` is used; every enlarged leg carries
/// `I ⊗ L_h`.
pub fn simulate_qt_in_twirled(w: &ProcessMatrix, instruments: &[&InstrumentSet], group: &GroupRep) -> Result<Simulation> {
    let report = process::validate_process(w, &Tolerances::default())?;
    if !matches!(w.theory(), Theory::Qt) || !report.passed() {
        return Err(Error::NotAProcess(format!("input is not a valid ordinary process: {}", report.summary())));
    }
    let n = group.order();
    let w_hat_op = decode_twirled_adjoint(w.op(), n)?;
    let enlarged = GroupRep::enlarged(group.cayley(), w_hat_op.systems())?;
    let encoded = instruments
        .iter()
        .map(|inst| inst.map(|m| encode_instrument_twirled(m, group)))
        .collect::<Result<Vec<_>>>()?;
    let w_hat = ProcessMatrix::new(w_hat_op, Theory::Twirled(Box::new(enlarged.clone())))?;
    let validation = process::validate_process(&w_hat, &Tolerances::default())?;
    let invariance_deviation = enlarged.invariance_deviation(w_hat.op())?;
    let original = born_probabilities_n(w, instruments)?;
    let enc_refs: Vec<&InstrumentSet> = encoded.iter().collect();
    let simulated = born_probabilities_n(&w_hat, &enc_refs)?;
    let max_deviation = original.max_abs_diff(&simulated)?;
    Ok(Simulation { w_hat, encoded, original, simulated, max_deviation, invariance_deviation, validation })
}
