//! Choi operators, instruments, random instrument sampling and the
//! realification / recomplexification maps.
//!
//! Choi convention: for a map with Kraus operators `K_r: X1 → X2`,
//! `M[(j,o),(j',o')] = Σ_r conj(K_r[o,j]) K_r[o',j']`, i.e. the transpose of
//! the state obtained by applying the map to half of an unnormalized
//! maximally entangled pair. Trace preservation reads `Tr_{X2} M = I`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde_json::{json, Value};

use crate::error::{shape, Error, Result};
use crate::operator_algebra::{eigen, Field, Matrix, Operator, SystemLabel, C64, HERMITIAN_TOL, ZERO};

/// Negative-eigenvalue slack under which an operator still counts as CP.
pub const CP_TOL: f64 = 1e-9;

/// Eigenvalue cutoff for Kraus extraction.
pub const KRAUS_CUTOFF: f64 = 1e-12;

/// Choi operator on an (input, output) system pair.
#[derive(Clone, Debug, PartialEq)]
pub struct ChoiOperator {
    op: Operator,
}

impl ChoiOperator {
    /// Wraps a Hermitian operator on exactly two systems (input, output).
    pub fn new(op: Operator) -> Result<Self> {
        if op.systems().len() != 2 {
            return shape(format!("Choi operator needs 2 systems, got {}", op.systems().len()));
        }
        let dev = op.matrix().hermiticity_deviation();
        if dev > HERMITIAN_TOL {
            return Err(Error::NotHermitian(dev));
        }
        Ok(ChoiOperator { op })
    }

    pub fn from_matrix(input: SystemLabel, output: SystemLabel, mat: Matrix) -> Result<Self> {
        Self::new(Operator::from_matrix(vec![input, output], mat)?)
    }

    pub fn zero(input: SystemLabel, output: SystemLabel) -> Result<Self> {
        Self::new(Operator::zeros(vec![input, output])?)
    }

    pub fn op(&self) -> &Operator {
        &self.op
    }

    pub fn into_operator(self) -> Operator {
        self.op
    }

    pub fn matrix(&self) -> &Matrix {
        self.op.matrix()
    }

    pub fn input(&self) -> &SystemLabel {
        &self.op.systems()[0]
    }

    pub fn output(&self) -> &SystemLabel {
        &self.op.systems()[1]
    }

    pub fn min_eigenvalue(&self) -> f64 {
        eigen::hermitian_min_eigenvalue(self.op.matrix())
    }

    /// `Tr_{X2} M` as a matrix on the input.
    pub fn output_trace(&self) -> Matrix {
        let name = self.output().name.clone();
        self.op.partial_trace(&[&name]).expect("output system exists").into_matrix()
    }

    /// `‖Tr_{X2} M − I‖_max`.
    pub fn tp_residual(&self) -> f64 {
        let t = self.output_trace();
        t.max_abs_diff(&Matrix::identity(t.rows()))
    }

    /// `λ_min(I − Tr_{X2} M)`; nonnegative for trace-nonincreasing maps.
    pub fn trace_nonincreasing_margin(&self) -> f64 {
        let t = self.output_trace();
        eigen::hermitian_min_eigenvalue(&Matrix::identity(t.rows()).sub(&t))
    }

    fn same_legs(&self, other: &ChoiOperator) -> bool {
        self.op.systems() == other.op.systems()
    }

    pub fn add(&self, other: &ChoiOperator) -> Result<ChoiOperator> {
        Ok(ChoiOperator { op: self.op.add(&other.op)? })
    }

    pub fn scale(&self, s: f64) -> ChoiOperator {
        ChoiOperator { op: self.op.scale(s) }
    }
}

/// Kraus operators `K_r: X1 → X2`, each `d_out × d_in`.
#[derive(Clone, Debug, PartialEq)]
pub struct KrausSet {
    ops: Vec<Matrix>,
    in_dim: usize,
    out_dim: usize,
}

impl KrausSet {
    pub fn new(ops: Vec<Matrix>, in_dim: usize, out_dim: usize) -> Result<Self> {
        for k in &ops {
            if k.rows() != out_dim || k.cols() != in_dim {
                return shape(format!("Kraus operator {}×{} on a {in_dim}→{out_dim} map", k.rows(), k.cols()));
            }
        }
        Ok(KrausSet { ops, in_dim, out_dim })
    }

    pub fn ops(&self) -> &[Matrix] {
        &self.ops
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    /// `Σ K†K`.
    pub fn completeness(&self) -> Matrix {
        let mut s = Matrix::zeros(self.in_dim, self.in_dim);
        for k in &self.ops {
            s = s.add(&k.adjoint().matmul(k));
        }
        s
    }
}

/// Choi operator of the map with the given Kraus operators.
pub fn choi_from_kraus(k: &KrausSet, input: SystemLabel, output: SystemLabel) -> Result<ChoiOperator> {
    if input.dim != k.in_dim || output.dim != k.out_dim {
        return shape("system dimensions do not match the Kraus operators");
    }
    let (di, dout) = (k.in_dim, k.out_dim);
    let n = di * dout;
    let mut m = Matrix::zeros(n, n);
    for kr in &k.ops {
        let u: Vec<C64> = (0..n).map(|idx| kr.get(idx % dout, idx / dout).conj()).collect();
        for (a, ua) in u.iter().enumerate() {
            if *ua == ZERO {
                continue;
            }
            for (b, ub) in u.iter().enumerate() {
                m.set(a, b, m.get(a, b) + ua * ub.conj());
            }
        }
    }
    ChoiOperator::from_matrix(input, output, m)
}

/// Kraus operators read off the spectrum of a CP Choi operator.
///
/// Real Choi operators give one Kraus operator per positive eigenvalue.
/// Complex ones are factored through the real embedding and give two per
/// positive eigenvalue (see [`eigen::hermitian_psd_factor`]).
pub fn kraus_from_choi(m: &ChoiOperator) -> Result<KrausSet> {
    let lmin = m.min_eigenvalue();
    if lmin < -CP_TOL {
        return Err(Error::NotCp(lmin));
    }
    let (di, dout) = (m.input().dim, m.output().dim);
    let ops = eigen::hermitian_psd_factor(m.matrix(), KRAUS_CUTOFF)
        .into_iter()
        .map(|u| Matrix::from_fn(dout, di, |o, j| u[j * dout + o].conj()))
        .collect();
    KrausSet::new(ops, di, dout)
}

/// Report of a CPTP check.
#[derive(Clone, Debug, PartialEq)]
pub struct CptpReport {
    pub min_eigenvalue: f64,
    pub tp_residual: f64,
    pub passes: bool,
}

/// Checks `M ≥ −tol_psd` and `‖Tr_{X2} M − I‖_max ≤ tol_tp`.
pub fn is_cptp(m: &ChoiOperator, tol_psd: f64, tol_tp: f64) -> CptpReport {
    let min_eigenvalue = m.min_eigenvalue();
    let tp_residual = m.tp_residual();
    CptpReport { min_eigenvalue, tp_residual, passes: min_eigenvalue >= -tol_psd && tp_residual <= tol_tp }
}

/// Setting-indexed family of CP Choi operators, `elements[x][a] = M_{a|x}`.
#[derive(Clone, Debug, PartialEq)]
pub struct InstrumentSet {
    party: String,
    elements: Vec<Vec<ChoiOperator>>,
}

impl InstrumentSet {
    pub fn new(party: impl Into<String>, elements: Vec<Vec<ChoiOperator>>) -> Result<Self> {
        let outcomes = elements.first().map(Vec::len).unwrap_or(0);
        if elements.is_empty() || outcomes == 0 {
            return shape("instrument needs at least one setting and one outcome");
        }
        let first = &elements[0][0];
        for row in &elements {
            if row.len() != outcomes {
                return shape("every setting needs the same number of outcomes");
            }
            if row.iter().any(|m| !m.same_legs(first)) {
                return shape("instrument elements act on different systems");
            }
        }
        Ok(InstrumentSet { party: party.into(), elements })
    }

    pub fn party(&self) -> &str {
        &self.party
    }

    pub fn settings(&self) -> usize {
        self.elements.len()
    }

    pub fn outcomes(&self) -> usize {
        self.elements[0].len()
    }

    /// `M_{a|x}`.
    pub fn element(&self, x: usize, a: usize) -> &ChoiOperator {
        &self.elements[x][a]
    }

    pub fn elements(&self) -> &[Vec<ChoiOperator>] {
        &self.elements
    }

    pub fn input(&self) -> &SystemLabel {
        self.elements[0][0].input()
    }

    pub fn output(&self) -> &SystemLabel {
        self.elements[0][0].output()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, &ChoiOperator)> {
        self.elements
            .iter()
            .enumerate()
            .flat_map(|(x, row)| row.iter().enumerate().map(move |(a, m)| (x, a, m)))
    }

    /// Sum over outcomes for one setting.
    pub fn channel(&self, x: usize) -> ChoiOperator {
        let mut s = self.elements[x][0].clone();
        for m in &self.elements[x][1..] {
            s = s.add(m).expect("same legs");
        }
        s
    }

    /// `max_x ‖Tr_{X2} Σ_a M_{a|x} − I‖_max`.
    pub fn tp_residual(&self) -> f64 {
        (0..self.settings()).map(|x| self.channel(x).tp_residual()).fold(0.0, f64::max)
    }

    /// `min_{a,x} λ_min(M_{a|x})`.
    pub fn min_eigenvalue(&self) -> f64 {
        self.iter().map(|(_, _, m)| m.min_eigenvalue()).fold(f64::INFINITY, f64::min)
    }

    /// `min_{a,x} λ_min(I − Tr_{X2} M_{a|x})`.
    pub fn trace_nonincreasing_margin(&self) -> f64 {
        self.iter().map(|(_, _, m)| m.trace_nonincreasing_margin()).fold(f64::INFINITY, f64::min)
    }

    /// `max |Im|` over all element entries.
    pub fn max_imag(&self) -> f64 {
        self.iter().map(|(_, _, m)| m.matrix().max_imag()).fold(0.0, f64::max)
    }

    /// `max ‖M − Mᵀ‖_max` over all elements.
    pub fn symmetry_deviation(&self) -> f64 {
        self.iter().map(|(_, _, m)| m.matrix().symmetry_deviation()).fold(0.0, f64::max)
    }

    /// Applies `f` to every element, keeping the layout.
    pub fn map(&self, mut f: impl FnMut(&ChoiOperator) -> Result<ChoiOperator>) -> Result<InstrumentSet> {
        let elements = self
            .elements
            .iter()
            .map(|row| row.iter().map(&mut f).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        InstrumentSet::new(self.party.clone(), elements)
    }

    pub fn to_json(&self) -> Value {
        let elements: Vec<Value> =
            self.elements.iter().map(|row| Value::Array(row.iter().map(|m| m.op.to_json()).collect())).collect();
        json!({
            "party": self.party,
            "settings": self.settings(),
            "outcomes": self.outcomes(),
            "indexing": "elements[x][a] = M_{a|x}",
            "elements": elements,
        })
    }

    pub fn from_json(v: &Value) -> Result<InstrumentSet> {
        let party = v
            .get("party")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::Format("instrument needs \"party\"".into()))?;
        let rows = v
            .get("elements")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::Format("instrument needs \"elements\"".into()))?;
        let mut elements = Vec::with_capacity(rows.len());
        for row in rows {
            let row = row.as_array().ok_or_else(|| Error::Format("elements[x] must be an array".into()))?;
            elements.push(row.iter().map(|m| ChoiOperator::new(Operator::from_json(m)?)).collect::<Result<Vec<_>>>()?);
        }
        let inst = InstrumentSet::new(party, elements)?;
        for (key, want) in [("settings", inst.settings()), ("outcomes", inst.outcomes())] {
            if let Some(n) = v.get(key).and_then(Value::as_u64) {
                if n as usize != want {
                    return shape(format!("\"{key}\" is {n} but elements give {want}"));
                }
            }
        }
        Ok(inst)
    }
}

fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, field: Field, rng: &mut R) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = if field == Field::Complex { rng.sample(StandardNormal) } else { 0.0 };
        C64::new(re, im)
    })
}

/// Orthonormalizes the columns of `g` (two passes of modified Gram–Schmidt).
fn orthonormal_columns(g: &Matrix) -> Matrix {
    let (n, k) = (g.rows(), g.cols());
    let mut cols: Vec<Vec<C64>> = (0..k).map(|j| (0..n).map(|i| g.get(i, j)).collect()).collect();
    for j in 0..k {
        for _ in 0..2 {
            for p in 0..j {
                let (done, rest) = cols.split_at_mut(j);
                let q = &done[p];
                let c: C64 = q.iter().zip(&rest[0]).map(|(a, b)| a.conj() * b).sum();
                for (x, y) in rest[0].iter_mut().zip(q) {
                    *x -= c * y;
                }
            }
        }
        let nrm = cols[j].iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        for x in cols[j].iter_mut() {
            *x /= nrm;
        }
    }
    Matrix::from_fn(n, k, |i, j| cols[j][i])
}

/// Random instrument from a random isometry `X1 → X2 ⊗ E'` followed by a
/// measurement of `E'` in a random orthonormal basis.
///
/// `E'` has dimension `max(2, outcomes, ⌈d_in/d_out⌉)`; basis vector `k` is assigned to
/// outcome `k mod outcomes`. `Field::Real` samples real orthogonal objects,
/// `Field::Complex` unitary ones.
pub fn random_instrument<R: Rng + ?Sized>(
    party: &str,
    field: Field,
    settings: usize,
    outcomes: usize,
    input: &SystemLabel,
    output: &SystemLabel,
    rng: &mut R,
) -> Result<InstrumentSet> {
    if settings == 0 || outcomes == 0 {
        return shape("instrument needs at least one setting and one outcome");
    }
    let (di, dout) = (input.dim, output.dim);
    let env = outcomes.max(2).max(di.div_ceil(dout));
    let mut elements = Vec::with_capacity(settings);
    for _ in 0..settings {
        let v = orthonormal_columns(&gaussian_matrix(dout * env, di, field, rng));
        let q = orthonormal_columns(&gaussian_matrix(env, env, field, rng));
        let mut kraus: Vec<Vec<Matrix>> = vec![Vec::new(); outcomes];
        for k in 0..env {
            let kr = Matrix::from_fn(dout, di, |o, j| {
                (0..env).map(|e| q.get(e, k).conj() * v.get(o * env + e, j)).sum()
            });
            kraus[k % outcomes].push(kr);
        }
        let row = kraus
            .into_iter()
            .map(|ops| choi_from_kraus(&KrausSet::new(ops, di, dout)?, input.clone(), output.clone()))
            .collect::<Result<Vec<_>>>()?;
        elements.push(row);
    }
    InstrumentSet::new(party, elements)
}

/// `r(M) = Re(M) ⊗ I₂ + Im(M) ⊗ J` with `J = [[0, −1], [1, 0]]`.
///
/// Row/column `(i, u)` of the result has index `2i + u`.
pub fn realify_matrix(m: &Matrix) -> Matrix {
    Matrix::from_fn(2 * m.rows(), 2 * m.cols(), |r, c| {
        let z = m.get(r / 2, c / 2);
        let v = match (r % 2, c % 2) {
            (0, 0) | (1, 1) => z.re,
            (0, 1) => -z.im,
            _ => z.im,
        };
        C64::new(v, 0.0)
    })
}

/// Realification of an operator; a qubit system `U` is appended last.
pub fn realify_operator(op: &Operator) -> Result<Operator> {
    let mut systems = op.systems().to_vec();
    systems.push(SystemLabel::new("U", 2));
    Operator::new(systems, Field::Real, realify_matrix(op.matrix()))
}

/// `V = (I ⊗ ⟨0| + i·I ⊗ ⟨1|)/√2`, a `d × 2d` coisometry with `V r(M) V† = M`.
pub fn coisometry(d: usize) -> Matrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut v = Matrix::zeros(d, 2 * d);
    for i in 0..d {
        v.set(i, 2 * i, C64::new(s, 0.0));
        v.set(i, 2 * i + 1, C64::new(0.0, s));
    }
    v
}

/// Realified Choi operator together with the Kraus set it was built from.
#[derive(Clone, Debug)]
pub struct EncodedChoi {
    pub choi: ChoiOperator,
    pub kraus: KrausSet,
}

/// Realifies every Kraus operator and returns the Choi operator of the
/// resulting real map on the doubled legs (names kept, dimensions doubled).
pub fn encode_kraus(k: &KrausSet, input: &SystemLabel, output: &SystemLabel) -> Result<ChoiOperator> {
    let real: Vec<Matrix> = k.ops.iter().map(realify_matrix).collect();
    let rk = KrausSet::new(real, 2 * k.in_dim, 2 * k.out_dim)?;
    choi_from_kraus(
        &rk,
        SystemLabel::new(input.name.clone(), 2 * input.dim),
        SystemLabel::new(output.name.clone(), 2 * output.dim),
    )
}

/// Kraus-level realification of a CP Choi operator.
pub fn encode_choi(m: &ChoiOperator) -> Result<EncodedChoi> {
    let kraus = kraus_from_choi(m)?;
    let choi = encode_kraus(&kraus, m.input(), m.output())?;
    Ok(EncodedChoi { choi, kraus })
}

/// Encodes every element of an instrument.
pub fn encode_instrument(inst: &InstrumentSet) -> Result<InstrumentSet> {
    inst.map(|m| Ok(encode_choi(m)?.choi))
}

/// Recomplexification `d(N) = (V_i ⊗ V̄_o) N (·)† + (V_i ⊗ V_o) N (·)†`.
pub fn decode_choi(n: &ChoiOperator) -> Result<ChoiOperator> {
    let lmin = n.min_eigenvalue();
    if lmin < -CP_TOL {
        return Err(Error::NotCp(lmin));
    }
    let (i, o) = (n.input().clone(), n.output().clone());
    if i.dim % 2 != 0 || o.dim % 2 != 0 {
        return shape("decoding needs even leg dimensions");
    }
    let vi = coisometry(i.dim / 2);
    let vo = coisometry(o.dim / 2);
    let half = n.op().conjugate_local(&i.name, &vi, None)?;
    let t0 = half.conjugate_local(&o.name, &vo.conj(), None)?;
    let t1 = half.conjugate_local(&o.name, &vo, None)?;
    ChoiOperator::new(t0.add(&t1)?.with_inferred_field())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn q(name: &str) -> SystemLabel {
        SystemLabel::new(name, 2)
    }

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn identity_channel_choi_pattern() {
        let k = KrausSet::new(vec![Matrix::identity(2)], 2, 2).unwrap();
        let m = choi_from_kraus(&k, q("A1"), q("A2")).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let want = if (i == 0 || i == 3) && (j == 0 || j == 3) { 1.0 } else { 0.0 };
                assert_eq!(m.matrix().get(i, j), c(want, 0.0));
            }
        }
    }

    #[test]
    fn zero_kraus_gives_zero_choi() {
        let k = KrausSet::new(vec![Matrix::zeros(2, 2)], 2, 2).unwrap();
        assert_eq!(choi_from_kraus(&k, q("A1"), q("A2")).unwrap().matrix().max_abs(), 0.0);
    }

    #[test]
    fn reset_channel_is_trace_preserving() {
        let k0 = Matrix::from_real(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let k1 = Matrix::from_real(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let m = choi_from_kraus(&KrausSet::new(vec![k0, k1], 2, 2).unwrap(), q("A1"), q("A2")).unwrap();
        assert!(m.tp_residual() < 1e-15);
    }

    #[test]
    fn transposed_convention_for_complex_kraus() {
        // K = diag(1, i): the map is conjugation by a phase gate.
        let k = Matrix::diag(&[c(1.0, 0.0), c(0.0, 1.0)]);
        let m = choi_from_kraus(&KrausSet::new(vec![k], 2, 2).unwrap(), q("A1"), q("A2")).unwrap();
        // [(I⊗K)|Φ⁺⟩⟨Φ⁺|(I⊗K†)]ᵀ has entry ⟨00|·|11⟩ equal to conj(K00)·K11 = i.
        assert_eq!(m.matrix().get(0, 3), c(0.0, 1.0));
        assert_eq!(m.matrix().get(3, 0), c(0.0, -1.0));
    }

    #[test]
    fn cptp_reports() {
        let m = ChoiOperator::from_matrix(q("A1"), q("A2"), Matrix::identity(4).scale_re(0.5)).unwrap();
        let r = is_cptp(&m, 1e-12, 1e-12);
        assert!(r.passes && r.tp_residual == 0.0);
        let m2 = ChoiOperator::from_matrix(q("A1"), q("A2"), Matrix::identity(4).scale_re(2.0)).unwrap();
        let r2 = is_cptp(&m2, 1e-12, 1e-12);
        assert!(!r2.passes);
        assert_eq!(r2.tp_residual, 3.0);
    }

    #[test]
    fn random_real_instrument_is_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let inst = random_instrument("A", Field::Real, 2, 2, &q("A1"), &q("A2"), &mut rng).unwrap();
        assert_eq!((inst.settings(), inst.outcomes()), (2, 2));
        for (_, _, m) in inst.iter() {
            assert!(m.matrix().is_real());
            assert!(m.min_eigenvalue() >= -1e-12);
        }
        assert!(inst.tp_residual() <= 1e-12);
    }

    #[test]
    fn single_outcome_instrument_is_a_channel() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let inst = random_instrument("B", Field::Complex, 3, 1, &q("B1"), &q("B2"), &mut rng).unwrap();
        for x in 0..3 {
            assert!(is_cptp(inst.element(x, 0), 1e-12, 1e-12).passes);
        }
    }

    #[test]
    fn sampler_is_deterministic() {
        let a = random_instrument("A", Field::Real, 2, 2, &q("A1"), &q("A2"), &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = random_instrument("A", Field::Real, 2, 2, &q("A1"), &q("A2"), &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn realify_examples() {
        let j = realify_matrix(&Matrix::from_vec(1, 1, vec![c(0.0, 1.0)]));
        assert_eq!(j, Matrix::from_real(2, 2, &[0.0, -1.0, 1.0, 0.0]));
        assert_eq!(realify_matrix(&Matrix::identity(3)), Matrix::identity(6));
        let y = crate::pauli::Pauli::Y.matrix();
        let ry = realify_matrix(&y);
        assert!(ry.matmul(&ry).max_abs_diff(&Matrix::identity(4)) < 1e-15);
    }

    #[test]
    fn coisometry_identities() {
        let v1 = coisometry(1);
        assert!((v1.get(0, 0) - c(std::f64::consts::FRAC_1_SQRT_2, 0.0)).norm() < 1e-16);
        assert!((v1.get(0, 1) - c(0.0, std::f64::consts::FRAC_1_SQRT_2)).norm() < 1e-16);
        for d in 1..5 {
            let v = coisometry(d);
            assert!(v.matmul(&v.adjoint()).max_abs_diff(&Matrix::identity(d)) < 1e-15);
            assert!(v.conj().matmul(&v.adjoint()).max_abs() < 1e-15);
        }
    }

    #[test]
    fn encoded_identity_channel() {
        let k = KrausSet::new(vec![Matrix::identity(2)], 2, 2).unwrap();
        let id = choi_from_kraus(&k, q("A1"), q("A2")).unwrap();
        let e = encode_choi(&id).unwrap();
        assert_eq!(e.choi.input().dim, 4);
        assert!(e.choi.tp_residual() < 1e-14);
        assert!(e.choi.min_eigenvalue() > -1e-14);
        let back = decode_choi(&e.choi).unwrap();
        assert!(back.matrix().max_abs_diff(id.matrix()) < 1e-14);
    }

    #[test]
    fn encoded_unitary_has_orthogonal_kraus() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let u = Matrix::from_vec(2, 2, vec![c(s, 0.0), c(0.0, s), c(0.0, s), c(s, 0.0)]);
        let ru = realify_matrix(&u);
        assert!(ru.transpose().matmul(&ru).max_abs_diff(&Matrix::identity(4)) < 1e-15);
        let k = KrausSet::new(vec![u], 2, 2).unwrap();
        let e = encode_kraus(&k, &q("A1"), &q("A2")).unwrap();
        assert!(e.tp_residual() < 1e-15);
    }

    #[test]
    fn zero_round_trips() {
        let z = ChoiOperator::zero(q("A1"), q("A2")).unwrap();
        let e = encode_choi(&z).unwrap();
        assert_eq!(e.choi.matrix().max_abs(), 0.0);
        let z4 = ChoiOperator::zero(SystemLabel::new("A1", 4), SystemLabel::new("A2", 4)).unwrap();
        assert_eq!(decode_choi(&z4).unwrap().matrix().max_abs(), 0.0);
    }

    #[test]
    fn non_cp_input_rejected() {
        let m = ChoiOperator::from_matrix(q("A1"), q("A2"), Matrix::diag(&[c(1.0, 0.0), c(-0.5, 0.0), c(0.0, 0.0), c(0.0, 0.0)])).unwrap();
        assert!(matches!(encode_choi(&m), Err(Error::NotCp(_))));
    }

    #[test]
    fn instrument_json_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let inst = random_instrument("A", Field::Complex, 2, 2, &q("A1"), &q("A2"), &mut rng).unwrap();
        let v: Value = serde_json::from_str(&serde_json::to_string(&inst.to_json()).unwrap()).unwrap();
        assert_eq!(InstrumentSet::from_json(&v).unwrap(), inst);
    }
}
