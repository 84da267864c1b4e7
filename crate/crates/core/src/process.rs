//! Process matrices: validity per theory, the generalized Born rule,
//! correlation functionals, normalization residuals, the locally-accessible
//! projection and the QT → RQT process embedding.
//!
//! Party `k` owns systems `2k` (input leg) and `2k + 1` (output leg).

use rand::Rng;
use rand_distr::StandardNormal;
use serde_json::{json, Value};

use crate::channels::{coisometry, ChoiOperator, InstrumentSet};
use crate::error::{shape, Error, Result};
use crate::operator_algebra::{Field, Matrix, Operator, SystemLabel, C64, ONE, ZERO};
use crate::twirl::GroupRep;

/// Party dimension (input × output) up to which residuals use an explicit
/// tangent basis; larger parties use the projector form.
pub const EXPLICIT_BASIS_MAX_DIM: usize = 16;

/// Largest imaginary part tolerated in a Born probability.
pub const IMAG_RESIDUE_TOL: f64 = 1e-10;

/// Physical theory a process matrix is checked against.
#[derive(Clone, Debug, PartialEq)]
pub enum Theory {
    Qt,
    Rqt,
    Twirled(Box<GroupRep>),
}

impl Theory {
    pub fn name(&self) -> &'static str {
        match self {
            Theory::Qt => "qt",
            Theory::Rqt => "rqt",
            Theory::Twirled(_) => "twirled",
        }
    }

    /// Field of the instruments native to the theory.
    pub fn field(&self) -> Field {
        match self {
            Theory::Rqt => Field::Real,
            _ => Field::Complex,
        }
    }
}

/// Process matrix together with the theory it is meant for.
#[derive(Clone, Debug, PartialEq)]
pub struct ProcessMatrix {
    op: Operator,
    theory: Theory,
}

impl ProcessMatrix {
    /// Requires an even, nonzero number of systems and Hermiticity to 1e-10;
    /// a twirled theory must represent every leg with matching dimension.
    pub fn new(op: Operator, theory: Theory) -> Result<Self> {
        let k = op.systems().len();
        if k == 0 || k % 2 != 0 {
            return shape(format!("process needs (input, output) leg pairs, got {k} systems"));
        }
        let dev = op.matrix().hermiticity_deviation();
        if dev > crate::operator_algebra::HERMITIAN_TOL {
            return Err(Error::NotHermitian(dev));
        }
        if let Theory::Twirled(rep) = &theory {
            for leg in op.systems() {
                let d = rep.unitary(&leg.name, 0)?.rows();
                if d != leg.dim {
                    return shape(format!("group acts on {} with dimension {d}, leg has {}", leg.name, leg.dim));
                }
            }
        }
        Ok(ProcessMatrix { op, theory })
    }

    pub fn op(&self) -> &Operator {
        &self.op
    }

    pub fn into_operator(self) -> Operator {
        self.op
    }

    pub fn theory(&self) -> &Theory {
        &self.theory
    }

    pub fn parties(&self) -> usize {
        self.op.systems().len() / 2
    }

    /// (input, output) legs of party `k`.
    pub fn party_legs(&self, k: usize) -> (&SystemLabel, &SystemLabel) {
        let s = self.op.systems();
        (&s[2 * k], &s[2 * k + 1])
    }

    /// Party label: the input leg name without trailing digits.
    pub fn party_name(&self, k: usize) -> String {
        let name = self.party_legs(k).0.name.trim_end_matches(|c: char| c.is_ascii_digit());
        if name.is_empty() {
            format!("P{k}")
        } else {
            name.to_string()
        }
    }

    fn party_dims(&self) -> Vec<usize> {
        (0..self.parties()).map(|k| self.party_legs(k).0.dim * self.party_legs(k).1.dim).collect()
    }

    /// `Π_k d_out^{(k)}`, the trace of a normalized process.
    pub fn trace_target(&self) -> f64 {
        (0..self.parties()).map(|k| self.party_legs(k).1.dim as f64).product()
    }

    /// Matrix JSON plus `"theory"`; twirled processes carry `"group"`,
    /// either the given path or the inline group object.
    pub fn to_json(&self, group_path: Option<&str>) -> Value {
        let mut v = self.op.to_json();
        v["theory"] = json!(self.theory.name());
        if let Theory::Twirled(rep) = &self.theory {
            v["group"] = match group_path {
                Some(p) => json!(p),
                None => rep.to_json(),
            };
        }
        v
    }

    /// Parses process JSON; a string `"group"` is resolved by `load_group`.
    pub fn from_json(v: &Value, load_group: impl Fn(&str) -> Result<GroupRep>) -> Result<Self> {
        let op = Operator::from_json(v)?;
        let theory = match v.get("theory").and_then(Value::as_str) {
            Some("qt") | None => Theory::Qt,
            Some("rqt") => Theory::Rqt,
            Some("twirled") => {
                let rep = match v.get("group") {
                    Some(Value::String(p)) => load_group(p)?,
                    Some(g @ Value::Object(_)) => GroupRep::from_json(g)?,
                    _ => return Err(Error::Format("twirled process needs a \"group\"".into())),
                };
                Theory::Twirled(Box::new(rep))
            }
            Some(other) => return Err(Error::Format(format!("unknown theory {other:?}"))),
        };
        Self::new(op, theory)
    }
}

/// Conditional distribution `p(a_1..a_n | x_1..x_n)` stored row-major over
/// `(a_1, .., a_n, x_1, .., x_n)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Distribution {
    outcomes: Vec<usize>,
    settings: Vec<usize>,
    p: Vec<f64>,
}

fn flat_index(dims: &[usize], digits: &[usize]) -> usize {
    dims.iter().zip(digits).fold(0, |acc, (d, i)| acc * d + i)
}

fn digits_of(mut idx: usize, dims: &[usize]) -> Vec<usize> {
    let mut out = vec![0; dims.len()];
    for k in (0..dims.len()).rev() {
        out[k] = idx % dims[k];
        idx /= dims[k];
    }
    out
}

fn order_letters(n: usize) -> (Vec<String>, Vec<String>) {
    if n <= 2 {
        (["a", "b"][..n].iter().map(|s| s.to_string()).collect(), ["x", "y"][..n].iter().map(|s| s.to_string()).collect())
    } else {
        ((1..=n).map(|k| format!("a{k}")).collect(), (1..=n).map(|k| format!("x{k}")).collect())
    }
}

impl Distribution {
    pub fn new(outcomes: Vec<usize>, settings: Vec<usize>, p: Vec<f64>) -> Result<Self> {
        if outcomes.len() != settings.len() || outcomes.is_empty() {
            return shape("distribution needs one outcome and one setting count per party");
        }
        let n: usize = outcomes.iter().chain(&settings).product();
        if p.len() != n {
            return shape(format!("distribution expects {n} entries, got {}", p.len()));
        }
        Ok(Distribution { outcomes, settings, p })
    }

    /// Bipartite table from `rows[(x,y)][(a,b)]` in the layout
    /// rows = 00, 01, 10, 11 (x y) and columns = 00, 01, 10, 11 (a b).
    pub fn from_bipartite_rows(rows: &[[f64; 4]; 4]) -> Self {
        let mut p = vec![0.0; 16];
        for (xy, row) in rows.iter().enumerate() {
            for (ab, &v) in row.iter().enumerate() {
                p[ab * 4 + xy] = v;
            }
        }
        Distribution { outcomes: vec![2, 2], settings: vec![2, 2], p }
    }

    pub fn outcomes(&self) -> &[usize] {
        &self.outcomes
    }

    pub fn settings(&self) -> &[usize] {
        &self.settings
    }

    pub fn parties(&self) -> usize {
        self.outcomes.len()
    }

    pub fn entries(&self) -> &[f64] {
        &self.p
    }

    fn dims(&self) -> Vec<usize> {
        self.outcomes.iter().chain(&self.settings).copied().collect()
    }

    /// `p(a | x)` for outcome and setting tuples.
    pub fn get(&self, a: &[usize], x: &[usize]) -> f64 {
        let digits: Vec<usize> = a.iter().chain(x).copied().collect();
        self.p[flat_index(&self.dims(), &digits)]
    }

    /// Bipartite `p(a, b | x, y)`.
    pub fn p(&self, a: usize, b: usize, x: usize, y: usize) -> f64 {
        self.get(&[a, b], &[x, y])
    }

    pub fn same_shape(&self, other: &Distribution) -> bool {
        self.outcomes == other.outcomes && self.settings == other.settings
    }

    pub fn max_abs_diff(&self, other: &Distribution) -> Result<f64> {
        if !self.same_shape(other) {
            return shape("distributions have different shapes");
        }
        Ok(self.p.iter().zip(&other.p).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
    }

    pub fn min_entry(&self) -> f64 {
        self.p.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `max_x |Σ_a p(a|x) − 1|`.
    pub fn normalization_residual(&self) -> f64 {
        let na: usize = self.outcomes.iter().product();
        let nx: usize = self.settings.iter().product();
        (0..nx)
            .map(|x| ((0..na).map(|a| self.p[a * nx + x]).sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Entries ≥ −`tol_neg` and every setting row normalized to `tol_norm`.
    pub fn is_valid(&self, tol_neg: f64, tol_norm: f64) -> bool {
        self.min_entry() >= -tol_neg && self.normalization_residual() <= tol_norm
    }

    /// `{"p": nested, "order": "a,b,x,y"}`.
    pub fn to_json(&self) -> Value {
        fn nest(p: &[f64], dims: &[usize]) -> Value {
            if dims.is_empty() {
                return json!(p[0]);
            }
            let stride = p.len() / dims[0];
            Value::Array((0..dims[0]).map(|i| nest(&p[i * stride..(i + 1) * stride], &dims[1..])).collect())
        }
        let (a, x) = order_letters(self.parties());
        let order: Vec<String> = a.into_iter().chain(x).collect();
        json!({ "p": nest(&self.p, &self.dims()), "order": order.join(",") })
    }

    pub fn from_json(v: &Value) -> Result<Distribution> {
        let order = v.get("order").and_then(Value::as_str).unwrap_or("a,b,x,y");
        let letters: Vec<&str> = order.split(',').map(str::trim).collect();
        if letters.is_empty() || letters.len() % 2 != 0 {
            return Err(Error::Format(format!("bad distribution order {order:?}")));
        }
        let n = letters.len() / 2;
        let (a, x) = order_letters(n);
        if letters.iter().zip(a.iter().chain(&x)).any(|(l, e)| l != e) {
            return Err(Error::Format(format!("distribution order must be {}", a.iter().chain(&x).cloned().collect::<Vec<_>>().join(","))));
        }
        let mut dims = Vec::new();
        let mut flat = Vec::new();
        fn walk(v: &Value, depth: usize, dims: &mut Vec<usize>, flat: &mut Vec<f64>) -> Result<()> {
            match v {
                Value::Array(items) => {
                    if dims.len() == depth {
                        dims.push(items.len());
                    } else if dims[depth] != items.len() {
                        return Err(Error::Format("ragged distribution array".into()));
                    }
                    items.iter().try_for_each(|it| walk(it, depth + 1, dims, flat))
                }
                Value::Number(num) => {
                    if depth != dims.len() {
                        return Err(Error::Format("ragged distribution array".into()));
                    }
                    flat.push(num.as_f64().expect("finite JSON number"));
                    Ok(())
                }
                _ => Err(Error::Format("distribution entries must be numbers".into())),
            }
        }
        walk(v.get("p").ok_or_else(|| Error::Format("distribution needs \"p\"".into()))?, 0, &mut dims, &mut flat)?;
        if dims.len() != 2 * n {
            return Err(Error::Format(format!("distribution has {} axes, order names {}", dims.len(), 2 * n)));
        }
        Distribution::new(dims[..n].to_vec(), dims[n..].to_vec(), flat)
    }
}

/// Affine functional `offset + Σ α(a|x) p(a|x)` over a fixed shape.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationFunctional {
    pub outcomes: Vec<usize>,
    pub settings: Vec<usize>,
    pub coefficients: Vec<f64>,
    pub offset: f64,
}

impl CorrelationFunctional {
    /// Lazy guess-your-neighbour's-input functional on binary inputs and outputs.
    pub fn lgyni() -> Self {
        let mut coefficients = vec![0.0; 16];
        for (a, b, x, y) in [(0, 0, 0, 1), (1, 0, 0, 1), (0, 0, 1, 0), (0, 1, 1, 0), (1, 1, 1, 1)] {
            coefficients[flat_index(&[2, 2, 2, 2], &[a, b, x, y])] = 0.25;
        }
        CorrelationFunctional { outcomes: vec![2, 2], settings: vec![2, 2], coefficients, offset: 0.25 }
    }

    pub fn evaluate(&self, p: &Distribution) -> Result<f64> {
        if p.outcomes != self.outcomes || p.settings != self.settings {
            return shape("functional and distribution shapes differ");
        }
        Ok(self.offset + self.coefficients.iter().zip(&p.p).map(|(c, v)| c * v).sum::<f64>())
    }

    /// Coefficient of `p(a|x)`.
    pub fn coefficient(&self, a: &[usize], x: &[usize]) -> f64 {
        let dims: Vec<usize> = self.outcomes.iter().chain(&self.settings).copied().collect();
        let digits: Vec<usize> = a.iter().chain(x).copied().collect();
        self.coefficients[flat_index(&dims, &digits)]
    }
}

/// LGYNI value of a bipartite binary distribution.
pub fn lgyni(p: &Distribution) -> Result<f64> {
    CorrelationFunctional::lgyni().evaluate(p)
}

/// `Tr_P[W (M ⊗ I_R)]` for `W` on `P ⊗ R`; zero entries of `M` are skipped.
pub(crate) fn contract_leading(w: &Matrix, p: usize, m: &Matrix) -> Matrix {
    let r = w.rows() / p;
    let n = w.rows();
    let mut out = Matrix::zeros(r, r);
    let wd = w.data();
    let od = out.data_mut();
    for pp in 0..p {
        for q in 0..p {
            let c = m.get(q, pp);
            if c == ZERO {
                continue;
            }
            for i in 0..r {
                let row = &wd[(pp * r + i) * n + q * r..(pp * r + i) * n + q * r + r];
                for (o, w) in od[i * r..(i + 1) * r].iter_mut().zip(row) {
                    *o += c * w;
                }
            }
        }
    }
    out
}

/// `Tr[W ⊗_k C_k]` for every tuple of choices, row-major over parties.
fn expectations(w: &Matrix, dims: &[usize], choices: &[Vec<Matrix>]) -> Vec<C64> {
    if dims.is_empty() {
        return vec![w.get(0, 0)];
    }
    let mut out = Vec::new();
    for c in &choices[0] {
        let red = contract_leading(w, dims[0], c);
        out.extend(expectations(&red, &dims[1..], &choices[1..]));
    }
    out
}

/// `p(a|x) = Tr[W ⊗_k M^{(k)}_{a_k|x_k}]` for any number of parties.
pub fn born_probabilities_n(w: &ProcessMatrix, instruments: &[&InstrumentSet]) -> Result<Distribution> {
    if instruments.len() != w.parties() {
        return shape(format!("{} instruments for {} parties", instruments.len(), w.parties()));
    }
    for (k, inst) in instruments.iter().enumerate() {
        let (i, o) = w.party_legs(k);
        if inst.input().dim != i.dim || inst.output().dim != o.dim {
            return shape(format!(
                "instrument {} acts on {}→{} dims, party {k} has {}→{}",
                inst.party(),
                inst.input().dim,
                inst.output().dim,
                i.dim,
                o.dim
            ));
        }
    }
    let choices: Vec<Vec<Matrix>> = instruments
        .iter()
        .map(|inst| {
            (0..inst.settings())
                .flat_map(|x| (0..inst.outcomes()).map(move |a| inst.element(x, a).matrix().clone()))
                .collect()
        })
        .collect();
    let raw = expectations(w.op().matrix(), &w.party_dims(), &choices);
    let outcomes: Vec<usize> = instruments.iter().map(|i| i.outcomes()).collect();
    let settings: Vec<usize> = instruments.iter().map(|i| i.settings()).collect();
    let per_party: Vec<usize> = instruments.iter().map(|i| i.outcomes() * i.settings()).collect();
    let mut dims = outcomes.clone();
    dims.extend(&settings);
    let mut p = vec![0.0; raw.len()];
    let mut worst: f64 = 0.0;
    for (idx, z) in raw.iter().enumerate() {
        let pick = digits_of(idx, &per_party);
        let a: Vec<usize> = pick.iter().zip(&outcomes).map(|(c, o)| c % o).collect();
        let x: Vec<usize> = pick.iter().zip(&outcomes).map(|(c, o)| c / o).collect();
        let digits: Vec<usize> = a.into_iter().chain(x).collect();
        p[flat_index(&dims, &digits)] = z.re;
        worst = worst.max(z.im.abs());
    }
    if worst > IMAG_RESIDUE_TOL {
        return Err(Error::ImaginaryResidue(worst));
    }
    Distribution::new(outcomes, settings, p)
}

/// Bipartite Born rule `p(a,b|x,y) = Tr[W (M_{a|x} ⊗ M_{b|y})]`.
pub fn born_probabilities(w: &ProcessMatrix, ma: &InstrumentSet, mb: &InstrumentSet) -> Result<Distribution> {
    born_probabilities_n(w, &[ma, mb])
}

/// Hermitian operators on one party's (input, output) legs, each traceless on
/// the output and mutually Hilbert–Schmidt orthogonal.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentBasis {
    pub input: SystemLabel,
    pub output: SystemLabel,
    pub elements: Vec<Operator>,
}

impl TangentBasis {
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }
}

/// Generalized Gell-Mann basis with the identity first; the flag marks the
/// purely imaginary (antisymmetric) elements. For `d = 2` this is I, X, Y, Z.
fn gell_mann(d: usize) -> Vec<(Matrix, bool)> {
    let mut out = vec![(Matrix::identity(d), false)];
    for j in 0..d {
        for k in (j + 1)..d {
            let mut s = Matrix::zeros(d, d);
            s.set(j, k, ONE);
            s.set(k, j, ONE);
            out.push((s, false));
            let mut a = Matrix::zeros(d, d);
            a.set(j, k, C64::new(0.0, -1.0));
            a.set(k, j, C64::new(0.0, 1.0));
            out.push((a, true));
        }
    }
    for l in 1..d {
        let c = (2.0 / (l * (l + 1)) as f64).sqrt();
        let mut m = Matrix::zeros(d, d);
        for j in 0..l {
            m.set(j, j, C64::new(c, 0.0));
        }
        m.set(l, l, C64::new(-(l as f64) * c, 0.0));
        out.push((m, false));
    }
    out
}

/// Orthogonalizes against the kept list; keeps residuals above `1e-9` of the
/// input norm and flushes entries below `1e-14` of the largest.
fn gram_schmidt(candidates: impl IntoIterator<Item = Matrix>) -> Vec<Matrix> {
    let mut kept: Vec<(Matrix, f64)> = Vec::new();
    for c in candidates {
        let n0 = c.frobenius_norm();
        if n0 < 1e-12 {
            continue;
        }
        let mut r = c;
        for _ in 0..2 {
            for (k, kk) in &kept {
                let coef = k.hs_inner(&r) / *kk;
                r.axpy(-coef, k);
            }
        }
        if r.frobenius_norm() > 1e-9 * n0 {
            let big = r.max_abs();
            for z in r.data_mut() {
                if z.norm() < 1e-14 * big {
                    *z = ZERO;
                }
            }
            let nn = r.hs_inner(&r).re;
            kept.push((r, nn));
        }
    }
    kept.into_iter().map(|(m, _)| m).collect()
}

/// Tangent basis of the theory on one party's legs.
pub fn tangent_basis(theory: &Theory, input: &SystemLabel, output: &SystemLabel) -> Result<TangentBasis> {
    let (di, dout) = (input.dim, output.dim);
    if di * dout > 64 {
        return Err(Error::Unsupported(format!("explicit tangent basis for party dimension {}", di * dout)));
    }
    let gi = gell_mann(di);
    let go = gell_mann(dout);
    let products = |filter: &dyn Fn(bool, bool) -> bool| -> Vec<Matrix> {
        let mut v = Vec::new();
        for (a, ia) in &gi {
            for (b, ib) in &go[1..] {
                if filter(*ia, *ib) {
                    v.push(a.kron(b));
                }
            }
        }
        v
    };
    let mats: Vec<Matrix> = match theory {
        Theory::Qt => products(&|_, _| true),
        Theory::Rqt => {
            let mut v = products(&|a, b| !a && !b);
            v.extend(products(&|a, b| a && b));
            v
        }
        Theory::Twirled(rep) => {
            let ops = products(&|_, _| true);
            let twirled = ops
                .into_iter()
                .map(|m| {
                    let op = Operator::from_matrix(vec![input.clone(), output.clone()], m)?;
                    Ok(rep.twirl_legs(&op, &input.name, &output.name)?.into_matrix())
                })
                .collect::<Result<Vec<_>>>()?;
            gram_schmidt(twirled)
        }
    };
    let elements = mats
        .into_iter()
        .map(|m| Operator::from_matrix(vec![input.clone(), output.clone()], m))
        .collect::<Result<Vec<_>>>()?;
    Ok(TangentBasis { input: input.clone(), output: output.clone(), elements })
}

/// Residual values for one nonempty subset of parties.
#[derive(Clone, Debug, PartialEq)]
pub struct SubsetResidual {
    pub parties: Vec<usize>,
    pub label: String,
    /// Explicit form: `Tr[W ⊗_{k∈S} G_{i_k} ⊗ I]` row-major over the
    /// subset's tangent indices. Projector form: a single Frobenius norm.
    pub values: Vec<f64>,
}

impl SubsetResidual {
    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }
}

/// Normalization residuals of a process.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualReport {
    pub trace: f64,
    pub trace_target: f64,
    /// Set when the trace target is derived as `Π d_out` rather than fixed.
    pub trace_target_derived: bool,
    /// True when subsets are reported as projector norms.
    pub projector_form: bool,
    pub subsets: Vec<SubsetResidual>,
}

impl ResidualReport {
    pub fn trace_residual(&self) -> f64 {
        self.trace - self.trace_target
    }

    pub fn subset(&self, parties: &[usize]) -> Option<&SubsetResidual> {
        self.subsets.iter().find(|s| s.parties == parties)
    }

    /// Largest subset residual.
    pub fn max_abs(&self) -> f64 {
        self.subsets.iter().map(SubsetResidual::max_abs).fold(0.0, f64::max)
    }
}

/// Nonempty subsets ordered by size, then lexicographically.
fn subsets(n: usize) -> Vec<Vec<usize>> {
    let mut all: Vec<Vec<usize>> = (1u32..(1 << n))
        .map(|mask| (0..n).filter(|k| mask & (1 << k) != 0).collect())
        .collect();
    all.sort_by(|a, b| a.len().cmp(&b.len()).then(a.cmp(b)));
    all
}

/// `X ↦ X − Tr_out(X) ⊗ I_out / d_out` on one leg pair of a multi-system operator.
fn project_output_traceless(x: &Operator, output: &SystemLabel) -> Result<Operator> {
    let names: Vec<String> = x.names().iter().map(|s| s.to_string()).collect();
    let order: Vec<&str> = names.iter().map(String::as_str).collect();
    let reduced = x.partial_trace(&[&output.name])?;
    let back = reduced.tensor(&Operator::identity(vec![output.clone()])?)?.permute(&order)?;
    x.sub(&back.scale(1.0 / output.dim as f64))
}

/// Orthogonal projector onto the theory's local subspace on one party:
/// identity (qt), `(id + T_k)/2` (rqt), the local twirl (twirled).
fn local_symmetry(theory: &Theory, x: &Operator, input: &SystemLabel, output: &SystemLabel) -> Result<Operator> {
    match theory {
        Theory::Qt => Ok(x.clone()),
        Theory::Rqt => Ok(x.add(&x.partial_transpose(&[&input.name, &output.name])?)?.scale(0.5)),
        Theory::Twirled(rep) => rep.twirl_legs(x, &input.name, &output.name),
    }
}

/// Trace residual and, for every nonempty party subset `S`, the overlaps of
/// `W` with products of tangent elements on `S` and identities elsewhere.
pub fn normalization_residuals(w: &ProcessMatrix) -> Result<ResidualReport> {
    let n = w.parties();
    let trace = w.op().trace().re;
    let trace_target = w.trace_target();
    let trace_target_derived = matches!(w.theory(), Theory::Twirled(_));
    let names: Vec<String> = (0..n).map(|k| w.party_name(k)).collect();
    let label = |s: &[usize]| s.iter().map(|&k| names[k].as_str()).collect::<String>();
    let explicit = w.party_dims().iter().all(|&d| d <= EXPLICIT_BASIS_MAX_DIM);
    let mut out = Vec::new();
    if explicit {
        let bases = (0..n)
            .map(|k| {
                let (i, o) = w.party_legs(k);
                tangent_basis(w.theory(), i, o)
            })
            .collect::<Result<Vec<_>>>()?;
        let choices: Vec<Vec<Matrix>> = bases
            .iter()
            .map(|b| {
                let d = b.input.dim * b.output.dim;
                std::iter::once(Matrix::identity(d)).chain(b.elements.iter().map(|e| e.matrix().clone())).collect()
            })
            .collect();
        let counts: Vec<usize> = choices.iter().map(Vec::len).collect();
        let all = expectations(w.op().matrix(), &w.party_dims(), &choices);
        for s in subsets(n) {
            let mut values = Vec::new();
            for (idx, z) in all.iter().enumerate() {
                let digits = digits_of(idx, &counts);
                if (0..n).all(|k| (digits[k] != 0) == s.contains(&k)) {
                    values.push(z.re);
                }
            }
            out.push(SubsetResidual { label: label(&s), parties: s, values });
        }
    } else {
        for s in subsets(n) {
            let traced: Vec<&str> = (0..n)
                .filter(|k| !s.contains(k))
                .flat_map(|k| {
                    let (i, o) = w.party_legs(k);
                    [i.name.as_str(), o.name.as_str()]
                })
                .collect();
            let mut x = w.op().partial_trace(&traced)?;
            for &k in &s {
                let (i, o) = w.party_legs(k);
                x = local_symmetry(w.theory(), &x, i, o)?;
                x = project_output_traceless(&x, o)?;
            }
            out.push(SubsetResidual { label: label(&s), parties: s, values: vec![x.matrix().frobenius_norm()] });
        }
    }
    Ok(ResidualReport { trace, trace_target, trace_target_derived, projector_form: !explicit, subsets: out })
}

/// Validation thresholds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances {
    pub psd: f64,
    pub affine: f64,
    pub hermitian: f64,
    pub realness: f64,
    pub invariance: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { psd: 1e-8, affine: 1e-9, hermitian: 1e-10, realness: 1e-10, invariance: 1e-10 }
    }
}

/// One validation row.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub threshold: f64,
    pub passed: bool,
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Failing rows as `name=measured` pairs, or `ok`.
    pub fn summary(&self) -> String {
        let bad: Vec<String> = self
            .checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| format!("{}={:.3e} (threshold {:.1e})", c.name, c.measured, c.threshold))
            .collect();
        if bad.is_empty() {
            "ok".into()
        } else {
            bad.join(", ")
        }
    }
}

fn upper(name: &str, measured: f64, threshold: f64) -> Check {
    Check { name: name.into(), measured, threshold, passed: measured <= threshold, note: None }
}

/// Checks Hermiticity, theory structure, positivity, the trace and every
/// normalization residual.
pub fn validate_process(w: &ProcessMatrix, tol: &Tolerances) -> Result<ValidationReport> {
    let m = w.op().matrix();
    let mut checks = vec![upper("hermitian", m.hermiticity_deviation(), tol.hermitian)];
    match w.theory() {
        Theory::Qt => {}
        Theory::Rqt => {
            checks.push(upper("real", m.max_imag(), tol.realness));
            checks.push(upper("symmetric", m.symmetry_deviation(), tol.realness));
        }
        Theory::Twirled(rep) => checks.push(upper("invariant", rep.invariance_deviation(w.op())?, tol.invariance)),
    }
    let lmin = crate::operator_algebra::eigen::hermitian_min_eigenvalue(&m.hermitian_part());
    checks.push(Check { name: "psd".into(), measured: lmin, threshold: -tol.psd, passed: lmin >= -tol.psd, note: None });
    let res = normalization_residuals(w)?;
    let mut trace = upper("trace", res.trace_residual().abs(), tol.affine);
    if res.trace_target_derived {
        trace.note = Some(format!("target {} derived as the product of output dimensions", res.trace_target));
    }
    checks.push(trace);
    for s in &res.subsets {
        let mut c = upper(&format!("residual {}", s.label), s.max_abs(), tol.affine);
        if res.projector_form {
            c.note = Some("projector norm".into());
        }
        checks.push(c);
    }
    Ok(ValidationReport { checks })
}

/// Splits a bipartite process into the part visible to the theory's local
/// instruments and its orthogonal complement.
pub fn project_locally_accessible(w: &ProcessMatrix) -> Result<(Operator, Operator)> {
    if w.parties() != 2 {
        return Err(Error::Unsupported(format!("locally-accessible projection of a {}-party process", w.parties())));
    }
    let mut la = w.op().clone();
    for k in 0..2 {
        let (i, o) = w.party_legs(k);
        la = local_symmetry(w.theory(), &la, i, o)?;
    }
    let la = la.hermitian_part();
    let ga = w.op().sub(&la)?;
    Ok((la.with_inferred_field(), ga.with_inferred_field()))
}

/// `W_RQT = Re(d†(W_QT))` with `d†` the adjoint of recomplexification on
/// every party; legs keep their names and double their dimensions.
pub fn rqt_embed_process(w: &ProcessMatrix) -> Result<ProcessMatrix> {
    let report = validate_process(w, &Tolerances::default())?;
    if !matches!(w.theory(), Theory::Qt) || !report.passed() {
        return Err(Error::NotAProcess(format!("embedding needs a valid ordinary process: {}", report.summary())));
    }
    let mut cur = w.op().clone();
    for k in 0..w.parties() {
        let (i, o) = w.party_legs(k);
        let (i, o) = (i.clone(), o.clone());
        let half = cur.conjugate_local(&i.name, &coisometry(i.dim).adjoint(), None)?;
        let vo = coisometry(o.dim);
        let t0 = half.conjugate_local(&o.name, &vo.transpose(), None)?;
        let t1 = half.conjugate_local(&o.name, &vo.adjoint(), None)?;
        cur = t0.add(&t1)?;
    }
    ProcessMatrix::new(cur.re(), Theory::Rqt)
}

/// `ρ^{A1} ⊗ T^{A2 B1} ⊗ I^{B2}`: Alice's output reaches Bob's input
/// through the channel `T`.
pub fn causal_process(rho: &Operator, channel: &ChoiOperator, b2: SystemLabel, theory: Theory) -> Result<ProcessMatrix> {
    let op = rho.tensor(channel.op())?.tensor(&Operator::identity(vec![b2])?)?;
    ProcessMatrix::new(op, theory)
}

fn gaussian_hermitian<R: Rng + ?Sized>(n: usize, field: Field, rng: &mut R) -> Matrix {
    let mut m = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = if field == Field::Complex && i != j { rng.sample(StandardNormal) } else { 0.0 };
            m.set(i, j, C64::new(re, im));
            m.set(j, i, C64::new(re, -im));
        }
    }
    m
}

/// Random valid process: `I/Π d_in` plus a random direction orthogonal to
/// every normalization constraint, scaled to keep the operator positive
/// definite. Requires party dimensions up to `EXPLICIT_BASIS_MAX_DIM`.
pub fn random_process<R: Rng + ?Sized>(theory: Theory, legs: &[SystemLabel], rng: &mut R) -> Result<ProcessMatrix> {
    let base = ProcessMatrix::new(Operator::identity(legs.to_vec())?, theory.clone())?;
    let n = base.parties();
    let din: f64 = (0..n).map(|k| base.party_legs(k).0.dim as f64).product();
    let dim = base.op().dim();
    let mut h = Operator::new(legs.to_vec(), theory.field(), gaussian_hermitian(dim, theory.field(), rng))?;
    if let Theory::Twirled(rep) = &theory {
        let mut acc = h.clone();
        for g in 1..rep.order() {
            acc = acc.add(&rep.act_globally(&h, g)?)?;
        }
        h = acc.scale(1.0 / rep.order() as f64);
    }
    let bases = (0..n)
        .map(|k| {
            let (i, o) = base.party_legs(k);
            tangent_basis(&theory, i, o)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut products: Vec<Matrix> = vec![Matrix::identity(1)];
    for b in &bases {
        let d = b.input.dim * b.output.dim;
        let local: Vec<Matrix> =
            std::iter::once(Matrix::identity(d)).chain(b.elements.iter().map(|e| e.matrix().clone())).collect();
        products = products.iter().flat_map(|p| local.iter().map(move |l| p.kron(l))).collect();
    }
    let mut free = h.matrix().clone();
    for p in &products {
        let c = p.hs_inner(h.matrix()) / p.hs_inner(p);
        free.axpy(-c, p);
    }
    let free = free.hermitian_part();
    let lmin = crate::operator_algebra::eigen::hermitian_min_eigenvalue(&free);
    let scale = if lmin < 0.0 { rng.random_range(0.3..0.95) / (din * -lmin) } else { 1.0 };
    let mut mat = Matrix::identity(dim).scale_re(1.0 / din);
    mat.axpy(C64::new(scale, 0.0), &free);
    let op = Operator::from_matrix(legs.to_vec(), mat)?;
    let op = if theory.field() == Field::Real { op.re() } else { op };
    ProcessMatrix::new(op, theory)
}
