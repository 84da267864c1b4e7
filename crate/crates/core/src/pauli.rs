//! Multi-qubit Pauli strings, Hilbert–Schmidt decomposition and the
//! bipartite support classification.

use std::fmt;

use crate::error::{shape, Error, Result};
use crate::operator_algebra::{Matrix, Operator, SystemLabel, C64, ONE, ZERO};

/// Bipartite qubit legs in canonical order.
pub const BIPARTITE_LEGS: [&str; 4] = ["A1", "A2", "B1", "B2"];

/// Support types permitted by ordinary bipartite process normalization.
const OCB_ALLOWED: [&[&str]; 8] = [
    &[],
    &["A1"],
    &["B1"],
    &["A1", "B1"],
    &["A2", "B1"],
    &["A1", "B2"],
    &["A1", "A2", "B1"],
    &["A1", "B1", "B2"],
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub const ALL: [Pauli; 4] = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];

    pub fn matrix(self) -> Matrix {
        let i = C64::new(0.0, 1.0);
        match self {
            Pauli::I => Matrix::identity(2),
            Pauli::X => Matrix::from_vec(2, 2, vec![ZERO, ONE, ONE, ZERO]),
            Pauli::Y => Matrix::from_vec(2, 2, vec![ZERO, -i, i, ZERO]),
            Pauli::Z => Matrix::from_vec(2, 2, vec![ONE, ZERO, ZERO, -ONE]),
        }
    }

    pub fn from_char(c: char) -> Option<Pauli> {
        match c {
            'I' => Some(Pauli::I),
            'X' => Some(Pauli::X),
            'Y' => Some(Pauli::Y),
            'Z' => Some(Pauli::Z),
            _ => None,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }

    /// Matrix entry at row `r` of the single nonzero in that row, and its column.
    fn row_entry(self, r: usize) -> (usize, C64) {
        match self {
            Pauli::I => (r, ONE),
            Pauli::X => (r ^ 1, ONE),
            Pauli::Y => (r ^ 1, if r == 0 { C64::new(0.0, -1.0) } else { C64::new(0.0, 1.0) }),
            Pauli::Z => (r, if r == 0 { ONE } else { -ONE }),
        }
    }
}

/// Tensor product of Paulis aligned with a list of qubit systems.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PauliString {
    systems: Vec<String>,
    labels: Vec<Pauli>,
}

impl PauliString {
    pub fn new(systems: Vec<String>, labels: Vec<Pauli>) -> Result<Self> {
        if systems.len() != labels.len() {
            return shape(format!("{} labels for {} systems", labels.len(), systems.len()));
        }
        Ok(PauliString { systems, labels })
    }

    /// Parses a label such as `"XYXY"` against the given systems.
    pub fn parse(systems: &[&str], label: &str) -> Result<Self> {
        let labels = label
            .chars()
            .map(|c| Pauli::from_char(c).ok_or_else(|| Error::Format(format!("bad Pauli label {c:?}"))))
            .collect::<Result<Vec<_>>>()?;
        Self::new(systems.iter().map(|s| s.to_string()).collect(), labels)
    }

    /// String on the canonical bipartite legs `A1, A2, B1, B2`.
    pub fn bipartite(label: &str) -> Result<Self> {
        Self::parse(&BIPARTITE_LEGS, label)
    }

    pub fn systems(&self) -> &[String] {
        &self.systems
    }

    pub fn labels(&self) -> &[Pauli] {
        &self.labels
    }

    /// Compact label such as `XYXY`.
    pub fn label(&self) -> String {
        self.labels.iter().map(|p| p.as_char()).collect()
    }

    /// Matrix realization on qubit systems.
    pub fn to_operator(&self) -> Operator {
        let mut m = Matrix::identity(1);
        for p in &self.labels {
            m = m.kron(&p.matrix());
        }
        let systems = self.systems.iter().map(|s| SystemLabel::new(s.clone(), 2)).collect();
        Operator::from_matrix(systems, m).expect("Pauli string systems are distinct qubits")
    }

    pub fn y_count(&self) -> usize {
        self.labels.iter().filter(|&&p| p == Pauli::Y).count()
    }

    /// `Tr[S · M]` using the monomial structure of `S`.
    fn trace_with(&self, m: &Matrix) -> C64 {
        let n = self.labels.len();
        let mut s = ZERO;
        for i in 0..(1usize << n) {
            let mut j = 0usize;
            let mut phase = ONE;
            for (k, p) in self.labels.iter().enumerate() {
                let bit = (i >> (n - 1 - k)) & 1;
                let (col, v) = p.row_entry(bit);
                j |= col << (n - 1 - k);
                phase *= v;
            }
            s += phase * m.get(j, i);
        }
        s
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Set of legs on which a Pauli string acts nontrivially.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SupportType {
    systems: Vec<String>,
    legs: Vec<String>,
}

impl SupportType {
    pub fn legs(&self) -> &[String] {
        &self.legs
    }

    pub fn is_empty(&self) -> bool {
        self.legs.is_empty()
    }
}

impl fmt::Display for SupportType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.legs.is_empty() {
            f.write_str("1")
        } else {
            f.write_str(&self.legs.concat())
        }
    }
}

pub fn support_of(s: &PauliString) -> SupportType {
    let legs = s
        .systems
        .iter()
        .zip(&s.labels)
        .filter(|(_, &p)| p != Pauli::I)
        .map(|(n, _)| n.clone())
        .collect();
    SupportType { systems: s.systems.clone(), legs }
}

/// Whether a bipartite qubit support type is one of the eight allowed ones.
pub fn is_ocb_allowed(t: &SupportType) -> Result<bool> {
    if t.systems.iter().map(String::as_str).ne(BIPARTITE_LEGS) {
        return Err(Error::Unsupported(format!(
            "support classification needs legs A1,A2,B1,B2, got {}",
            t.systems.join(",")
        )));
    }
    Ok(OCB_ALLOWED.iter().any(|a| a.iter().copied().eq(t.legs.iter().map(String::as_str))))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Parity {
    Even,
    Odd,
}

/// Parity of the number of `Y` labels on the given legs.
pub fn y_parity(s: &PauliString, legs: &[&str]) -> Result<Parity> {
    let mut count = 0;
    for leg in legs {
        let k = s
            .systems
            .iter()
            .position(|n| n == leg)
            .ok_or_else(|| Error::NameClash(format!("unknown leg {leg}")))?;
        if s.labels[k] == Pauli::Y {
            count += 1;
        }
    }
    Ok(if count % 2 == 0 { Parity::Even } else { Parity::Odd })
}

/// Coefficients `w_s = Tr[s·W]/2ⁿ` over all `4ⁿ` Pauli strings.
///
/// Index order is base 4 with `I, X, Y, Z` as digits and the first
/// system most significant.
#[derive(Clone, Debug)]
pub struct PauliDecomposition {
    systems: Vec<String>,
    coeffs: Vec<C64>,
}

impl PauliDecomposition {
    pub fn systems(&self) -> &[String] {
        &self.systems
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    fn string_at(&self, idx: usize) -> PauliString {
        let n = self.systems.len();
        let labels = (0..n).map(|k| Pauli::ALL[(idx >> (2 * (n - 1 - k))) & 3]).collect();
        PauliString { systems: self.systems.clone(), labels }
    }

    fn index_of(&self, s: &PauliString) -> Result<usize> {
        if s.systems != self.systems {
            return shape("Pauli string systems differ from the decomposition");
        }
        Ok(s.labels.iter().fold(0, |acc, &p| acc * 4 + p as usize))
    }

    pub fn get(&self, s: &PauliString) -> Result<C64> {
        Ok(self.coeffs[self.index_of(s)?])
    }

    /// Coefficient of a compact label such as `"ZIII"`.
    pub fn coefficient(&self, label: &str) -> Result<C64> {
        let names: Vec<&str> = self.systems.iter().map(String::as_str).collect();
        self.get(&PauliString::parse(&names, label)?)
    }

    pub fn iter(&self) -> impl Iterator<Item = (PauliString, C64)> + '_ {
        self.coeffs.iter().enumerate().map(|(i, &w)| (self.string_at(i), w))
    }

    /// `Σ w_s s`.
    pub fn reconstruct(&self) -> Operator {
        let n = self.systems.len();
        let dim = 1usize << n;
        let mut m = Matrix::zeros(dim, dim);
        for (s, w) in self.iter() {
            if w == ZERO {
                continue;
            }
            for i in 0..dim {
                let mut j = 0usize;
                let mut phase = ONE;
                for (k, p) in s.labels.iter().enumerate() {
                    let bit = (i >> (n - 1 - k)) & 1;
                    let (col, v) = p.row_entry(bit);
                    j |= col << (n - 1 - k);
                    phase *= v;
                }
                m.set(i, j, m.get(i, j) + w * phase);
            }
        }
        let systems = self.systems.iter().map(|s| SystemLabel::new(s.clone(), 2)).collect();
        Operator::from_matrix(systems, m).expect("qubit systems")
    }
}

/// Pauli decomposition of an operator on qubit systems.
pub fn decompose(op: &Operator) -> Result<PauliDecomposition> {
    if op.systems().iter().any(|s| s.dim != 2) {
        return shape("Pauli decomposition needs every system to be a qubit");
    }
    let n = op.systems().len();
    if n > 8 {
        return shape("Pauli decomposition limited to 8 qubits");
    }
    let systems: Vec<String> = op.systems().iter().map(|s| s.name.clone()).collect();
    let scale = 1.0 / (1usize << n) as f64;
    let mut dec = PauliDecomposition { systems, coeffs: vec![ZERO; 1 << (2 * n)] };
    for idx in 0..dec.coeffs.len() {
        let s = dec.string_at(idx);
        dec.coeffs[idx] = s.trace_with(op.matrix()) * scale;
    }
    Ok(dec)
}

/// Coefficients on OCB-forbidden supports with `|w| > 1e-12`, sorted by
/// descending magnitude and then lexicographically by label.
pub fn forbidden_coefficients(w: &Operator) -> Result<Vec<(PauliString, f64)>> {
    if w.names() != BIPARTITE_LEGS || w.dim() != 16 {
        return shape("forbidden coefficients need a 16×16 operator on A1,A2,B1,B2");
    }
    let dec = decompose(w)?;
    let mut out = Vec::new();
    for (s, c) in dec.iter() {
        if c.re.abs() > 1e-12 && !is_ocb_allowed(&support_of(&s))? {
            out.push((s, c.re));
        }
    }
    out.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()).then_with(|| a.0.labels.cmp(&b.0.labels)));
    Ok(out)
}
