use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::eigen;
use super::matrix::{Matrix, C64, ZERO};
use crate::error::{shape, Error, Result};

/// Hermiticity tolerance for spectral queries.
pub const HERMITIAN_TOL: f64 = 1e-10;

/// A named tensor factor.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SystemLabel {
    pub name: String,
    pub dim: usize,
}

impl SystemLabel {
    pub fn new(name: impl Into<String>, dim: usize) -> Self {
        SystemLabel { name: name.into(), dim }
    }
}

/// Scalar field an operator is tagged with.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Field {
    Real,
    Complex,
}

impl Field {
    pub fn name(self) -> &'static str {
        match self {
            Field::Real => "real",
            Field::Complex => "complex",
        }
    }

    fn join(self, other: Field) -> Field {
        if self == Field::Real && other == Field::Real {
            Field::Real
        } else {
            Field::Complex
        }
    }
}

/// Square operator on an ordered list of named systems.
///
/// The first system is the most significant factor of the row/column index.
/// Real-tagged operators have every imaginary part exactly zero.
#[derive(Clone, Debug, PartialEq)]
pub struct Operator {
    systems: Vec<SystemLabel>,
    field: Field,
    mat: Matrix,
}

fn check_systems(systems: &[SystemLabel]) -> Result<usize> {
    let mut seen = HashSet::new();
    let mut total = 1usize;
    for s in systems {
        if s.dim == 0 {
            return shape(format!("system {} has dimension 0", s.name));
        }
        if !seen.insert(s.name.as_str()) {
            return Err(Error::NameClash(s.name.clone()));
        }
        total *= s.dim;
    }
    Ok(total)
}

/// Index offsets of every digit tuple over `dims` restricted to the
/// positions in `pick`, using the full strides of `dims`.
fn sub_offsets(dims: &[usize], pick: &[usize]) -> Vec<usize> {
    let mut strides = vec![1usize; dims.len()];
    for k in (0..dims.len().saturating_sub(1)).rev() {
        strides[k] = strides[k + 1] * dims[k + 1];
    }
    let mut offs = vec![0usize];
    for &p in pick {
        let mut next = Vec::with_capacity(offs.len() * dims[p]);
        for &o in &offs {
            for i in 0..dims[p] {
                next.push(o + i * strides[p]);
            }
        }
        offs = next;
    }
    offs
}

impl Operator {
    /// Builds an operator, validating dimensions, names and the field tag.
    pub fn new(systems: Vec<SystemLabel>, field: Field, mat: Matrix) -> Result<Self> {
        let n = check_systems(&systems)?;
        if mat.rows() != n || mat.cols() != n {
            return shape(format!("expected {n}×{n} entries, got {}×{}", mat.rows(), mat.cols()));
        }
        if field == Field::Real && !mat.is_real() {
            return shape("real-tagged operator has nonzero imaginary parts");
        }
        Ok(Operator { systems, field, mat })
    }

    /// Builds an operator tagged real exactly when all imaginary parts vanish.
    pub fn from_matrix(systems: Vec<SystemLabel>, mat: Matrix) -> Result<Self> {
        let field = if mat.is_real() { Field::Real } else { Field::Complex };
        Self::new(systems, field, mat)
    }

    /// Single-system operator.
    pub fn on(name: &str, mat: Matrix) -> Result<Self> {
        let d = mat.rows();
        Self::from_matrix(vec![SystemLabel::new(name, d)], mat)
    }

    pub fn identity(systems: Vec<SystemLabel>) -> Result<Self> {
        let n = check_systems(&systems)?;
        Self::new(systems, Field::Real, Matrix::identity(n))
    }

    pub fn zeros(systems: Vec<SystemLabel>) -> Result<Self> {
        let n = check_systems(&systems)?;
        Self::new(systems, Field::Real, Matrix::zeros(n, n))
    }

    pub fn systems(&self) -> &[SystemLabel] {
        &self.systems
    }

    pub fn names(&self) -> Vec<&str> {
        self.systems.iter().map(|s| s.name.as_str()).collect()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.systems.iter().map(|s| s.dim).collect()
    }

    pub fn field(&self) -> Field {
        self.field
    }

    pub fn matrix(&self) -> &Matrix {
        &self.mat
    }

    pub fn into_matrix(self) -> Matrix {
        self.mat
    }

    /// Total dimension `Π dims`.
    pub fn dim(&self) -> usize {
        self.mat.rows()
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.mat.get(i, j)
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.systems
            .iter()
            .position(|s| s.name == name)
            .ok_or_else(|| Error::NameClash(format!("unknown system {name}")))
    }

    /// Same data with the field re-derived from the entries.
    pub fn with_inferred_field(self) -> Self {
        let field = if self.mat.is_real() { Field::Real } else { Field::Complex };
        Operator { field, ..self }
    }

    /// Replaces the matrix, keeping the system list; field is inferred.
    pub fn with_matrix(&self, mat: Matrix) -> Result<Self> {
        Self::from_matrix(self.systems.clone(), mat)
    }

    /// Reinterprets the data under a new system list with the same total dimension.
    pub fn relabel(&self, systems: Vec<SystemLabel>) -> Result<Self> {
        Self::new(systems, self.field, self.mat.clone())
    }

    /// Kronecker product; systems are concatenated in order.
    pub fn tensor(&self, other: &Operator) -> Result<Operator> {
        let mut systems = self.systems.clone();
        systems.extend(other.systems.iter().cloned());
        check_systems(&systems)?;
        Ok(Operator {
            systems,
            field: self.field.join(other.field),
            mat: self.mat.kron(&other.mat),
        })
    }

    /// Traces out the named systems.
    pub fn partial_trace(&self, traced: &[&str]) -> Result<Operator> {
        let mut tr_pos = Vec::new();
        for name in traced {
            let p = self.index_of(name)?;
            if !tr_pos.contains(&p) {
                tr_pos.push(p);
            }
        }
        let keep_pos: Vec<usize> = (0..self.systems.len()).filter(|p| !tr_pos.contains(p)).collect();
        let dims = self.dims();
        let ko = sub_offsets(&dims, &keep_pos);
        let to = sub_offsets(&dims, &tr_pos);
        let nk = ko.len();
        let mut out = Matrix::zeros(nk, nk);
        for (r, &kr) in ko.iter().enumerate() {
            for (c, &kc) in ko.iter().enumerate() {
                let mut s = ZERO;
                for &t in &to {
                    s += self.mat.get(kr + t, kc + t);
                }
                out.set(r, c, s);
            }
        }
        let systems = keep_pos.iter().map(|&p| self.systems[p].clone()).collect();
        Ok(Operator { systems, field: self.field, mat: out })
    }

    /// Reorders systems to the given name order.
    pub fn permute(&self, order: &[&str]) -> Result<Operator> {
        if order.len() != self.systems.len() {
            return shape("permutation must list every system exactly once");
        }
        let mut pos = Vec::with_capacity(order.len());
        for name in order {
            let p = self.index_of(name)?;
            if pos.contains(&p) {
                return Err(Error::NameClash((*name).to_string()));
            }
            pos.push(p);
        }
        let map = sub_offsets(&self.dims(), &pos);
        let n = map.len();
        let mat = Matrix::from_fn(n, n, |i, j| self.mat.get(map[i], map[j]));
        let systems = pos.iter().map(|&p| self.systems[p].clone()).collect();
        Ok(Operator { systems, field: self.field, mat })
    }

    /// Transposes the indices of the named systems.
    pub fn partial_transpose(&self, names: &[&str]) -> Result<Operator> {
        let mut pos = Vec::new();
        for name in names {
            pos.push(self.index_of(name)?);
        }
        let rest: Vec<usize> = (0..self.systems.len()).filter(|p| !pos.contains(p)).collect();
        let dims = self.dims();
        let po = sub_offsets(&dims, &pos);
        let ro = sub_offsets(&dims, &rest);
        let mut out = self.mat.clone();
        for &r1 in &ro {
            for &r2 in &ro {
                for &p1 in &po {
                    for &p2 in &po {
                        out.set(r1 + p1, r2 + p2, self.mat.get(r1 + p2, r2 + p1));
                    }
                }
            }
        }
        Ok(Operator { systems: self.systems.clone(), field: self.field, mat: out })
    }

    /// `(K ⊗ I) W (K ⊗ I)†` with `K` acting on one system.
    ///
    /// `K` may be rectangular; the system then takes dimension `K.rows()`
    /// and, when given, the new name.
    pub fn conjugate_local(&self, name: &str, k: &Matrix, rename: Option<&str>) -> Result<Operator> {
        let p = self.index_of(name)?;
        let d = self.systems[p].dim;
        if k.cols() != d {
            return shape(format!("local map expects dimension {}, system {name} has {d}", k.cols()));
        }
        let left: usize = self.systems[..p].iter().map(|s| s.dim).product();
        let right: usize = self.systems[p + 1..].iter().map(|s| s.dim).product();
        let half = apply_rows(&self.mat, left, right, k);
        let full = apply_rows(&half.adjoint(), left, right, k).adjoint();
        let mut systems = self.systems.clone();
        systems[p] = SystemLabel::new(rename.unwrap_or(name), k.rows());
        check_systems(&systems)?;
        let field = if self.field == Field::Real && k.is_real() { Field::Real } else { Field::Complex };
        Ok(Operator { systems, field, mat: full })
    }

    pub fn adjoint(&self) -> Operator {
        Operator { systems: self.systems.clone(), field: self.field, mat: self.mat.adjoint() }
    }

    pub fn transpose(&self) -> Operator {
        Operator { systems: self.systems.clone(), field: self.field, mat: self.mat.transpose() }
    }

    pub fn conj(&self) -> Operator {
        Operator { systems: self.systems.clone(), field: self.field, mat: self.mat.conj() }
    }

    /// Entrywise real part, tagged real.
    pub fn re(&self) -> Operator {
        Operator { systems: self.systems.clone(), field: Field::Real, mat: self.mat.re() }
    }

    /// `(W + W†)/2`.
    pub fn hermitian_part(&self) -> Operator {
        Operator { systems: self.systems.clone(), field: self.field, mat: self.mat.hermitian_part() }
    }

    fn same_systems(&self, other: &Operator) -> Result<()> {
        if self.systems != other.systems {
            return shape(format!("system lists differ: {:?} vs {:?}", self.names(), other.names()));
        }
        Ok(())
    }

    pub fn add(&self, other: &Operator) -> Result<Operator> {
        self.same_systems(other)?;
        Ok(Operator {
            systems: self.systems.clone(),
            field: self.field.join(other.field),
            mat: self.mat.add(&other.mat),
        })
    }

    pub fn sub(&self, other: &Operator) -> Result<Operator> {
        self.same_systems(other)?;
        Ok(Operator {
            systems: self.systems.clone(),
            field: self.field.join(other.field),
            mat: self.mat.sub(&other.mat),
        })
    }

    pub fn scale(&self, s: f64) -> Operator {
        Operator { systems: self.systems.clone(), field: self.field, mat: self.mat.scale_re(s) }
    }

    pub fn matmul(&self, other: &Operator) -> Result<Operator> {
        self.same_systems(other)?;
        Ok(Operator {
            systems: self.systems.clone(),
            field: self.field.join(other.field),
            mat: self.mat.matmul(&other.mat),
        })
    }

    pub fn trace(&self) -> C64 {
        self.mat.trace()
    }

    /// Hilbert–Schmidt inner product `Tr(a† b)`.
    pub fn hs_inner(&self, other: &Operator) -> Result<C64> {
        self.same_systems(other)?;
        Ok(self.mat.hs_inner(&other.mat))
    }

    pub fn max_abs_diff(&self, other: &Operator) -> Result<f64> {
        self.same_systems(other)?;
        Ok(self.mat.max_abs_diff(&other.mat))
    }

    fn check_hermitian(&self) -> Result<()> {
        let dev = self.mat.hermiticity_deviation();
        if dev > HERMITIAN_TOL {
            return Err(Error::NotHermitian(dev));
        }
        Ok(())
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> Result<f64> {
        self.check_hermitian()?;
        Ok(eigen::hermitian_min_eigenvalue(&self.mat))
    }

    /// Ascending spectrum of the Hermitian part.
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        self.check_hermitian()?;
        Ok(eigen::hermitian_eigenvalues(&self.mat))
    }

    /// Matrix JSON representation.
    pub fn to_json(&self) -> Value {
        let entries: Vec<Value> = match self.field {
            Field::Real => self.mat.data().iter().map(|z| json!(z.re)).collect(),
            Field::Complex => self.mat.data().iter().map(|z| json!([z.re, z.im])).collect(),
        };
        json!({
            "systems": self.systems,
            "field": self.field.name(),
            "entries": entries,
        })
    }

    /// Parses the Matrix JSON representation.
    pub fn from_json(v: &Value) -> Result<Operator> {
        let systems: Vec<SystemLabel> = serde_json::from_value(
            v.get("systems").cloned().ok_or_else(|| Error::Format("missing \"systems\"".into()))?,
        )?;
        let field = match v.get("field").and_then(Value::as_str) {
            Some("real") => Field::Real,
            Some("complex") => Field::Complex,
            other => return Err(Error::Format(format!("bad field tag {other:?}"))),
        };
        let entries = v
            .get("entries")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::Format("missing \"entries\" array".into()))?;
        let n = check_systems(&systems)?;
        if entries.len() != n * n {
            return shape(format!("expected {} entries, got {}", n * n, entries.len()));
        }
        let mut data = Vec::with_capacity(n * n);
        for e in entries {
            let z = match (field, e) {
                (Field::Real, Value::Number(x)) => C64::new(num(x)?, 0.0),
                (Field::Complex, Value::Array(p)) if p.len() == 2 => match (&p[0], &p[1]) {
                    (Value::Number(a), Value::Number(b)) => C64::new(num(a)?, num(b)?),
                    _ => return Err(Error::Format("complex entry must be [re, im] numbers".into())),
                },
                _ => return Err(Error::Format(format!("entry {e} does not match field {}", field.name()))),
            };
            data.push(z);
        }
        Operator::new(systems, field, Matrix::from_vec(n, n, data))
    }
}

fn num(x: &serde_json::Number) -> Result<f64> {
    x.as_f64().ok_or_else(|| Error::Format(format!("non-finite number {x}")))
}

/// Left-multiplies the middle tensor factor of the row index by `k`.
///
/// Rows of `m` are indexed `(l, s, r)` with sizes `(left, k.cols(), right)`.
fn apply_rows(m: &Matrix, left: usize, right: usize, k: &Matrix) -> Matrix {
    let (dn, d) = (k.rows(), k.cols());
    let cols = m.cols();
    let mut out = Matrix::zeros(left * dn * right, cols);
    let src = m.data();
    let dst = out.data_mut();
    for l in 0..left {
        for s in 0..dn {
            for s0 in 0..d {
                let kv = k.get(s, s0);
                if kv == ZERO {
                    continue;
                }
                for r in 0..right {
                    let orow = ((l * dn + s) * right + r) * cols;
                    let irow = ((l * d + s0) * right + r) * cols;
                    let (o, i) = (&mut dst[orow..orow + cols], &src[irow..irow + cols]);
                    for (a, b) in o.iter_mut().zip(i) {
                        *a += kv * b;
                    }
                }
            }
        }
    }
    out
}
