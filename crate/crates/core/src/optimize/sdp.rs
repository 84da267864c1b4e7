//! Backend-neutral SDP standard form, solver results and post-solve polishing.
//!
//! A problem optimizes `⟨C, X⟩ + constant` over block-diagonal real symmetric
//! `X = ⊕_k X_k ⪰ 0` subject to `⟨A_j, X⟩ = b_j`. Blocks are dense row-major.

use crate::error::{shape, Error, Result};
use crate::operator_algebra::eigen;

use super::{clarabel_backend, ipm};

/// One linear equality `Σ_k ⟨A_{j,k}, X_k⟩ = rhs`.
#[derive(Clone, Debug, PartialEq)]
pub struct Equality {
    /// `(block index, dense symmetric coefficient)`; absent blocks are zero.
    pub terms: Vec<(usize, Vec<f64>)>,
    pub rhs: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SdpProblem {
    pub sizes: Vec<usize>,
    pub objective: Vec<Vec<f64>>,
    pub constant: f64,
    pub equalities: Vec<Equality>,
    pub maximize: bool,
    /// Strictly feasible point used to restore positivity after polishing.
    pub interior_point: Option<Vec<Vec<f64>>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Backend {
    /// Interior-point conic solver with a PSD cone.
    Clarabel,
    /// Dense primal-dual interior-point method (HKM direction, Mehrotra
    /// predictor-corrector).
    Ipm,
}

impl Backend {
    pub fn name(self) -> &'static str {
        match self {
            Backend::Clarabel => "clarabel",
            Backend::Ipm => "ipm",
        }
    }

    pub fn from_name(s: &str) -> Result<Backend> {
        match s {
            "clarabel" => Ok(Backend::Clarabel),
            "ipm" => Ok(Backend::Ipm),
            other => Err(Error::Unsupported(format!("unknown solver backend {other:?} (expected clarabel or ipm)"))),
        }
    }
}

/// Feasibility and relative-gap targets.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverTolerances {
    pub feasibility: f64,
    pub gap: f64,
}

impl Default for SolverTolerances {
    fn default() -> Self {
        SolverTolerances { feasibility: 1e-10, gap: 1e-10 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Optimal,
    NearOptimal,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Diagnostics {
    pub backend: &'static str,
    pub iterations: u32,
    /// Backend-reported residuals before polishing.
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub raw_equality_residual: f64,
    pub raw_min_eigenvalue: f64,
    /// After polishing.
    pub equality_residual: f64,
    pub min_eigenvalue: f64,
    pub interior_weight: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverResult {
    pub blocks: Vec<Vec<f64>>,
    pub value: f64,
    pub status: Status,
    pub diagnostics: Diagnostics,
}

/// Unpolished backend output.
pub(crate) struct RawSolution {
    pub blocks: Vec<Vec<f64>>,
    pub status: Status,
    pub iterations: u32,
    pub primal_residual: f64,
    pub dual_residual: f64,
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn matmul(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k];
            if aik == 0.0 {
                continue;
            }
            let (row, brow) = (&mut out[i * n..(i + 1) * n], &b[k * n..(k + 1) * n]);
            for (o, bv) in row.iter_mut().zip(brow) {
                *o += aik * bv;
            }
        }
    }
    out
}

pub(crate) fn symmetrize(a: &mut [f64], n: usize) {
    for i in 0..n {
        for j in (i + 1)..n {
            let m = 0.5 * (a[i * n + j] + a[j * n + i]);
            a[i * n + j] = m;
            a[j * n + i] = m;
        }
    }
}

pub(crate) fn identity(n: usize, s: f64) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        m[i * n + i] = s;
    }
    m
}

/// Lower Cholesky factor, or `None` if `a` is not numerically positive definite.
pub(crate) fn cholesky(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= l[j * n + k] * l[j * n + k];
        }
        if d.is_nan() || d <= 0.0 {
            return None;
        }
        let d = d.sqrt();
        l[j * n + j] = d;
        for i in (j + 1)..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / d;
        }
    }
    Some(l)
}

/// Solves `L Lᵀ x = b`.
pub(crate) fn chol_solve(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut y = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            y[i] -= l[i * n + k] * y[k];
        }
        y[i] /= l[i * n + i];
    }
    for i in (0..n).rev() {
        for k in (i + 1)..n {
            y[i] -= l[k * n + i] * y[k];
        }
        y[i] /= l[i * n + i];
    }
    y
}

/// `L⁻¹ B L⁻ᵀ` for lower-triangular `L`.
pub(crate) fn congruence_inverse(l: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let forward = |m: &[f64]| {
        let mut y = m.to_vec();
        for c in 0..n {
            for i in 0..n {
                let mut s = y[i * n + c];
                for k in 0..i {
                    s -= l[i * n + k] * y[k * n + c];
                }
                y[i * n + c] = s / l[i * n + i];
            }
        }
        y
    };
    let half = forward(b);
    let mut t = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            t[j * n + i] = half[i * n + j];
        }
    }
    let mut out = forward(&t);
    symmetrize(&mut out, n);
    out
}

pub(crate) fn min_eig(a: &[f64], n: usize) -> f64 {
    if n == 0 {
        return f64::INFINITY;
    }
    eigen::symmetric_eigenvalues(a, n)[0]
}

impl SdpProblem {
    pub fn num_equalities(&self) -> usize {
        self.equalities.len()
    }

    /// Checks dimensions and symmetry of every coefficient.
    pub fn validate(&self) -> Result<()> {
        let nb = self.sizes.len();
        let check = |m: &[f64], k: usize, what: &str| -> Result<()> {
            let n = self.sizes[k];
            if m.len() != n * n {
                return shape(format!("{what} on block {k} has {} entries, expected {}", m.len(), n * n));
            }
            for i in 0..n {
                for j in (i + 1)..n {
                    if (m[i * n + j] - m[j * n + i]).abs() > 1e-12 * (1.0 + m[i * n + j].abs()) {
                        return shape(format!("{what} on block {k} is not symmetric"));
                    }
                }
            }
            Ok(())
        };
        if self.objective.len() != nb {
            return shape("objective needs one matrix per block");
        }
        for (k, c) in self.objective.iter().enumerate() {
            check(c, k, "objective")?;
        }
        for (j, e) in self.equalities.iter().enumerate() {
            for (k, a) in &e.terms {
                if *k >= nb {
                    return shape(format!("equality {j} refers to block {k}"));
                }
                check(a, *k, &format!("equality {j}"))?;
            }
        }
        if let Some(x0) = &self.interior_point {
            if x0.len() != nb {
                return shape("interior point needs one matrix per block");
            }
            for (k, x) in x0.iter().enumerate() {
                check(x, k, "interior point")?;
            }
        }
        Ok(())
    }

    pub fn objective_value(&self, blocks: &[Vec<f64>]) -> f64 {
        self.constant + self.objective.iter().zip(blocks).map(|(c, x)| dot(c, x)).sum::<f64>()
    }

    /// `A(X) − b`.
    pub fn equality_residuals(&self, blocks: &[Vec<f64>]) -> Vec<f64> {
        self.equalities
            .iter()
            .map(|e| e.terms.iter().map(|(k, a)| dot(a, &blocks[*k])).sum::<f64>() - e.rhs)
            .collect()
    }

    pub fn min_eigenvalue(&self, blocks: &[Vec<f64>]) -> f64 {
        blocks.iter().zip(&self.sizes).map(|(x, &n)| min_eig(x, n)).fold(f64::INFINITY, f64::min)
    }

    fn gram(&self) -> Vec<f64> {
        let m = self.equalities.len();
        let mut g = vec![0.0; m * m];
        for i in 0..m {
            for j in i..m {
                let mut s = 0.0;
                for (ki, ai) in &self.equalities[i].terms {
                    for (kj, aj) in &self.equalities[j].terms {
                        if ki == kj {
                            s += dot(ai, aj);
                        }
                    }
                }
                g[i * m + j] = s;
                g[j * m + i] = s;
            }
        }
        g
    }

    /// Orthogonal projection onto the affine set `A(X) = b`.
    fn project_affine(&self, blocks: &mut [Vec<f64>]) {
        let m = self.equalities.len();
        if m == 0 {
            return;
        }
        let Some(l) = cholesky(&self.gram(), m) else {
            return;
        };
        for _ in 0..2 {
            let r = self.equality_residuals(blocks);
            let lam = chol_solve(&l, m, &r);
            for (e, &lj) in self.equalities.iter().zip(&lam) {
                for (k, a) in &e.terms {
                    for (x, av) in blocks[*k].iter_mut().zip(a) {
                        *x -= lj * av;
                    }
                }
            }
        }
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

/// Symmetrizes, projects onto the affine set and, when an interior point is
/// available and positivity is violated, mixes towards it just enough to
/// restore `X ⪰ 0`.
fn polish(p: &SdpProblem, raw: RawSolution) -> SolverResult {
    let mut blocks = raw.blocks;
    let raw_equality_residual = max_abs(&p.equality_residuals(&blocks));
    let raw_min_eigenvalue = p.min_eigenvalue(&blocks);
    for (x, &n) in blocks.iter_mut().zip(&p.sizes) {
        symmetrize(x, n);
    }
    p.project_affine(&mut blocks);
    let mut interior_weight = 0.0;
    if let Some(x0) = &p.interior_point {
        let lmin = p.min_eigenvalue(&blocks);
        if lmin < 0.0 {
            let l0 = p.min_eigenvalue(x0);
            let t = (-lmin / (l0 - lmin)) * (1.0 + 1e-6);
            for (x, x0) in blocks.iter_mut().zip(x0) {
                for (a, b) in x.iter_mut().zip(x0) {
                    *a = (1.0 - t) * *a + t * b;
                }
            }
            interior_weight = t;
        }
    }
    let equality_residual = max_abs(&p.equality_residuals(&blocks));
    let min_eigenvalue = p.min_eigenvalue(&blocks);
    let value = p.objective_value(&blocks);
    SolverResult {
        blocks,
        value,
        status: raw.status,
        diagnostics: Diagnostics {
            backend: "",
            iterations: raw.iterations,
            primal_residual: raw.primal_residual,
            dual_residual: raw.dual_residual,
            raw_equality_residual,
            raw_min_eigenvalue,
            equality_residual,
            min_eigenvalue,
            interior_weight,
        },
    }
}

/// Solves the problem with the chosen backend and polishes the result.
pub fn solve(p: &SdpProblem, backend: Backend, tol: &SolverTolerances) -> Result<SolverResult> {
    p.validate()?;
    let raw = match backend {
        Backend::Clarabel => clarabel_backend::solve(p, tol)?,
        Backend::Ipm => ipm::solve(p, tol)?,
    };
    let mut out = polish(p, raw);
    out.diagnostics.backend = backend.name();
    Ok(out)
}
