//! Standard-form translation for the Clarabel conic solver.
//!
//! Each block is vectorized as its upper triangle, column by column, with
//! off-diagonal entries scaled by √2 so that `svec(A)·svec(X) = ⟨A, X⟩`.
//! Rows: equalities in the zero cone, then `−svec(X_k) + s = 0` with `s` in
//! the PSD triangle cone of each block.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT, SupportedConeT::*,
};

use crate::error::{Error, Result};

use super::sdp::{RawSolution, SdpProblem, SolverTolerances, Status};

fn svec_len(n: usize) -> usize {
    n * (n + 1) / 2
}

/// `(svec index, scale)` of entry `(i, j)` with `i ≤ j`.
fn svec_entries(n: usize) -> impl Iterator<Item = (usize, usize, usize, f64)> {
    (0..n).flat_map(move |j| {
        (0..=j).map(move |i| (j * (j + 1) / 2 + i, i, j, if i == j { 1.0 } else { std::f64::consts::SQRT_2 }))
    })
}

fn svec(m: &[f64], n: usize) -> Vec<(usize, f64)> {
    svec_entries(n).map(|(idx, i, j, s)| (idx, s * m[i * n + j])).filter(|(_, v)| *v != 0.0).collect()
}

pub(crate) fn solve(p: &SdpProblem, tol: &SolverTolerances) -> Result<RawSolution> {
    let offsets: Vec<usize> = p
        .sizes
        .iter()
        .scan(0, |acc, &n| {
            let o = *acc;
            *acc += svec_len(n);
            Some(o)
        })
        .collect();
    let nvar: usize = p.sizes.iter().map(|&n| svec_len(n)).sum();
    let sign = if p.maximize { -1.0 } else { 1.0 };
    let mut q = vec![0.0; nvar];
    for (k, c) in p.objective.iter().enumerate() {
        for (idx, v) in svec(c, p.sizes[k]) {
            q[offsets[k] + idx] = sign * v;
        }
    }
    let (mut ri, mut ci, mut vals) = (Vec::new(), Vec::new(), Vec::new());
    let mut b = Vec::new();
    for (row, e) in p.equalities.iter().enumerate() {
        for (k, a) in &e.terms {
            for (idx, v) in svec(a, p.sizes[*k]) {
                ri.push(row);
                ci.push(offsets[*k] + idx);
                vals.push(v);
            }
        }
        b.push(e.rhs);
    }
    let m_eq = p.equalities.len();
    let mut cones: Vec<SupportedConeT<f64>> = Vec::new();
    if m_eq > 0 {
        cones.push(ZeroConeT(m_eq));
    }
    for (k, &n) in p.sizes.iter().enumerate() {
        for idx in 0..svec_len(n) {
            ri.push(m_eq + offsets[k] + idx);
            ci.push(offsets[k] + idx);
            vals.push(-1.0);
            b.push(0.0);
        }
        cones.push(PSDTriangleConeT(n));
    }
    let a = CscMatrix::new_from_triplets(m_eq + nvar, nvar, ri, ci, vals);
    let pmat = CscMatrix::zeros((nvar, nvar));
    let settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .tol_feas(tol.feasibility)
        .tol_gap_abs(tol.gap)
        .tol_gap_rel(tol.gap)
        .max_iter(400)
        .build()
        .map_err(|e| Error::SolverFailed(format!("clarabel settings: {e:?}")))?;
    let mut solver = DefaultSolver::new(&pmat, &q, &a, &b, &cones, settings)
        .map_err(|e| Error::SolverFailed(format!("clarabel setup: {e:?}")))?;
    solver.solve();
    let sol = &solver.solution;
    let status = match sol.status {
        SolverStatus::Solved => Status::Optimal,
        SolverStatus::AlmostSolved => Status::NearOptimal,
        other => return Err(Error::SolverFailed(format!("clarabel status {other:?} after {} iterations", sol.iterations))),
    };
    let blocks = p
        .sizes
        .iter()
        .enumerate()
        .map(|(k, &n)| {
            let mut m = vec![0.0; n * n];
            for (idx, i, j, s) in svec_entries(n) {
                let v = sol.x[offsets[k] + idx] / s;
                m[i * n + j] = v;
                m[j * n + i] = v;
            }
            m
        })
        .collect();
    Ok(RawSolution {
        blocks,
        status,
        iterations: sol.iterations,
        primal_residual: sol.r_prim,
        dual_residual: sol.r_dual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svec_preserves_inner_products() {
        let n = 3;
        let a: Vec<f64> = vec![1.0, 2.0, 3.0, 2.0, 4.0, 5.0, 3.0, 5.0, 6.0];
        let x: Vec<f64> = vec![0.5, -1.0, 0.25, -1.0, 2.0, 0.0, 0.25, 0.0, 1.0];
        let dense: f64 = a.iter().zip(&x).map(|(p, q)| p * q).sum();
        let (sa, sx) = (svec(&a, n), svec(&x, n));
        let mut vx = vec![0.0; 6];
        for (i, v) in sx {
            vx[i] = v;
        }
        let packed: f64 = sa.iter().map(|(i, v)| v * vx[*i]).sum();
        assert!((dense - packed).abs() < 1e-14);
    }
}
