//! Dense primal-dual interior-point method for block SDPs.
//!
//! Solves `min ⟨C, X⟩ s.t. A(X) = b, X ⪰ 0` with dual
//! `max bᵀy s.t. A*(y) + Z = C, Z ⪰ 0`, using the HKM search direction
//! `dX = sym((K − X dZ) Z⁻¹)` and a Mehrotra predictor-corrector step.

use crate::error::{Error, Result};

use super::sdp::{
    chol_solve, cholesky, congruence_inverse, dot, identity, matmul, min_eig, symmetrize, RawSolution, SdpProblem,
    SolverTolerances, Status,
};

const MAX_ITER: u32 = 150;
const STEP_FRACTION: f64 = 0.98;
const NEAR_TOL: f64 = 1e-7;

struct Blocks<'a> {
    sizes: &'a [usize],
    /// `coeffs[j][k]`: dense coefficient of equality `j` on block `k`.
    coeffs: Vec<Vec<Option<&'a [f64]>>>,
}

impl Blocks<'_> {
    fn apply(&self, x: &[Vec<f64>]) -> Vec<f64> {
        self.coeffs
            .iter()
            .map(|row| row.iter().zip(x).filter_map(|(a, xk)| a.map(|a| dot(a, xk))).sum())
            .collect()
    }

    fn adjoint(&self, y: &[f64]) -> Vec<Vec<f64>> {
        let mut out: Vec<Vec<f64>> = self.sizes.iter().map(|&n| vec![0.0; n * n]).collect();
        for (row, &yj) in self.coeffs.iter().zip(y) {
            for (k, a) in row.iter().enumerate() {
                if let Some(a) = a {
                    for (o, v) in out[k].iter_mut().zip(*a) {
                        *o += yj * v;
                    }
                }
            }
        }
        out
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn blocks_norm(v: &[Vec<f64>]) -> f64 {
    v.iter().map(|b| b.iter().map(|x| x * x).sum::<f64>()).sum::<f64>().sqrt()
}

/// Cholesky factor of the Schur complement, retrying with a diagonal shift
/// of up to `1e-10` of its largest diagonal entry.
fn factor_schur(schur: &mut [f64], m: usize) -> Option<Vec<f64>> {
    if let Some(l) = cholesky(schur, m) {
        return Some(l);
    }
    let dmax = (0..m).map(|i| schur[i * m + i]).fold(0.0, f64::max);
    for shift in [1e-14, 1e-12, 1e-10] {
        let mut shifted = schur.to_vec();
        for i in 0..m {
            shifted[i * m + i] += shift * dmax;
        }
        if let Some(l) = cholesky(&shifted, m) {
            return Some(l);
        }
    }
    None
}

/// Largest `α ≤ 1` with `X + α dX ⪰ 0`, scaled by the step fraction.
/// `None` when an iterate is no longer numerically positive definite.
fn step_length(x: &[Vec<f64>], dx: &[Vec<f64>], sizes: &[usize]) -> Option<f64> {
    let mut alpha: f64 = 1.0;
    for ((xk, dk), &n) in x.iter().zip(dx).zip(sizes) {
        let l = cholesky(xk, n)?;
        let lmin = min_eig(&congruence_inverse(&l, dk, n), n);
        if lmin < 0.0 {
            alpha = alpha.min(-STEP_FRACTION / lmin);
        }
    }
    Some(alpha)
}

pub(crate) fn solve(p: &SdpProblem, tol: &SolverTolerances) -> Result<RawSolution> {
    let sizes = &p.sizes;
    let m = p.equalities.len();
    let mut coeffs = vec![vec![None; sizes.len()]; m];
    for (j, e) in p.equalities.iter().enumerate() {
        for (k, a) in &e.terms {
            coeffs[j][*k] = Some(a.as_slice());
        }
    }
    let ops = Blocks { sizes, coeffs };
    let sign = if p.maximize { -1.0 } else { 1.0 };
    let c: Vec<Vec<f64>> = p.objective.iter().map(|ck| ck.iter().map(|v| sign * v).collect()).collect();
    let b: Vec<f64> = p.equalities.iter().map(|e| e.rhs).collect();
    let total: usize = sizes.iter().sum();
    let nf = total as f64;

    let a_norm = p
        .equalities
        .iter()
        .map(|e| e.terms.iter().map(|(_, a)| dot(a, a)).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    let xi = (nf.sqrt() * b.iter().map(|v| 1.0 + v.abs()).fold(1.0, f64::max) / (1.0 + a_norm)).max(10.0);
    let eta = (1.0 + a_norm.max(blocks_norm(&c))) / nf.sqrt();
    let eta = eta.max(10.0);
    let mut x: Vec<Vec<f64>> = sizes.iter().map(|&n| identity(n, xi)).collect();
    let mut z: Vec<Vec<f64>> = sizes.iter().map(|&n| identity(n, eta)).collect();
    let mut y = vec![0.0; m];
    let b_scale = 1.0 + norm(&b);
    let c_scale = 1.0 + blocks_norm(&c);

    let mut best = (f64::INFINITY, 0u32);
    let mut best_x = x.clone();
    for iter in 0..MAX_ITER {
        let ax = ops.apply(&x);
        let rp: Vec<f64> = b.iter().zip(&ax).map(|(bj, aj)| bj - aj).collect();
        let aty = ops.adjoint(&y);
        let rd: Vec<Vec<f64>> = c
            .iter()
            .zip(&aty)
            .zip(&z)
            .map(|((ck, ak), zk)| ck.iter().zip(ak).zip(zk).map(|((c, a), z)| c - a - z).collect())
            .collect();
        let xz: f64 = x.iter().zip(&z).map(|(a, b)| dot(a, b)).sum();
        let mu = xz / nf;
        let pobj: f64 = c.iter().zip(&x).map(|(a, b)| dot(a, b)).sum();
        let dobj = dot(&b, &y);
        let relp = norm(&rp) / b_scale;
        let reld = blocks_norm(&rd) / c_scale;
        let gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
        let merit = relp.max(reld).max(gap);
        if merit < best.0 {
            best = (merit, iter);
            best_x.clone_from(&x);
        }
        if relp <= tol.feasibility && reld <= tol.feasibility && gap <= tol.gap {
            return Ok(RawSolution { blocks: x, status: Status::Optimal, iterations: iter, primal_residual: relp, dual_residual: reld });
        }
        if iter > best.1 + 15 || !merit.is_finite() {
            break;
        }

        let zinv: Option<Vec<Vec<f64>>> = z
            .iter()
            .zip(sizes)
            .map(|(zk, &n)| {
                let l = cholesky(zk, n)?;
                let mut inv = vec![0.0; n * n];
                for col in 0..n {
                    let mut e = vec![0.0; n];
                    e[col] = 1.0;
                    let s = chol_solve(&l, n, &e);
                    for row in 0..n {
                        inv[row * n + col] = s[row];
                    }
                }
                symmetrize(&mut inv, n);
                Some(inv)
            })
            .collect();
        let Some(zinv) = zinv else { break };

        // G_j = X A_j Z⁻¹ per block; M_ij = ⟨A_i, G_j⟩.
        let g: Vec<Vec<Option<Vec<f64>>>> = ops
            .coeffs
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .map(|(k, a)| a.map(|a| matmul(&matmul(&x[k], a, sizes[k]), &zinv[k], sizes[k])))
                    .collect()
            })
            .collect();
        let mut schur = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..m {
                let mut s = 0.0;
                for k in 0..sizes.len() {
                    if let (Some(ai), Some(gj)) = (ops.coeffs[i][k], &g[j][k]) {
                        s += dot(ai, gj);
                    }
                }
                schur[i * m + j] = s;
            }
        }
        symmetrize(&mut schur, m);
        let lm = match factor_schur(&mut schur, m) {
            Some(l) => l,
            None if iter == 0 => {
                return Err(Error::SolverFailed(
                    "singular Schur complement: equalities are dependent or inconsistent".into(),
                ))
            }
            None => break,
        };

        // Direction for complementarity target K, given K Z⁻¹ per block.
        let direction = |kzinv: &[Vec<f64>]| -> (Vec<f64>, Vec<Vec<f64>>, Vec<Vec<f64>>) {
            let t: Vec<Vec<f64>> = kzinv
                .iter()
                .zip(&x)
                .zip(&rd)
                .zip(&zinv)
                .zip(sizes)
                .map(|((((kz, xk), rk), zi), &n)| {
                    let xr = matmul(&matmul(xk, rk, n), zi, n);
                    kz.iter().zip(&xr).map(|(a, b)| a - b).collect()
                })
                .collect();
            let at = ops.apply(&t);
            let rhs: Vec<f64> = rp.iter().zip(&at).map(|(r, a)| r - a).collect();
            let dy = chol_solve(&lm, m, &rhs);
            let ady = ops.adjoint(&dy);
            let dz: Vec<Vec<f64>> =
                rd.iter().zip(&ady).map(|(r, a)| r.iter().zip(a).map(|(p, q)| p - q).collect()).collect();
            let dx: Vec<Vec<f64>> = kzinv
                .iter()
                .zip(&x)
                .zip(&dz)
                .zip(&zinv)
                .zip(sizes)
                .map(|((((kz, xk), dzk), zi), &n)| {
                    let xdz = matmul(&matmul(xk, dzk, n), zi, n);
                    let mut d: Vec<f64> = kz.iter().zip(&xdz).map(|(a, b)| a - b).collect();
                    symmetrize(&mut d, n);
                    d
                })
                .collect();
            (dy, dx, dz)
        };

        let neg_x: Vec<Vec<f64>> = x.iter().map(|xk| xk.iter().map(|v| -v).collect()).collect();
        let (_, dx_a, dz_a) = direction(&neg_x);
        let (Some(ap), Some(ad)) = (step_length(&x, &dx_a, sizes), step_length(&z, &dz_a, sizes)) else { break };
        let mu_aff: f64 = x
            .iter()
            .zip(&dx_a)
            .zip(z.iter().zip(&dz_a))
            .map(|((xk, dxk), (zk, dzk))| {
                let xa: Vec<f64> = xk.iter().zip(dxk).map(|(a, b)| a + ap * b).collect();
                let za: Vec<f64> = zk.iter().zip(dzk).map(|(a, b)| a + ad * b).collect();
                dot(&xa, &za)
            })
            .sum::<f64>()
            / nf;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);
        let kzinv: Vec<Vec<f64>> = (0..sizes.len())
            .map(|k| {
                let n = sizes[k];
                let corr = matmul(&matmul(&dx_a[k], &dz_a[k], n), &zinv[k], n);
                (0..n * n).map(|i| sigma * mu * zinv[k][i] - x[k][i] - corr[i]).collect()
            })
            .collect();
        let (dy, dx, dz) = direction(&kzinv);
        let (Some(ap), Some(ad)) = (step_length(&x, &dx, sizes), step_length(&z, &dz, sizes)) else { break };
        for (xk, dk) in x.iter_mut().zip(&dx) {
            for (a, b) in xk.iter_mut().zip(dk) {
                *a += ap * b;
            }
        }
        for (zk, dk) in z.iter_mut().zip(&dz) {
            for (a, b) in zk.iter_mut().zip(dk) {
                *a += ad * b;
            }
        }
        for (a, b) in y.iter_mut().zip(&dy) {
            *a += ad * b;
        }
    }
    let ax = ops.apply(&best_x);
    let relp = norm(&b.iter().zip(&ax).map(|(p, q)| p - q).collect::<Vec<_>>()) / b_scale;
    if best.0 <= NEAR_TOL {
        return Ok(RawSolution { blocks: best_x, status: Status::NearOptimal, iterations: MAX_ITER, primal_residual: relp, dual_residual: best.0 });
    }
    Err(Error::SolverFailed(format!("ipm stalled with merit {:.3e}", best.0)))
}
