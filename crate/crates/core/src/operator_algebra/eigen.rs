//! Symmetric tridiagonal eigensolver (Householder reduction followed by
//! implicit-shift QL) and its Hermitian wrappers.
//!
//! Complex Hermitian input is solved through the real embedding
//! `[[Re, -Im], [Im, Re]]`, whose spectrum repeats every eigenvalue twice.
//! Matrices whose nonzero pattern splits into several connected components
//! are solved block by block.

use super::matrix::{Matrix, C64};

/// Dense real symmetric matrix stored row-major.
struct Sym {
    n: usize,
    a: Vec<f64>,
}

/// Householder reduction of a symmetric matrix to tridiagonal form.
///
/// On return `d` holds the diagonal and `e[1..]` the subdiagonal. When
/// `want_vectors` is set, `v` holds the accumulated orthogonal transform.
fn tridiagonalize(mut v: Sym, want_vectors: bool) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = v.n;
    let a = &mut v.a;
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    for j in 0..n {
        d[j] = a[(n - 1) * n + j];
    }
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for k in 0..i {
            scale += d[k].abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = a[(i - 1) * n + j];
                a[i * n + j] = 0.0;
                a[j * n + i] = 0.0;
            }
        } else {
            for k in 0..i {
                d[k] /= scale;
                h += d[k] * d[k];
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for j in 0..i {
                e[j] = 0.0;
            }
            for j in 0..i {
                f = d[j];
                a[j * n + i] = f;
                g = e[j] + a[j * n + j] * f;
                for k in (j + 1)..i {
                    g += a[k * n + j] * d[k];
                    e[k] += a[k * n + j] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    a[k * n + j] -= f * e[k] + g * d[k];
                }
                d[j] = a[(i - 1) * n + j];
                a[i * n + j] = 0.0;
            }
        }
        d[i] = h;
    }
    if want_vectors {
        for i in 0..n.saturating_sub(1) {
            a[(n - 1) * n + i] = a[i * n + i];
            a[i * n + i] = 1.0;
            let h = d[i + 1];
            if h != 0.0 {
                for k in 0..=i {
                    d[k] = a[k * n + i + 1] / h;
                }
                for j in 0..=i {
                    let mut g = 0.0;
                    for k in 0..=i {
                        g += a[k * n + i + 1] * a[k * n + j];
                    }
                    for k in 0..=i {
                        a[k * n + j] -= g * d[k];
                    }
                }
            }
            for k in 0..=i {
                a[k * n + i + 1] = 0.0;
            }
        }
        for j in 0..n {
            d[j] = a[(n - 1) * n + j];
            a[(n - 1) * n + j] = 0.0;
        }
        a[(n - 1) * n + n - 1] = 1.0;
    } else {
        // Without accumulation the diagonal lives on the diagonal of `a`.
        for j in 0..n {
            d[j] = a[j * n + j];
        }
    }
    e[0] = 0.0;
    (d, e, v.a)
}

/// Implicit QL iteration on a symmetric tridiagonal matrix.
///
/// `z`, when present, is the n×n row-major transform whose columns are
/// rotated alongside. Eigenvalues are returned ascending with matching
/// column order in `z`.
fn tridiagonal_ql(d: &mut [f64], e: &mut [f64], mut z: Option<&mut [f64]>) {
    let n = d.len();
    if n == 0 {
        return;
    }
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
    let eps = f64::EPSILON;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().take(n).skip(l + 2) {
                    *di -= h;
                }
                f += h;
                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    if let Some(z) = z.as_deref_mut() {
                        for k in 0..n {
                            let zk1 = z[k * n + i + 1];
                            let zk = z[k * n + i];
                            z[k * n + i + 1] = s * zk + c * zk1;
                            z[k * n + i] = c * zk - s * zk1;
                        }
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 || iter > 60 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| d[i].total_cmp(&d[j]));
    let sorted: Vec<f64> = idx.iter().map(|&i| d[i]).collect();
    d.copy_from_slice(&sorted);
    if let Some(z) = z {
        let old = z.to_vec();
        for (new_col, &old_col) in idx.iter().enumerate() {
            for k in 0..n {
                z[k * n + new_col] = old[k * n + old_col];
            }
        }
    }
}

/// Eigenvalues of a real symmetric row-major matrix, ascending.
pub fn symmetric_eigenvalues(a: &[f64], n: usize) -> Vec<f64> {
    assert_eq!(a.len(), n * n);
    if n == 0 {
        return Vec::new();
    }
    let (mut d, mut e, _) = tridiagonalize(Sym { n, a: a.to_vec() }, false);
    tridiagonal_ql(&mut d, &mut e, None);
    d
}

/// Eigenpairs of a real symmetric row-major matrix.
///
/// Returns ascending eigenvalues and a row-major matrix whose columns are
/// the orthonormal eigenvectors.
pub fn symmetric_eigen(a: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(a.len(), n * n);
    if n == 0 {
        return (Vec::new(), Vec::new());
    }
    let (mut d, mut e, mut z) = tridiagonalize(Sym { n, a: a.to_vec() }, true);
    tridiagonal_ql(&mut d, &mut e, Some(&mut z));
    (d, z)
}

/// Connected components of the exact-nonzero pattern of a square matrix.
pub(crate) fn pattern_components(m: &Matrix) -> Vec<Vec<usize>> {
    let n = m.rows();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if m.get(i, j) != C64::new(0.0, 0.0) || m.get(j, i) != C64::new(0.0, 0.0) {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; n];
    for i in 0..n {
        let r = find(&mut parent, i);
        if slot[r] == usize::MAX {
            slot[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot[r]].push(i);
    }
    groups
}

/// Real embedding `[[Re, -Im], [Im, Re]]` of the principal submatrix on `idx`.
fn embed(m: &Matrix, idx: &[usize], complex: bool) -> (Vec<f64>, usize) {
    let k = idx.len();
    if !complex {
        let mut a = vec![0.0; k * k];
        for (r, &i) in idx.iter().enumerate() {
            for (c, &j) in idx.iter().enumerate() {
                a[r * k + c] = m.get(i, j).re;
            }
        }
        return (a, k);
    }
    let n = 2 * k;
    let mut a = vec![0.0; n * n];
    for (r, &i) in idx.iter().enumerate() {
        for (c, &j) in idx.iter().enumerate() {
            let z = m.get(i, j);
            a[r * n + c] = z.re;
            a[(r + k) * n + c + k] = z.re;
            a[r * n + c + k] = -z.im;
            a[(r + k) * n + c] = z.im;
        }
    }
    (a, n)
}

/// Ascending eigenvalues of the Hermitian part of `m`.
pub fn hermitian_eigenvalues(m: &Matrix) -> Vec<f64> {
    let h = m.hermitian_part();
    let complex = !h.is_real();
    let mut out = Vec::with_capacity(h.rows());
    for comp in pattern_components(&h) {
        let (a, n) = embed(&h, &comp, complex);
        let vals = symmetric_eigenvalues(&a, n);
        if complex {
            // The embedding doubles each eigenvalue; keep one of each pair.
            out.extend(vals.iter().step_by(2).copied());
        } else {
            out.extend(vals);
        }
    }
    out.sort_by(f64::total_cmp);
    out
}

/// Smallest eigenvalue of the Hermitian part of `m`.
pub fn hermitian_min_eigenvalue(m: &Matrix) -> f64 {
    let h = m.hermitian_part();
    let complex = !h.is_real();
    let mut best = f64::INFINITY;
    for comp in pattern_components(&h) {
        let (a, n) = embed(&h, &comp, complex);
        let vals = symmetric_eigenvalues(&a, n);
        best = best.min(vals[0]);
    }
    best
}

/// Vectors `u_k` with `Σ u_k u_k† = H` up to the discarded spectrum, where
/// `H` is the Hermitian part of `m` and eigenvalues `≤ cutoff` are dropped.
///
/// Real input yields one vector per retained eigenvalue. Complex input is
/// factored through the real embedding: each embedded eigenpair `(λ, [x; y])`
/// contributes `√(λ/2)·(x + i y)`, so the set has twice the rank.
pub fn hermitian_psd_factor(m: &Matrix, cutoff: f64) -> Vec<Vec<C64>> {
    let h = m.hermitian_part();
    let complex = !h.is_real();
    let dim = h.rows();
    let mut out = Vec::new();
    for comp in pattern_components(&h) {
        let k = comp.len();
        let (a, n) = embed(&h, &comp, complex);
        let (vals, vecs) = symmetric_eigen(&a, n);
        for (col, &lam) in vals.iter().enumerate().rev() {
            if lam <= cutoff {
                continue;
            }
            let mut u = vec![C64::new(0.0, 0.0); dim];
            if complex {
                let s = (lam / 2.0).sqrt();
                for (r, &i) in comp.iter().enumerate() {
                    u[i] = C64::new(vecs[r * n + col], vecs[(r + k) * n + col]) * s;
                }
            } else {
                let s = lam.sqrt();
                for (r, &i) in comp.iter().enumerate() {
                    u[i] = C64::new(vecs[r * n + col] * s, 0.0);
                }
            }
            out.push(u);
        }
    }
    out
}
