//! Dense complex linear algebra used by the spectral machinery: Hessenberg
//! QR eigenvalues, inverse iteration, rank estimation, and Hermitian
//! matrix functions through the real symmetric embedding.

use crate::C64;
use nalgebra::{DMatrix, DVector};

/// Eigenvalues of a general complex matrix by Hessenberg reduction followed
/// by the shifted QR iteration. Deterministic; suitable for the moderate
/// sizes produced by transfer-operator restrictions.
pub fn complex_eigenvalues(m: &DMatrix<C64>) -> Vec<C64> {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "eigenvalues need a square matrix");
    if n == 0 {
        return vec![];
    }
    if n == 1 {
        return vec![m[(0, 0)]];
    }
    let mut h = hessenberg(m.clone());
    let mut eigs = Vec::with_capacity(n);
    let mut hi = n; // active block is 0..hi
    let mut iters_since_deflate = 0usize;
    let eps = 1e-15;
    while hi > 0 {
        if hi == 1 {
            eigs.push(h[(0, 0)]);
            break;
        }
        // look for a negligible subdiagonal inside the active block
        let mut split = None;
        for i in (1..hi).rev() {
            let tiny = eps * (h[(i - 1, i - 1)].norm() + h[(i, i)].norm()).max(1e-300);
            if h[(i, i - 1)].norm() <= tiny {
                h[(i, i - 1)] = C64::new(0.0, 0.0);
                split = Some(i);
                break;
            }
        }
        if split == Some(hi - 1) {
            eigs.push(h[(hi - 1, hi - 1)]);
            hi -= 1;
            iters_since_deflate = 0;
            continue;
        }
        if hi >= 2 {
            let tiny = eps * (h[(hi - 2, hi - 2)].norm() + h[(hi - 1, hi - 1)].norm()).max(1e-300);
            if h[(hi - 1, hi - 2)].norm() <= tiny {
                eigs.push(h[(hi - 1, hi - 1)]);
                hi -= 1;
                iters_since_deflate = 0;
                continue;
            }
        }
        let lo = split.unwrap_or(0);
        if hi - lo == 2 {
            let (l1, l2) = eig2(h[(lo, lo)], h[(lo, lo + 1)], h[(lo + 1, lo)], h[(lo + 1, lo + 1)]);
            eigs.push(l1);
            eigs.push(l2);
            hi = lo;
            iters_since_deflate = 0;
            continue;
        }
        // shifted QR sweep on the block lo..hi
        let shift = if iters_since_deflate > 0 && iters_since_deflate % 12 == 0 {
            // exceptional shift to break symmetry stalls
            C64::new(h[(hi - 1, hi - 2)].norm() + h[(hi - 2, hi - 3.min(hi - 2))].norm(), 0.0)
        } else {
            wilkinson_shift(&h, hi)
        };
        qr_step(&mut h, lo, hi, shift);
        iters_since_deflate += 1;
        if iters_since_deflate > 40 * n {
            // give up on further refinement; return diagonal of the block
            for i in lo..hi {
                eigs.push(h[(i, i)]);
            }
            hi = lo;
            iters_since_deflate = 0;
        }
    }
    eigs
}

fn eig2(a: C64, b: C64, c: C64, d: C64) -> (C64, C64) {
    let tr = a + d;
    let det = a * d - b * c;
    let disc = (tr * tr - det * 4.0).sqrt();
    ((tr + disc) * 0.5, (tr - disc) * 0.5)
}

fn wilkinson_shift(h: &DMatrix<C64>, hi: usize) -> C64 {
    let a = h[(hi - 2, hi - 2)];
    let b = h[(hi - 2, hi - 1)];
    let c = h[(hi - 1, hi - 2)];
    let d = h[(hi - 1, hi - 1)];
    let (l1, l2) = eig2(a, b, c, d);
    if (l1 - d).norm() <= (l2 - d).norm() {
        l1
    } else {
        l2
    }
}

fn hessenberg(mut h: DMatrix<C64>) -> DMatrix<C64> {
    let n = h.nrows();
    for k in 0..n.saturating_sub(2) {
        // Householder vector annihilating column k below the subdiagonal
        let mut alpha2 = 0.0;
        for i in (k + 1)..n {
            alpha2 += h[(i, k)].norm_sqr();
        }
        let alpha = alpha2.sqrt();
        if alpha < 1e-300 {
            continue;
        }
        let x0 = h[(k + 1, k)];
        let phase = if x0.norm() > 0.0 { x0 / x0.norm() } else { C64::new(1.0, 0.0) };
        let mut v: Vec<C64> = (k + 1..n).map(|i| h[(i, k)]).collect();
        v[0] += phase * alpha;
        let vn2: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        if vn2 < 1e-300 {
            continue;
        }
        let beta = 2.0 / vn2;
        // H := (I - beta v v*) H
        for j in k..n {
            let mut s = C64::new(0.0, 0.0);
            for i in (k + 1)..n {
                s += v[i - k - 1].conj() * h[(i, j)];
            }
            s *= beta;
            for i in (k + 1)..n {
                let dv = v[i - k - 1] * s;
                h[(i, j)] -= dv;
            }
        }
        // H := H (I - beta v v*)
        for i in 0..n {
            let mut s = C64::new(0.0, 0.0);
            for j in (k + 1)..n {
                s += h[(i, j)] * v[j - k - 1];
            }
            s *= beta;
            for j in (k + 1)..n {
                let dv = s * v[j - k - 1].conj();
                h[(i, j)] -= dv;
            }
        }
        for i in (k + 2)..n {
            h[(i, k)] = C64::new(0.0, 0.0);
        }
    }
    h
}

/// One explicit shifted QR step with Givens rotations on the Hessenberg
/// block `lo..hi`.
fn qr_step(h: &mut DMatrix<C64>, lo: usize, hi: usize, shift: C64) {
    let n = h.ncols();
    let mut rots: Vec<(f64, C64)> = Vec::with_capacity(hi - lo - 1);
    for i in lo..hi {
        h[(i, i)] -= shift;
    }
    for i in lo..(hi - 1) {
        let (c, s) = givens(h[(i, i)], h[(i + 1, i)]);
        rots.push((c, s));
        for j in i..n {
            let a = h[(i, j)];
            let b = h[(i + 1, j)];
            h[(i, j)] = a * c + b * s;
            h[(i + 1, j)] = -a * s.conj() + b * c;
        }
    }
    for (idx, &(c, s)) in rots.iter().enumerate() {
        let i = lo + idx;
        let top = (i + 2).min(hi);
        for r in 0..top {
            let a = h[(r, i)];
            let b = h[(r, i + 1)];
            h[(r, i)] = a * c + b * s.conj();
            h[(r, i + 1)] = -a * s + b * c;
        }
    }
    for i in lo..hi {
        h[(i, i)] += shift;
    }
    for i in (lo + 2)..hi {
        for j in lo..(i - 1) {
            h[(i, j)] = C64::new(0.0, 0.0);
        }
    }
}

fn givens(a: C64, b: C64) -> (f64, C64) {
    let an = a.norm();
    let bn = b.norm();
    if bn == 0.0 {
        return (1.0, C64::new(0.0, 0.0));
    }
    let t = (an * an + bn * bn).sqrt();
    if an == 0.0 {
        (0.0, b.conj() / bn)
    } else {
        let c = an / t;
        let s = (a / an) * b.conj() / t;
        (c, s)
    }
}

/// Solve `M x = rhs` by partial-pivoted Gaussian elimination.
pub fn complex_solve(m: &DMatrix<C64>, rhs: &DVector<C64>) -> Option<DVector<C64>> {
    let n = m.nrows();
    let mut a = m.clone();
    let mut b = rhs.clone();
    for k in 0..n {
        let (mut piv, mut best) = (k, a[(k, k)].norm());
        for i in (k + 1)..n {
            if a[(i, k)].norm() > best {
                best = a[(i, k)].norm();
                piv = i;
            }
        }
        if best < 1e-300 {
            return None;
        }
        if piv != k {
            a.swap_rows(k, piv);
            b.swap_rows(k, piv);
        }
        let d = a[(k, k)];
        for i in (k + 1)..n {
            let f = a[(i, k)] / d;
            if f.norm() == 0.0 {
                continue;
            }
            for j in k..n {
                let dv = f * a[(k, j)];
                a[(i, j)] -= dv;
            }
            let dv = f * b[k];
            b[i] -= dv;
        }
    }
    let mut x = DVector::from_element(n, C64::new(0.0, 0.0));
    for k in (0..n).rev() {
        let mut s = b[k];
        for j in (k + 1)..n {
            s -= a[(k, j)] * x[j];
        }
        x[k] = s / a[(k, k)];
    }
    Some(x)
}

/// Numerical rank by row echelon with partial pivoting.
pub fn complex_rank(m: &DMatrix<C64>, tol: f64) -> usize {
    let (nr, nc) = (m.nrows(), m.ncols());
    let mut a = m.clone();
    let scale = a.iter().map(|z| z.norm()).fold(0.0f64, f64::max).max(1.0);
    let mut rank = 0;
    let mut row = 0;
    for col in 0..nc {
        let (mut piv, mut best) = (row, 0.0);
        for i in row..nr {
            if a[(i, col)].norm() > best {
                best = a[(i, col)].norm();
                piv = i;
            }
        }
        if best <= tol * scale {
            continue;
        }
        a.swap_rows(row, piv);
        let d = a[(row, col)];
        for i in (row + 1)..nr {
            let f = a[(i, col)] / d;
            for j in col..nc {
                let dv = f * a[(row, j)];
                a[(i, j)] -= dv;
            }
        }
        rank += 1;
        row += 1;
        if row == nr {
            break;
        }
    }
    rank
}

/// Eigenvector for the eigenvalue closest to `lambda` by inverse iteration.
pub fn inverse_iteration(m: &DMatrix<C64>, lambda: C64, iters: usize) -> Option<DVector<C64>> {
    let n = m.nrows();
    // small complex perturbation keeps the shifted matrix invertible
    let shift = lambda + C64::new(1e-12, 1e-13);
    let mut shifted = m.clone();
    for i in 0..n {
        shifted[(i, i)] -= shift;
    }
    let mut v = DVector::from_fn(n, |i, _| C64::new(1.0 + (i as f64) * 1e-3, 0.0));
    v /= C64::new(v.norm(), 0.0);
    for _ in 0..iters {
        let w = complex_solve(&shifted, &v)?;
        let nw = w.norm();
        if !nw.is_finite() || nw == 0.0 {
            return None;
        }
        v = w / C64::new(nw, 0.0);
    }
    Some(v)
}

/// Eigendecomposition of a Hermitian matrix through the real symmetric
/// embedding `[[Re, -Im], [Im, Re]]`. Returns ascending eigenvalues and the
/// corresponding orthonormal complex eigenvectors.
pub fn hermitian_eigen(g: &DMatrix<C64>) -> (Vec<f64>, Vec<DVector<C64>>) {
    let m = g.nrows();
    assert_eq!(m, g.ncols());
    let mut e = DMatrix::<f64>::zeros(2 * m, 2 * m);
    for i in 0..m {
        for j in 0..m {
            let z = g[(i, j)];
            e[(i, j)] = z.re;
            e[(i, j + m)] = -z.im;
            e[(i + m, j)] = z.im;
            e[(i + m, j + m)] = z.re;
        }
    }
    let se = nalgebra::SymmetricEigen::new(e);
    // each complex eigenpair appears twice; sort and keep alternating picks,
    // reconstructing a complex eigenvector from the embedded real one
    let mut order: Vec<usize> = (0..2 * m).collect();
    order.sort_by(|&i, &j| se.eigenvalues[i].partial_cmp(&se.eigenvalues[j]).unwrap());
    let mut vals = Vec::with_capacity(m);
    let mut vecs: Vec<DVector<C64>> = Vec::with_capacity(m);
    // every embedded eigenvector reconstructs to a complex eigenvector; the
    // embedding duplicates each one (as i·v), so Gram-Schmidt against all
    // accepted vectors separates the genuinely new directions (residual
    // near 1, or inside a degenerate cluster still well above 1/2) from
    // the copies (residual near 0)
    for &idx in &order {
        if vals.len() == m {
            break;
        }
        let lam = se.eigenvalues[idx];
        let col = se.eigenvectors.column(idx);
        let mut v = DVector::from_fn(m, |i, _| C64::new(col[i], col[i + m]));
        for prev in vecs.iter() {
            let ip: C64 = prev.dotc(&v);
            let proj = prev * ip;
            v -= proj;
        }
        let nv = v.norm();
        if nv > 0.5 {
            v /= C64::new(nv, 0.0);
            vals.push(lam);
            vecs.push(v);
        }
    }
    debug_assert_eq!(vals.len(), m, "embedded eigenbasis reconstruction lost a direction");
    (vals, vecs)
}

/// Apply a real scalar function to a Hermitian matrix.
pub fn hermitian_fn(g: &DMatrix<C64>, f: impl Fn(f64) -> f64) -> DMatrix<C64> {
    let m = g.nrows();
    let (vals, vecs) = hermitian_eigen(g);
    let mut out = DMatrix::<C64>::zeros(m, m);
    for (lam, v) in vals.iter().zip(vecs.iter()) {
        let fl = f(*lam);
        for i in 0..m {
            for j in 0..m {
                out[(i, j)] += v[i] * v[j].conj() * fl;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cm(rows: usize, data: &[f64]) -> DMatrix<C64> {
        DMatrix::from_row_slice(rows, rows, &data.iter().map(|&x| C64::new(x, 0.0)).collect::<Vec<_>>())
    }

    #[test]
    fn eigenvalues_of_small_real_matrices() {
        let m = cm(2, &[2.0, 1.0, 1.0, 2.0]);
        let mut ev: Vec<f64> = complex_eigenvalues(&m).iter().map(|z| z.re).collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((ev[0] - 1.0).abs() < 1e-12 && (ev[1] - 3.0).abs() < 1e-12);

        // rotation by 2: eigenvalues ±2i
        let m = cm(2, &[0.0, 2.0, -2.0, 0.0]);
        let ev = complex_eigenvalues(&m);
        assert!(ev.iter().all(|z| (z.norm() - 2.0).abs() < 1e-12));
    }

    #[test]
    fn eigenvalues_match_triangular_construction() {
        // unitary-conjugated upper triangular with known diagonal
        let n = 6;
        let mut t = DMatrix::<C64>::zeros(n, n);
        let diag = [1.0, 0.5, 0.5, -0.25, 0.1, 0.0];
        for i in 0..n {
            t[(i, i)] = C64::new(diag[i], 0.1 * i as f64);
            for j in (i + 1)..n {
                t[(i, j)] = C64::new(0.3 * (i + j) as f64, -0.2);
            }
        }
        // Householder-free unitary: product of complex Givens rotations
        let mut q = DMatrix::<C64>::identity(n, n);
        for k in 0..n - 1 {
            let mut g = DMatrix::<C64>::identity(n, n);
            let th = 0.7 + k as f64;
            g[(k, k)] = C64::new(th.cos(), 0.0);
            g[(k, k + 1)] = C64::new(0.0, th.sin());
            g[(k + 1, k)] = C64::new(0.0, th.sin());
            g[(k + 1, k + 1)] = C64::new(th.cos(), 0.0);
            q = q * g;
        }
        let m = &q * t * q.adjoint();
        let mut got: Vec<C64> = complex_eigenvalues(&m);
        got.sort_by(|a, b| (b.norm(), b.re).partial_cmp(&(a.norm(), a.re)).unwrap());
        let mut want: Vec<C64> = (0..n).map(|i| C64::new(diag[i], 0.1 * i as f64)).collect();
        want.sort_by(|a, b| (b.norm(), b.re).partial_cmp(&(a.norm(), a.re)).unwrap());
        for (g, w) in got.iter().zip(want.iter()) {
            assert!((g - w).norm() < 1e-9, "{g} vs {w}");
        }
    }

    #[test]
    fn hermitian_inverse_sqrt_squares_back() {
        let mut g = DMatrix::<C64>::zeros(3, 3);
        g[(0, 0)] = C64::new(2.0, 0.0);
        g[(1, 1)] = C64::new(1.0, 0.0);
        g[(2, 2)] = C64::new(0.5, 0.0);
        g[(0, 1)] = C64::new(0.3, 0.2);
        g[(1, 0)] = C64::new(0.3, -0.2);
        g[(1, 2)] = C64::new(-0.1, 0.05);
        g[(2, 1)] = C64::new(-0.1, -0.05);
        let s = hermitian_fn(&g, |x| 1.0 / x.sqrt());
        let should_be_id = &s * &g * &s;
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((should_be_id[(i, j)] - C64::new(want, 0.0)).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn rank_and_inverse_iteration() {
        let m = cm(3, &[1.0, 0.0, 0.0, 0.0, 0.5, 0.0, 0.0, 0.5, 0.5]);
        assert_eq!(complex_rank(&m, 1e-12), 3);
        let mut sing = m.clone();
        sing[(0, 0)] = C64::new(0.0, 0.0);
        assert_eq!(complex_rank(&sing, 1e-12), 2);

        let v = inverse_iteration(&m, C64::new(1.0, 0.0), 8).unwrap();
        // eigenvector for eigenvalue 1 of the block-diagonal matrix is e0
        assert!(v[0].norm() > 0.999);
    }
}
