//! Exact integer-lattice algebra.
//!
//! The lattice is fixed as `G = Z^n`. A dilation is an integer matrix whose
//! eigenvalues all lie strictly outside the closed unit disk; its
//! determinant magnitude `q` counts the cosets of `AG` in `G`. Coset
//! systems, the duality pairing
//! `(x, y) = exp(2 pi i <A^{-1} x, y>)` and the resulting character tables
//! are all computed in exact arithmetic.

use crate::C64;
use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LatticeError {
    #[error("matrix is not square")]
    NotSquare,
    #[error("integer overflow in exact matrix arithmetic")]
    Overflow,
    #[error("matrix is singular")]
    Singular,
    #[error("matrix is not a dilation: eigenvalue {0} lies inside the closed unit disk")]
    NotDilation(f64),
    #[error("dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),
}

/// Exact `n x n` integer matrix.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IntMatrix {
    n: usize,
    entries: Vec<i64>,
}

impl IntMatrix {
    pub fn new(n: usize, entries: Vec<i64>) -> Result<Self, LatticeError> {
        if entries.len() != n * n {
            return Err(LatticeError::NotSquare);
        }
        Ok(Self { n, entries })
    }

    pub fn from_rows(rows: &[&[i64]]) -> Self {
        let n = rows.len();
        let mut entries = Vec::with_capacity(n * n);
        for r in rows {
            assert_eq!(r.len(), n);
            entries.extend_from_slice(r);
        }
        Self { n, entries }
    }

    pub fn identity(n: usize) -> Self {
        let mut entries = vec![0; n * n];
        for i in 0..n {
            entries[i * n + i] = 1;
        }
        Self { n, entries }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn at(&self, i: usize, j: usize) -> i64 {
        self.entries[i * self.n + j]
    }

    pub fn entries(&self) -> &[i64] {
        &self.entries
    }

    pub fn transpose(&self) -> Self {
        let n = self.n;
        let mut entries = vec![0; n * n];
        for i in 0..n {
            for j in 0..n {
                entries[j * n + i] = self.at(i, j);
            }
        }
        Self { n, entries }
    }

    pub fn neg(&self) -> Self {
        Self {
            n: self.n,
            entries: self.entries.iter().map(|&x| -x).collect(),
        }
    }

    pub fn mul(&self, other: &Self) -> Result<Self, LatticeError> {
        if self.n != other.n {
            return Err(LatticeError::DimMismatch(self.n, other.n));
        }
        let n = self.n;
        let mut entries = vec![0i64; n * n];
        for i in 0..n {
            for j in 0..n {
                let mut acc: i128 = 0;
                for k in 0..n {
                    acc += self.at(i, k) as i128 * other.at(k, j) as i128;
                }
                entries[i * n + j] = i64::try_from(acc).map_err(|_| LatticeError::Overflow)?;
            }
        }
        Ok(Self { n, entries })
    }

    pub fn sub(&self, other: &Self) -> Result<Self, LatticeError> {
        if self.n != other.n {
            return Err(LatticeError::DimMismatch(self.n, other.n));
        }
        Ok(Self {
            n: self.n,
            entries: self
                .entries
                .iter()
                .zip(&other.entries)
                .map(|(&a, &b)| a - b)
                .collect(),
        })
    }

    pub fn mul_vec(&self, v: &[i64]) -> Vec<i64> {
        let n = self.n;
        (0..n)
            .map(|i| (0..n).map(|j| self.at(i, j) * v[j]).sum())
            .collect()
    }

    /// Determinant by fraction-free elimination in `i128`.
    pub fn det(&self) -> i64 {
        match self.n {
            0 => 1,
            1 => self.at(0, 0),
            2 => self.at(0, 0) * self.at(1, 1) - self.at(0, 1) * self.at(1, 0),
            _ => {
                let n = self.n;
                let mut a: Vec<i128> = self.entries.iter().map(|&x| x as i128).collect();
                let mut prev: i128 = 1;
                let mut sign = 1i128;
                for k in 0..n - 1 {
                    if a[k * n + k] == 0 {
                        let piv = (k + 1..n).find(|&i| a[i * n + k] != 0);
                        match piv {
                            Some(p) => {
                                for j in 0..n {
                                    a.swap(k * n + j, p * n + j);
                                }
                                sign = -sign;
                            }
                            None => return 0,
                        }
                    }
                    for i in k + 1..n {
                        for j in k + 1..n {
                            a[i * n + j] =
                                (a[i * n + j] * a[k * n + k] - a[i * n + k] * a[k * n + j]) / prev;
                        }
                        a[i * n + k] = 0;
                    }
                    prev = a[k * n + k];
                }
                (sign * a[n * n - 1]) as i64
            }
        }
    }

    pub fn trace(&self) -> i64 {
        (0..self.n).map(|i| self.at(i, i)).sum()
    }

    /// Adjugate matrix, so `self * adj = det * I`.
    pub fn adjugate(&self) -> Self {
        let n = self.n;
        match n {
            1 => Self::from_rows(&[&[1]]),
            2 => Self::from_rows(&[
                &[self.at(1, 1), -self.at(0, 1)],
                &[-self.at(1, 0), self.at(0, 0)],
            ]),
            _ => {
                let mut entries = vec![0i64; n * n];
                for i in 0..n {
                    for j in 0..n {
                        let minor = self.minor(j, i);
                        let sgn = if (i + j) % 2 == 0 { 1 } else { -1 };
                        entries[i * n + j] = sgn * minor.det();
                    }
                }
                Self { n, entries }
            }
        }
    }

    fn minor(&self, row: usize, col: usize) -> Self {
        let n = self.n;
        let mut entries = Vec::with_capacity((n - 1) * (n - 1));
        for i in 0..n {
            if i == row {
                continue;
            }
            for j in 0..n {
                if j == col {
                    continue;
                }
                entries.push(self.at(i, j));
            }
        }
        Self {
            n: n - 1,
            entries,
        }
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::identity(self.n)
    }

    pub fn pow(&self, k: u32) -> Result<Self, LatticeError> {
        let mut out = Self::identity(self.n);
        for _ in 0..k {
            out = out.mul(self)?;
        }
        Ok(out)
    }

    pub fn to_f64(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.at(i, j) as f64)
    }

    /// True iff `v` lies in the sublattice `M Z^n`, decided exactly via the
    /// adjugate: `v ∈ M Z^n  <=>  adj(M) v ≡ 0 (mod det M)`.
    pub fn lattice_contains(&self, v: &[i64]) -> bool {
        let d = self.det();
        assert!(d != 0, "sublattice test needs a nonsingular matrix");
        let adj = self.adjugate();
        (0..self.n).all(|i| {
            let mut acc: i128 = 0;
            for j in 0..self.n {
                acc += adj.at(i, j) as i128 * v[j] as i128;
            }
            acc.rem_euclid(d.unsigned_abs() as i128) == 0
        })
    }
}

impl std::fmt::Display for IntMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[")?;
        for i in 0..self.n {
            if i > 0 {
                write!(f, "; ")?;
            }
            for j in 0..self.n {
                if j > 0 {
                    write!(f, " ")?;
                }
                write!(f, "{}", self.at(i, j))?;
            }
        }
        write!(f, "]")
    }
}

/// Margin for the floating-point eigenvalue test.
pub const EPS_EIG: f64 = 1e-9;

/// All eigenvalue moduli strictly exceed one. For `n <= 2` this is also
/// cross-checked exactly through trace/determinant inequalities.
pub fn is_dilation(m: &IntMatrix) -> bool {
    let float_ok = m
        .to_f64()
        .complex_eigenvalues()
        .iter()
        .all(|z| z.norm() > 1.0 + EPS_EIG);
    match m.dim() {
        1 => m.at(0, 0).abs() >= 2,
        2 => {
            // both roots of x^2 - t x + d outside the closed unit disk
            let t = m.trace();
            let d = m.det();
            let exact = d.abs() >= 2 && t.abs() < (d + 1).abs();
            debug_assert_eq!(exact, float_ok, "exact and float dilation tests disagree");
            exact
        }
        _ => float_ok,
    }
}

/// Integer matrix with every eigenvalue outside the closed unit disk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DilationMatrix {
    matrix: IntMatrix,
    q: u64,
}

impl DilationMatrix {
    pub fn new(matrix: IntMatrix) -> Result<Self, LatticeError> {
        if !is_dilation(&matrix) {
            let worst = matrix
                .to_f64()
                .complex_eigenvalues()
                .iter()
                .map(|z| z.norm())
                .fold(f64::INFINITY, f64::min);
            return Err(LatticeError::NotDilation(worst));
        }
        let q = matrix.det().unsigned_abs();
        Ok(Self { matrix, q })
    }

    pub fn matrix(&self) -> &IntMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    /// Subdivision factor `q = |det A|`.
    pub fn q(&self) -> u64 {
        self.q
    }

    pub fn inv_f64(&self) -> DMatrix<f64> {
        let adj = self.matrix.adjugate().to_f64();
        adj / self.matrix.det() as f64
    }

    /// `A^{-1} x` for a real vector, exact up to one division.
    pub fn apply_inv(&self, x: &[f64]) -> Vec<f64> {
        let adj = self.matrix.adjugate();
        let d = self.matrix.det() as f64;
        (0..self.dim())
            .map(|i| {
                (0..self.dim())
                    .map(|j| adj.at(i, j) as f64 * x[j])
                    .sum::<f64>()
                    / d
            })
            .collect()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.dim())
            .map(|i| {
                (0..self.dim())
                    .map(|j| self.matrix.at(i, j) as f64 * x[j])
                    .sum()
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CosetKind {
    /// Cosets of `A G` in `G`.
    Primal,
    /// Cosets of `A^T G^bot` in `G^bot`.
    Dual,
}

/// A complete system of coset representatives, deterministically ordered:
/// the zero vector first, the rest lexicographically smallest nonnegative.
#[derive(Debug, Clone)]
pub struct CosetSystem {
    pub kind: CosetKind,
    pub reps: Vec<Vec<i64>>,
}

/// Representatives of `G/AG` (primal) or `G^bot/A^T G^bot` (dual), scanned
/// in lexicographic order over `[0, q)^n`; the scan box always contains a
/// full transversal by the Hermite normal form.
pub fn coset_reps(a: &DilationMatrix, kind: CosetKind) -> CosetSystem {
    let m = match kind {
        CosetKind::Primal => a.matrix().clone(),
        CosetKind::Dual => a.matrix().transpose(),
    };
    let n = m.dim();
    let q = a.q() as usize;
    let mut reps: Vec<Vec<i64>> = Vec::with_capacity(q);
    let bound = a.q() as i64;
    let mut v = vec![0i64; n];
    'scan: loop {
        let is_new = reps.iter().all(|r| {
            let diff: Vec<i64> = v.iter().zip(r).map(|(&x, &y)| x - y).collect();
            !m.lattice_contains(&diff)
        });
        if is_new {
            reps.push(v.clone());
            if reps.len() == q {
                break;
            }
        }
        // lexicographic increment over [0, bound)^n
        for i in (0..n).rev() {
            v[i] += 1;
            if v[i] < bound {
                continue 'scan;
            }
            v[i] = 0;
        }
        break;
    }
    assert_eq!(reps.len(), q, "coset scan must find q representatives");
    CosetSystem { kind, reps }
}

/// Duality pairing `(x, y) = exp(2 pi i <A^{-1} x, y>)`, computed from the
/// exact rational `<adj(A) x, y> / det A` so the value depends only on the
/// cosets of `x` and `y`.
pub fn pairing(x: &[i64], y: &[i64], a: &DilationMatrix) -> C64 {
    let adj = a.matrix().adjugate();
    let d = a.matrix().det();
    let mut num: i128 = 0;
    for i in 0..a.dim() {
        let mut row: i128 = 0;
        for j in 0..a.dim() {
            row += adj.at(i, j) as i128 * x[j] as i128;
        }
        num += row * y[i] as i128;
    }
    let den = d as i128;
    let frac = (num.rem_euclid(den.abs())) as f64 / den.abs() as f64;
    let theta = 2.0 * std::f64::consts::PI * if den > 0 { frac } else { -frac };
    C64::new(theta.cos(), theta.sin())
}

/// `q x q` table `T[j][k] = (x_j, y_k)` over the canonical coset systems.
/// Satisfies `q^{-1} T^* T = I`: the columns are the characters of `G/AG`.
pub fn character_table(a: &DilationMatrix) -> DMatrix<C64> {
    let primal = coset_reps(a, CosetKind::Primal);
    let dual = coset_reps(a, CosetKind::Dual);
    let q = a.q() as usize;
    DMatrix::from_fn(q, q, |j, k| pairing(&primal.reps[j], &dual.reps[k], a))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dil(rows: &[&[i64]]) -> DilationMatrix {
        DilationMatrix::new(IntMatrix::from_rows(rows)).unwrap()
    }

    #[test]
    fn dilation_detection() {
        assert!(is_dilation(&IntMatrix::from_rows(&[&[2]])));
        assert!(is_dilation(&IntMatrix::from_rows(&[&[0, 2], &[-2, 0]])));
        assert!(!is_dilation(&IntMatrix::from_rows(&[&[2, 1], &[1, 2]])));
        assert!(!is_dilation(&IntMatrix::from_rows(&[&[1]])));
        assert!(is_dilation(&IntMatrix::from_rows(&[&[1, -1], &[1, 1]])));
        assert!(!is_dilation(&IntMatrix::from_rows(&[&[1, 1], &[0, 1]])));
    }

    #[test]
    fn haar_cosets() {
        let a = dil(&[&[2]]);
        let cs = coset_reps(&a, CosetKind::Primal);
        assert_eq!(cs.reps, vec![vec![0], vec![1]]);
    }

    #[test]
    fn rotation_cosets_are_distinct() {
        let a = dil(&[&[0, 2], &[-2, 0]]);
        let cs = coset_reps(&a, CosetKind::Primal);
        assert_eq!(cs.reps.len(), 4);
        assert_eq!(cs.reps[0], vec![0, 0]);
        for i in 0..4 {
            for j in 0..i {
                let diff: Vec<i64> = cs.reps[i]
                    .iter()
                    .zip(&cs.reps[j])
                    .map(|(&x, &y)| x - y)
                    .collect();
                assert!(!a.matrix().lattice_contains(&diff));
            }
        }
    }

    #[test]
    fn quincunx_cosets() {
        let a = dil(&[&[1, -1], &[1, 1]]);
        let cs = coset_reps(&a, CosetKind::Primal);
        assert_eq!(cs.reps, vec![vec![0, 0], vec![0, 1]]);
    }

    #[test]
    fn pairing_values() {
        let a = dil(&[&[2]]);
        let v = pairing(&[1], &[1], &a);
        assert!((v - C64::new(-1.0, 0.0)).norm() < 1e-14);
        assert!((pairing(&[0], &[1], &a) - C64::new(1.0, 0.0)).norm() < 1e-14);

        let a = dil(&[&[0, 2], &[-2, 0]]);
        // A^{-1}(1,0) = (0, 1/2); <.,(1,0)> = 0
        let v = pairing(&[1, 0], &[1, 0], &a);
        assert!((v - C64::new(1.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn haar_character_table() {
        let a = dil(&[&[2]]);
        let t = character_table(&a);
        let expect = [[1.0, 1.0], [1.0, -1.0]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((t[(i, j)] - C64::new(expect[i][j], 0.0)).norm() < 1e-14);
            }
        }
    }

    fn char_orthogonality(a: &DilationMatrix) -> f64 {
        let t = character_table(a);
        let q = a.q() as f64;
        let prod = t.adjoint() * &t / C64::new(q, 0.0);
        let mut worst: f64 = 0.0;
        for i in 0..t.nrows() {
            for j in 0..t.ncols() {
                let want = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((prod[(i, j)] - C64::new(want, 0.0)).norm());
            }
        }
        worst
    }

    #[test]
    fn rotation_character_orthogonality() {
        let a = dil(&[&[0, 2], &[-2, 0]]);
        let t = character_table(&a);
        assert_eq!(t.nrows(), 4);
        for k in 0..4 {
            assert!((t[(0, k)] - C64::new(1.0, 0.0)).norm() < 1e-14);
            assert!((t[(k, 0)] - C64::new(1.0, 0.0)).norm() < 1e-14);
        }
        assert!(char_orthogonality(&a) < 1e-12);
    }

    proptest! {
        #[test]
        fn coset_count_matches_determinant(a in -3i64..=3, b in -3i64..=3, c in -3i64..=3, d in -3i64..=3) {
            let m = IntMatrix::from_rows(&[&[a, b], &[c, d]]);
            prop_assume!(is_dilation(&m) && m.det().abs() <= 12);
            let dm = DilationMatrix::new(m).unwrap();
            let cs = coset_reps(&dm, CosetKind::Primal);
            prop_assert_eq!(cs.reps.len() as u64, dm.q());
            let ds = coset_reps(&dm, CosetKind::Dual);
            prop_assert_eq!(ds.reps.len() as u64, dm.q());
        }

        #[test]
        fn pairing_is_coset_invariant(
            a in -3i64..=3, b in -3i64..=3, c in -3i64..=3, d in -3i64..=3,
            x0 in -2i64..=2, x1 in -2i64..=2, y0 in -2i64..=2, y1 in -2i64..=2,
            g0 in -2i64..=2, g1 in -2i64..=2, h0 in -2i64..=2, h1 in -2i64..=2,
        ) {
            let m = IntMatrix::from_rows(&[&[a, b], &[c, d]]);
            prop_assume!(is_dilation(&m) && m.det().abs() <= 12);
            let dm = DilationMatrix::new(m).unwrap();
            let x = [x0, x1];
            let y = [y0, y1];
            let ag = dm.matrix().mul_vec(&[g0, g1]);
            let atg = dm.matrix().transpose().mul_vec(&[h0, h1]);
            let xs = [x[0] + ag[0], x[1] + ag[1]];
            let ys = [y[0] + atg[0], y[1] + atg[1]];
            let p0 = pairing(&x, &y, &dm);
            let p1 = pairing(&xs, &ys, &dm);
            prop_assert!((p0 - p1).norm() < 1e-12);
        }

        #[test]
        fn character_tables_are_orthogonal(a in -3i64..=3, b in -3i64..=3, c in -3i64..=3, d in -3i64..=3) {
            let m = IntMatrix::from_rows(&[&[a, b], &[c, d]]);
            prop_assume!(is_dilation(&m) && m.det().abs() <= 12);
            let dm = DilationMatrix::new(m).unwrap();
            prop_assert!(char_orthogonality(&dm) < 1e-12);
        }
    }
}
