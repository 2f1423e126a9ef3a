//! Function carriers on the torus `X = R^n / Z^n`.
//!
//! Two carriers serve different jobs. [`LaurentPoly`] is an exact, finitely
//! supported frequency-to-coefficient map: products, adjoints, composition
//! with unimodular integer matrices and the conditional expectation are
//! computed on coefficients with no grid in sight. [`GridFunction`] holds
//! sampled values on a uniform grid for the objects that are not
//! polynomials (square roots of fixed vectors, normalized filters, Gram
//! fields).
//!
//! [`ScaledLaurentPoly`] represents `AG`-periodic functions: frequencies
//! live in `(A^T)^{-1} Z^n`, stored as integer vectors with the dilation as
//! denominator metadata. The conditional expectation averages over primal
//! coset translates and keeps exactly the integer frequencies.

mod bracket;

pub use bracket::{bracket, bracket_raw, BracketOptions, BracketValue, CompiledLaurent, FieldFn, TorusField};

use crate::lattice::{DilationMatrix, IntMatrix};
use crate::linalg;
use crate::C64;
use nalgebra::DMatrix;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TorusError {
    #[error("dimension mismatch between operands")]
    DimMismatch,
    #[error("lattice sum did not converge: shell magnitude {shell:.3e} at radius {radius}")]
    NonConvergent { shell: f64, radius: usize },
    #[error("field is not uniformly positive: minimum eigenvalue {min_eig:.3e} at grid point {location:?}")]
    NotUniformlyPositive { min_eig: f64, location: Vec<f64> },
    #[error("operation needs scalar (d = 1) data")]
    NotScalar,
}

/// Finitely supported map from integer frequencies to `d x d` complex
/// coefficients; evaluation is `sum_k c_k exp(2 pi i <k, x>)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LaurentPoly {
    n: usize,
    d: usize,
    coeffs: BTreeMap<Vec<i64>, DMatrix<C64>>,
}

impl LaurentPoly {
    pub fn zero(n: usize, d: usize) -> Self {
        Self {
            n,
            d,
            coeffs: BTreeMap::new(),
        }
    }

    pub fn constant(n: usize, value: DMatrix<C64>) -> Self {
        let d = value.nrows();
        let mut coeffs = BTreeMap::new();
        if value.iter().any(|z| z.norm() != 0.0) {
            coeffs.insert(vec![0; n], value);
        }
        Self { n, d, coeffs }
    }

    pub fn one(n: usize, d: usize) -> Self {
        Self::constant(n, DMatrix::identity(d, d))
    }

    /// Scalar monomial `c · e_k`.
    pub fn monomial(freq: Vec<i64>, c: C64) -> Self {
        let n = freq.len();
        let mut coeffs = BTreeMap::new();
        if c.norm() != 0.0 {
            coeffs.insert(freq, DMatrix::from_element(1, 1, c));
        }
        Self { n, d: 1, coeffs }
    }

    pub fn from_scalar_terms(n: usize, terms: &[(Vec<i64>, C64)]) -> Self {
        let mut out = Self::zero(n, 1);
        for (k, c) in terms {
            assert_eq!(k.len(), n);
            out.add_term(k.clone(), DMatrix::from_element(1, 1, *c));
        }
        out
    }

    /// Single `d x d` coefficient at frequency `k`.
    pub fn term(n: usize, k: Vec<i64>, c: DMatrix<C64>) -> Self {
        assert_eq!(k.len(), n);
        let d = c.nrows();
        let mut out = Self::zero(n, d);
        out.add_term(k, c);
        out
    }

    /// Composition with any nonsingular integer matrix: frequency
    /// relabeling `k -> M^T k` (`P ∘ M`).
    pub fn compose_with_integer(&self, m: &IntMatrix) -> Self {
        assert_eq!(m.dim(), self.n);
        assert!(m.det() != 0);
        let mt = m.transpose();
        let mut out = Self::zero(self.n, self.d);
        for (k, c) in &self.coeffs {
            out.add_term(mt.mul_vec(k), c.clone());
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn size(&self) -> usize {
        self.d
    }

    pub fn coeffs(&self) -> &BTreeMap<Vec<i64>, DMatrix<C64>> {
        &self.coeffs
    }

    pub fn support(&self) -> impl Iterator<Item = &Vec<i64>> {
        self.coeffs.keys()
    }

    pub fn coeff(&self, k: &[i64]) -> Option<&DMatrix<C64>> {
        self.coeffs.get(k)
    }

    fn add_term(&mut self, k: Vec<i64>, c: DMatrix<C64>) {
        use std::collections::btree_map::Entry;
        match self.coeffs.entry(k) {
            Entry::Vacant(e) => {
                if c.iter().any(|z| z.norm() != 0.0) {
                    e.insert(c);
                }
            }
            Entry::Occupied(mut e) => {
                *e.get_mut() += c;
                if e.get().iter().all(|z| z.norm() == 0.0) {
                    e.remove();
                }
            }
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self, TorusError> {
        if self.n != other.n || self.d != other.d {
            return Err(TorusError::DimMismatch);
        }
        let mut out = self.clone();
        for (k, c) in &other.coeffs {
            out.add_term(k.clone(), c.clone());
        }
        Ok(out)
    }

    pub fn mul(&self, other: &Self) -> Result<Self, TorusError> {
        if self.n != other.n || self.d != other.d {
            return Err(TorusError::DimMismatch);
        }
        let mut out = Self::zero(self.n, self.d);
        for (ka, ca) in &self.coeffs {
            for (kb, cb) in &other.coeffs {
                let k: Vec<i64> = ka.iter().zip(kb).map(|(&a, &b)| a + b).collect();
                out.add_term(k, ca * cb);
            }
        }
        out.prune(0.0);
        Ok(out)
    }

    pub fn scale(&self, c: C64) -> Self {
        let mut out = self.clone();
        for v in out.coeffs.values_mut() {
            *v *= c;
        }
        out.prune(0.0);
        out
    }

    /// Adjoint `c_k -> c_{-k}^*`.
    pub fn adjoint(&self) -> Self {
        let mut coeffs = BTreeMap::new();
        for (k, c) in &self.coeffs {
            coeffs.insert(k.iter().map(|&x| -x).collect(), c.adjoint());
        }
        Self {
            n: self.n,
            d: self.d,
            coeffs,
        }
    }

    /// Composition with an integer matrix of determinant `±1`: frequency
    /// relabeling `k -> h^T k`.
    pub fn compose_int(&self, h: &IntMatrix) -> Self {
        assert_eq!(h.dim(), self.n);
        assert_eq!(h.det().abs(), 1, "composition needs a unimodular matrix");
        let ht = h.transpose();
        let mut coeffs = BTreeMap::new();
        for (k, c) in &self.coeffs {
            coeffs.insert(ht.mul_vec(k), c.clone());
        }
        Self {
            n: self.n,
            d: self.d,
            coeffs,
        }
    }

    pub fn prune(&mut self, eps: f64) {
        self.coeffs
            .retain(|_, c| c.iter().map(|z| z.norm()).fold(0.0, f64::max) > eps);
    }

    pub fn eval(&self, x: &[f64]) -> DMatrix<C64> {
        let mut out = DMatrix::zeros(self.d, self.d);
        for (k, c) in &self.coeffs {
            let phase: f64 = k.iter().zip(x).map(|(&ki, &xi)| ki as f64 * xi).sum();
            let theta = 2.0 * std::f64::consts::PI * phase;
            out += c * C64::new(theta.cos(), theta.sin());
        }
        out
    }

    pub fn eval_scalar(&self, x: &[f64]) -> C64 {
        debug_assert_eq!(self.d, 1);
        let mut out = C64::new(0.0, 0.0);
        for (k, c) in &self.coeffs {
            let phase: f64 = k.iter().zip(x).map(|(&ki, &xi)| ki as f64 * xi).sum();
            let theta = 2.0 * std::f64::consts::PI * phase;
            out += c[(0, 0)] * C64::new(theta.cos(), theta.sin());
        }
        out
    }

    /// Largest coefficient deviation from Hermitian symmetry
    /// `c_k = c_{-k}^*` (zero exactly when the function is real-valued).
    pub fn hermitian_symmetry_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (k, c) in &self.coeffs {
            let neg: Vec<i64> = k.iter().map(|&x| -x).collect();
            let other = self.coeffs.get(&neg);
            let diff = match other {
                Some(o) => (c - o.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max),
                None => c.iter().map(|z| z.norm()).fold(0.0, f64::max),
            };
            worst = worst.max(diff);
        }
        worst
    }
}

/// `AG`-periodic trigonometric polynomial: frequencies in `(A^T)^{-1} Z^n`,
/// stored as the integer numerators.
#[derive(Debug, Clone)]
pub struct ScaledLaurentPoly {
    denom: DilationMatrix,
    inner: LaurentPoly,
}

impl ScaledLaurentPoly {
    /// Reinterpret `m ∘ p ∘ A^{-1}`: the frequency `k` of `m` becomes the
    /// scaled frequency `k` (meaning `(A^T)^{-1} k`).
    pub fn from_composed_inv(m: &LaurentPoly, a: &DilationMatrix) -> Self {
        assert_eq!(m.dim(), a.dim());
        Self {
            denom: a.clone(),
            inner: m.clone(),
        }
    }

    /// Lift an ordinary Laurent polynomial: frequency `j` becomes the
    /// scaled frequency `A^T j`.
    pub fn lift(p: &LaurentPoly, a: &DilationMatrix) -> Self {
        let at = a.matrix().transpose();
        let mut inner = LaurentPoly::zero(p.dim(), p.size());
        for (k, c) in p.coeffs() {
            inner.add_term(at.mul_vec(k), c.clone());
        }
        Self {
            denom: a.clone(),
            inner,
        }
    }

    /// The coset character `f = e^{2 pi i <A^{-1} x, y>}` for a dual
    /// representative `y`.
    pub fn character(y: &[i64], a: &DilationMatrix) -> Self {
        Self {
            denom: a.clone(),
            inner: LaurentPoly::monomial(y.to_vec(), C64::new(1.0, 0.0)),
        }
    }

    pub fn denom(&self) -> &DilationMatrix {
        &self.denom
    }

    pub fn inner(&self) -> &LaurentPoly {
        &self.inner
    }

    pub fn mul(&self, other: &Self) -> Result<Self, TorusError> {
        if self.denom != other.denom {
            return Err(TorusError::DimMismatch);
        }
        Ok(Self {
            denom: self.denom.clone(),
            inner: self.inner.mul(&other.inner)?,
        })
    }

    pub fn adjoint(&self) -> Self {
        Self {
            denom: self.denom.clone(),
            inner: self.inner.adjoint(),
        }
    }

    pub fn eval(&self, x: &[f64]) -> DMatrix<C64> {
        let y = self.denom.apply_inv(x);
        self.inner.eval(&y)
    }
}

/// Conditional expectation onto the integer frequencies: averaging over the
/// primal coset translates `f(x - x_j)` annihilates every scaled frequency
/// outside `A^T Z^n` by character orthogonality, so the result keeps
/// exactly the frequencies lying in `Z^n`. Computed exactly on
/// coefficients.
pub fn cond_expect(f: &ScaledLaurentPoly) -> LaurentPoly {
    let a = f.denom();
    let at = a.matrix().transpose();
    let adj_t = at.adjugate();
    let det = at.det();
    let mut out = LaurentPoly::zero(f.inner().dim(), f.inner().size());
    for (k, c) in f.inner().coeffs() {
        // (A^T)^{-1} k integral <=> adj(A^T) k ≡ 0 mod det
        let v = adj_t.mul_vec(k);
        if v.iter().all(|&x| x.rem_euclid(det.abs()) == 0) {
            let mapped: Vec<i64> = v.iter().map(|&x| x / det).collect();
            out.add_term(mapped, c.clone());
        }
    }
    out
}

/// `d x d` complex samples at the points `j / N`, `j ∈ [0, N)^n`.
#[derive(Debug, Clone)]
pub struct GridFunction {
    n: usize,
    d: usize,
    resolution: usize,
    samples: Vec<DMatrix<C64>>,
}

impl GridFunction {
    pub fn from_fn(
        n: usize,
        d: usize,
        resolution: usize,
        f: impl Fn(&[f64]) -> DMatrix<C64> + Sync,
    ) -> Self {
        assert!(resolution >= 4, "grid resolution must be at least 4");
        let total = resolution.pow(n as u32);
        let samples: Vec<DMatrix<C64>> = (0..total)
            .map(|idx| {
                let x = Self::point_of(n, resolution, idx);
                f(&x)
            })
            .collect();
        Self {
            n,
            d,
            resolution,
            samples,
        }
    }

    pub fn from_scalar_fn(
        n: usize,
        resolution: usize,
        f: impl Fn(&[f64]) -> C64 + Sync,
    ) -> Self {
        Self::from_fn(n, 1, resolution, |x| DMatrix::from_element(1, 1, f(x)))
    }

    pub fn from_parts(n: usize, d: usize, resolution: usize, samples: Vec<DMatrix<C64>>) -> Self {
        assert_eq!(samples.len(), resolution.pow(n as u32));
        Self {
            n,
            d,
            resolution,
            samples,
        }
    }

    fn point_of(n: usize, resolution: usize, mut idx: usize) -> Vec<f64> {
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            x[i] = (idx % resolution) as f64 / resolution as f64;
            idx /= resolution;
        }
        x
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn size(&self) -> usize {
        self.d
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample(&self, idx: usize) -> &DMatrix<C64> {
        &self.samples[idx]
    }

    pub fn point(&self, idx: usize) -> Vec<f64> {
        Self::point_of(self.n, self.resolution, idx)
    }

    pub fn scalar(&self, idx: usize) -> C64 {
        debug_assert_eq!(self.d, 1);
        self.samples[idx][(0, 0)]
    }

    pub fn iter(&self) -> impl Iterator<Item = (Vec<f64>, &DMatrix<C64>)> {
        (0..self.len()).map(|i| (self.point(i), &self.samples[i]))
    }

    pub fn map(&self, f: impl Fn(&DMatrix<C64>) -> DMatrix<C64>) -> Self {
        Self {
            n: self.n,
            d: self.samples.first().map(|m| m.nrows()).unwrap_or(self.d),
            resolution: self.resolution,
            samples: self.samples.iter().map(f).collect(),
        }
    }

    pub fn max_scalar_abs(&self) -> f64 {
        self.samples
            .iter()
            .flat_map(|m| m.iter())
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }
}

/// Pointwise inverse square root of a Hermitian-positive grid field.
/// Fails when any sample has an eigenvalue below `floor`.
pub fn grid_inv_sqrt(gf: &GridFunction, floor: f64) -> Result<GridFunction, TorusError> {
    let mut out = Vec::with_capacity(gf.len());
    for idx in 0..gf.len() {
        let m = gf.sample(idx);
        let herm = (m + m.adjoint()) * C64::new(0.5, 0.0);
        let (vals, _) = linalg::hermitian_eigen(&herm);
        let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        if min < floor {
            return Err(TorusError::NotUniformlyPositive {
                min_eig: min,
                location: gf.point(idx),
            });
        }
        out.push(linalg::hermitian_fn(&herm, |x| 1.0 / x.sqrt()));
    }
    Ok(GridFunction {
        n: gf.n,
        d: gf.d,
        resolution: gf.resolution,
        samples: out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::DilationMatrix;
    use proptest::prelude::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn e1(k: i64) -> LaurentPoly {
        LaurentPoly::monomial(vec![k], c(1.0))
    }

    #[test]
    fn adjoint_flips_frequency() {
        let p = e1(3);
        let q = p.adjoint();
        assert!(q.coeff(&[-3]).is_some());
        assert!(q.coeff(&[3]).is_none());
    }

    #[test]
    fn product_telescopes() {
        // (1 + e_1)(1 - e_1) = 1 - e_2
        let one = LaurentPoly::one(1, 1);
        let p = one.add(&e1(1)).unwrap();
        let q = one.add(&e1(1).scale(c(-1.0))).unwrap();
        let prod = p.mul(&q).unwrap();
        assert_eq!(prod.coeffs().len(), 2);
        assert!((prod.coeff(&[0]).unwrap()[(0, 0)] - c(1.0)).norm() < 1e-15);
        assert!((prod.coeff(&[2]).unwrap()[(0, 0)] - c(-1.0)).norm() < 1e-15);
    }

    #[test]
    fn adjoint_product_is_hermitian() {
        let p = LaurentPoly::from_scalar_terms(
            1,
            &[
                (vec![0], C64::new(1.0, 0.5)),
                (vec![1], C64::new(-0.3, 0.2)),
                (vec![2], C64::new(0.1, -0.7)),
            ],
        );
        let h = p.adjoint().mul(&p).unwrap();
        assert!(h.hermitian_symmetry_defect() < 1e-15);
    }

    #[test]
    fn compose_with_identity_and_negation() {
        let p = LaurentPoly::monomial(vec![1, 0], c(2.0));
        let id = IntMatrix::identity(2);
        assert_eq!(p.compose_int(&id), p);
        let neg = IntMatrix::from_rows(&[&[-1, 0], &[0, -1]]);
        let q = p.compose_int(&neg);
        assert!(q.coeff(&[-1, 0]).is_some());
        let back = q.compose_int(&neg);
        assert_eq!(back, p);
    }

    #[test]
    fn cond_expect_keeps_integer_frequencies() {
        let a = DilationMatrix::new(IntMatrix::from_rows(&[&[2]])).unwrap();
        // constant is fixed
        let one = ScaledLaurentPoly::lift(&LaurentPoly::one(1, 1), &a);
        let p = cond_expect(&one);
        assert!((p.eval_scalar(&[0.3]) - c(1.0)).norm() < 1e-15);
        // e^{pi i x} has scaled frequency 1, not in 2Z: annihilated
        let half = ScaledLaurentPoly::character(&[1], &a);
        assert_eq!(cond_expect(&half).coeffs().len(), 0);
    }

    #[test]
    fn cond_expect_character_orthogonality() {
        let a = DilationMatrix::new(IntMatrix::from_rows(&[&[0, 2], &[-2, 0]])).unwrap();
        let dual = crate::lattice::coset_reps(&a, crate::lattice::CosetKind::Dual);
        for (i, yi) in dual.reps.iter().enumerate() {
            for (j, yj) in dual.reps.iter().enumerate() {
                let fi = ScaledLaurentPoly::character(yi, &a);
                let fj = ScaledLaurentPoly::character(yj, &a);
                let p = cond_expect(&fi.mul(&fj.adjoint()).unwrap());
                let v = if p.coeffs().is_empty() {
                    c(0.0)
                } else {
                    p.eval_scalar(&[0.0, 0.0])
                };
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((v - c(want)).norm() < 1e-14, "({i},{j})");
            }
        }
    }

    #[test]
    fn cond_expect_is_idempotent_on_lifts() {
        let a = DilationMatrix::new(IntMatrix::from_rows(&[&[1, -1], &[1, 1]])).unwrap();
        let p = LaurentPoly::from_scalar_terms(
            2,
            &[
                (vec![0, 0], c(1.0)),
                (vec![1, 0], C64::new(0.2, -0.1)),
                (vec![-1, 2], C64::new(0.0, 0.4)),
            ],
        );
        let lifted = ScaledLaurentPoly::lift(&p, &a);
        let back = cond_expect(&lifted);
        assert_eq!(back, p);
    }

    #[test]
    fn grid_inv_sqrt_scalar_and_matrix() {
        let gf = GridFunction::from_fn(1, 1, 8, |_| DMatrix::from_element(1, 1, c(4.0)));
        let s = grid_inv_sqrt(&gf, 1e-8).unwrap();
        assert!((s.scalar(0) - c(0.5)).norm() < 1e-14);

        let gf = GridFunction::from_fn(1, 1, 8, |_| DMatrix::from_element(1, 1, c(0.5)));
        let s = grid_inv_sqrt(&gf, 1e-8).unwrap();
        assert!((s.scalar(0) - c(std::f64::consts::SQRT_2)).norm() < 1e-14);

        let gf = GridFunction::from_fn(1, 1, 8, |x| {
            DMatrix::from_element(1, 1, c(-1.0 + 2.0 * x[0]))
        });
        assert!(matches!(
            grid_inv_sqrt(&gf, 1e-8),
            Err(TorusError::NotUniformlyPositive { .. })
        ));
    }

    proptest! {
        #[test]
        fn inv_sqrt_squares_to_inverse(seed in 0u64..200) {
            use rand::{Rng, SeedableRng};
            let rng = std::sync::Mutex::new(rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let gf = GridFunction::from_fn(1, 2, 4, |_| {
                let mut rng = rng.lock().unwrap();
                let mut m = DMatrix::<C64>::zeros(2, 2);
                for i in 0..2 {
                    for j in 0..2 {
                        m[(i, j)] = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                    }
                }
                // Hermitian positive by construction
                &m * m.adjoint() + DMatrix::identity(2, 2) * c(0.3)
            });
            let s = grid_inv_sqrt(&gf, 1e-10).unwrap();
            for idx in 0..gf.len() {
                let g = gf.sample(idx);
                let si = s.sample(idx);
                let p = si * g * si;
                for i in 0..2 {
                    for j in 0..2 {
                        let want = if i == j { 1.0 } else { 0.0 };
                        prop_assert!((p[(i,j)] - c(want)).norm() < 1e-10);
                    }
                }
            }
        }
    }
}
