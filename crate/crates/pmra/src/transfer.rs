//! Transfer-operator machinery for low-pass filters.
//!
//! For a `d x d` filter `m` and dilation `A` with `q = |det A|`, the
//! transfer operator is
//!
//! `R u (x) = q^{-1} sum_{y in r^{-1}(x)} m^*(y) u(y) m(y)`,
//!
//! `r` the map induced by `A` on the torus. On Laurent coefficients this is
//! exact: with `w = m^* u m`, the image keeps the frequencies divisible by
//! `A^T` and relabels them, `(R u)_k = w_{A^T k}`; frequencies outside
//! `A^T Z^n` are annihilated by the character sum over the preimage fiber.
//! Restricted to an invariant frequency box the operator becomes a finite
//! matrix whose spectrum certifies the cascade construction downstream.
//!
//! A raw filter whose transfer operator has leading eigenvalue `lambda` and
//! uniformly positive fixed vector `u` is normalized to
//! `m(x) = lambda^{-1/2} u^{-1/2}(r x) m'(x) u^{1/2}(x)`; the scalar factor
//! makes the normalized operator satisfy `R 1 = 1` exactly, and equals one
//! whenever the raw leading eigenvalue is already one. The conjugation
//! `Theta(v) = u^{1/2} v u^{1/2}` intertwines the raw and normalized
//! operators, so their spectra agree up to the scalar factor.

use crate::lattice::{coset_reps, CosetKind, DilationMatrix};
use crate::linalg;
use crate::symmetry::{is_affiliated, SymmetryGroup};
use crate::torusfn::{CompiledLaurent, LaurentPoly};
use crate::C64;
use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TransferError {
    #[error("support iteration failed to stabilize within {0} rounds")]
    NoInvariantBox(usize),
    #[error("frequency box is not invariant: image frequency {0:?} escapes")]
    BoxNotInvariant(Vec<i64>),
    #[error("w must be a unit vector of length d")]
    BadVector,
    #[error("symmetry group is not affiliated to the dilation")]
    NotAffiliated,
    #[error("no simple leading eigenvalue: |l1| = {0:.6e}, |l2| = {1:.6e}")]
    NoSimpleLeading(f64, f64),
    #[error("fixed vector is not uniformly positive: min {min:.3e} at {location:?}")]
    NotPositive { min: f64, location: Vec<f64> },
    #[error("eigenvector extraction failed")]
    Eigenvector,
    #[error(transparent)]
    Torus(#[from] crate::torusfn::TorusError),
    #[error(transparent)]
    Lattice(#[from] crate::lattice::LatticeError),
}

/// Raw filter data: the trigonometric polynomial `m'`, the dilation, the
/// affiliated symmetry group and the distinguished unit vector.
#[derive(Debug, Clone)]
pub struct FilterSpec {
    pub m_prime: LaurentPoly,
    pub dilation: DilationMatrix,
    pub symmetry: SymmetryGroup,
    pub w: Vec<C64>,
}

impl FilterSpec {
    pub fn new(
        m_prime: LaurentPoly,
        dilation: DilationMatrix,
        symmetry: SymmetryGroup,
        w: Vec<C64>,
    ) -> Result<Self, TransferError> {
        if w.len() != m_prime.size() {
            return Err(TransferError::BadVector);
        }
        let norm: f64 = w.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(TransferError::BadVector);
        }
        if !is_affiliated(&dilation, &symmetry).verdict {
            return Err(TransferError::NotAffiliated);
        }
        Ok(Self {
            m_prime,
            dilation,
            symmetry,
            w,
        })
    }

    pub fn q(&self) -> u64 {
        self.dilation.q()
    }
}

/// Point-evaluable `d x d` filter.
pub trait Filter: Sync + Send {
    fn dim(&self) -> usize;
    fn size(&self) -> usize;
    fn eval_matrix(&self, x: &[f64]) -> DMatrix<C64>;
    fn eval_scalar(&self, x: &[f64]) -> C64 {
        debug_assert_eq!(self.size(), 1);
        self.eval_matrix(x)[(0, 0)]
    }
}

impl Filter for LaurentPoly {
    fn dim(&self) -> usize {
        LaurentPoly::dim(self)
    }
    fn size(&self) -> usize {
        LaurentPoly::size(self)
    }
    fn eval_matrix(&self, x: &[f64]) -> DMatrix<C64> {
        self.eval(x)
    }
    fn eval_scalar(&self, x: &[f64]) -> C64 {
        LaurentPoly::eval_scalar(self, x)
    }
}

/// Smallest stable frequency box for the support iteration
/// `F -> (A^T)^{-1}(F + V) ∩ Z^n`, `V` the support differences of the
/// filter, grown from `V ∪ {0}` until stable. When `||(A^T)^{-1}||_2 < 1`
/// the closed-form radius bound applies and the iterated box is checked
/// against it.
pub fn invariant_box(
    m: &LaurentPoly,
    a: &DilationMatrix,
) -> Result<Vec<Vec<i64>>, TransferError> {
    use std::collections::BTreeSet;
    let n = m.dim();
    let supp: Vec<&Vec<i64>> = m.support().collect();
    let mut diffs: BTreeSet<Vec<i64>> = BTreeSet::new();
    for s in &supp {
        for t in &supp {
            diffs.insert(s.iter().zip(t.iter()).map(|(&x, &y)| x - y).collect());
        }
    }
    let at = a.matrix().transpose();
    let adj = at.adjugate();
    let det = at.det();
    let mut f: BTreeSet<Vec<i64>> = diffs.clone();
    f.insert(vec![0; n]);
    let cap = 10 * f.len().max(8);
    let mut stable = false;
    for _ in 0..cap {
        let mut next = f.clone();
        for k in &f {
            for v in &diffs {
                let s: Vec<i64> = k.iter().zip(v).map(|(&x, &y)| x + y).collect();
                let num = adj.mul_vec(&s);
                if num.iter().all(|&x| x.rem_euclid(det.abs()) == 0) {
                    next.insert(num.iter().map(|&x| x / det).collect());
                }
            }
        }
        if next == f {
            stable = true;
            break;
        }
        f = next;
    }
    if !stable {
        return Err(TransferError::NoInvariantBox(cap));
    }
    // closed-form radius cross-check where the contraction applies
    let at_inv = a.inv_f64().transpose();
    let op_norm = spectral_norm_2(&at_inv);
    if op_norm < 1.0 {
        let vmax = diffs
            .iter()
            .map(|v| (v.iter().map(|&x| (x * x) as f64).sum::<f64>()).sqrt())
            .fold(0.0, f64::max);
        let bound = op_norm * vmax / (1.0 - op_norm) + 1.0;
        for k in &f {
            let r = (k.iter().map(|&x| (x * x) as f64).sum::<f64>()).sqrt();
            assert!(
                r <= bound + 1e-9,
                "iterated box member {k:?} escapes the radius bound {bound}"
            );
        }
    }
    Ok(f.into_iter().collect())
}

fn spectral_norm_2(m: &DMatrix<f64>) -> f64 {
    let mtm = m.transpose() * m;
    mtm.symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .fold(0.0, f64::max)
        .sqrt()
}

/// The transfer operator on Laurent coefficients: `w = m^* u m`, keep and
/// relabel the frequencies divisible by `A^T`.
pub fn transfer_apply(m: &LaurentPoly, u: &LaurentPoly, a: &DilationMatrix) -> LaurentPoly {
    let w = m
        .adjoint()
        .mul(u)
        .and_then(|p| p.mul(m))
        .expect("dimension match");
    let at = a.matrix().transpose();
    let adj = at.adjugate();
    let det = at.det();
    let mut out = LaurentPoly::zero(m.dim(), m.size());
    for (k, c) in w.coeffs() {
        let num = adj.mul_vec(k);
        if num.iter().all(|&x| x.rem_euclid(det.abs()) == 0) {
            let mapped: Vec<i64> = num.iter().map(|&x| x / det).collect();
            out = out
                .add(&LaurentPoly::term(m.dim(), mapped, c.clone()))
                .expect("dimension match");
        }
    }
    out
}

/// Matrix of the transfer operator restricted to the span of the box
/// frequencies, basis ordered frequency-major then column-major in the
/// `d x d` coefficient entries.
#[derive(Debug, Clone)]
pub struct TransferMatrixRep {
    pub frequencies: Vec<Vec<i64>>,
    pub d: usize,
    pub matrix: DMatrix<C64>,
    pub dilation: DilationMatrix,
}

pub fn transfer_matrix(
    m: &LaurentPoly,
    j_box: &[Vec<i64>],
    a: &DilationMatrix,
) -> Result<TransferMatrixRep, TransferError> {
    let d = m.size();
    let n = m.dim();
    let dim = j_box.len() * d * d;
    let index: std::collections::BTreeMap<&Vec<i64>, usize> =
        j_box.iter().enumerate().map(|(i, k)| (k, i)).collect();
    let mut matrix = DMatrix::<C64>::zeros(dim, dim);
    for (fi, k) in j_box.iter().enumerate() {
        for ci in 0..d {
            for cj in 0..d {
                let col = fi * d * d + ci * d + cj;
                let mut unit = DMatrix::zeros(d, d);
                unit[(ci, cj)] = C64::new(1.0, 0.0);
                let basis = LaurentPoly::term(n, k.clone(), unit);
                let image = transfer_apply(m, &basis, a);
                for (kk, cc) in image.coeffs() {
                    let row_f = *index
                        .get(kk)
                        .ok_or_else(|| TransferError::BoxNotInvariant(kk.clone()))?;
                    for ri in 0..d {
                        for rj in 0..d {
                            if cc[(ri, rj)].norm() != 0.0 {
                                matrix[(row_f * d * d + ri * d + rj, col)] += cc[(ri, rj)];
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(TransferMatrixRep {
        frequencies: j_box.to_vec(),
        d,
        matrix,
        dilation: a.clone(),
    })
}

/// Numeric thresholds for the spectral verdicts.
#[derive(Debug, Clone, Copy)]
pub struct SpectralOptions {
    pub eps_eig: f64,
    pub eps_peripheral: f64,
    pub qmf_grid: usize,
    pub qmf_tol: f64,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        Self {
            eps_eig: 1e-9,
            eps_peripheral: 1e-7,
            qmf_grid: 32,
            qmf_tol: 1e-9,
        }
    }
}

/// Spectral data of the transfer matrix and the five certification
/// verdicts for the (normalized) filter.
#[derive(Debug, Clone)]
pub struct SpectralReport {
    /// Eigenvalues of the raw operator, sorted by decreasing modulus.
    pub eigenvalues: Vec<C64>,
    /// Leading eigenvalue of the raw operator.
    pub raw_leading: C64,
    /// Scalar applied to the filter so the normalized operator fixes the
    /// constants; equals `raw_leading^{-1/2}` and is 1 when that eigenvalue
    /// is already 1.
    pub rescale: f64,
    /// Eigenvalues after normalization (raw spectrum divided by the
    /// leading eigenvalue).
    pub normalized_eigenvalues: Vec<C64>,
    /// Peripheral set of the normalized spectrum (`|λ| > 1 - eps`).
    pub peripheral: Vec<C64>,
    pub geometric_multiplicity_one: usize,
    /// Spectrum of `q^{-1/2} m(0)` for the filter under test.
    pub m_zero_spectrum: Vec<C64>,
    /// Algebraic multiplicity of `sqrt q` as an eigenvalue of `m(0)`.
    pub sqrt_q_multiplicity: usize,
    /// Largest deviation of the quadrature-mirror sum
    /// `q^{-1} sum_j m^* m` over the preimage fiber from the identity.
    pub qmf_residual: f64,
    /// Conditions: (1) fixes constants, (2) unit circle meets the spectrum
    /// only at 1, (3) eigenvalue 1 geometrically simple, (4) unit circle
    /// meets `sp(q^{-1/2} m(0))` only at 1, (5) `sqrt q` algebraically
    /// simple for `m(0)`.
    pub conditions: [bool; 5],
    /// `1 - max(|λ|, λ != 1)` over the normalized spectrum.
    pub gap: f64,
    /// Set when the leading raw eigenvalue differs from one: the raw filter
    /// mean at zero is inconsistent with `sqrt q`.
    pub scale_mismatch: bool,
}

impl SpectralReport {
    pub fn all_conditions(&self) -> bool {
        self.conditions.iter().all(|&c| c)
    }
}

pub fn spectral_check(
    spec: &FilterSpec,
    rep: &TransferMatrixRep,
    m_used: &dyn Filter,
    opts: &SpectralOptions,
) -> SpectralReport {
    let q = spec.q() as f64;
    let mut eigenvalues = linalg::complex_eigenvalues(&rep.matrix);
    eigenvalues.sort_by(|a, b| (b.norm(), b.re, b.im).partial_cmp(&(a.norm(), a.re, a.im)).unwrap());
    let raw_leading = eigenvalues[0];
    let rescale = 1.0 / raw_leading.norm().sqrt();
    let scale_mismatch = (raw_leading - C64::new(1.0, 0.0)).norm() > opts.eps_eig;
    let normalized_eigenvalues: Vec<C64> = eigenvalues
        .iter()
        .map(|z| z / C64::new(raw_leading.norm(), 0.0))
        .collect();
    let peripheral: Vec<C64> = normalized_eigenvalues
        .iter()
        .cloned()
        .filter(|z| z.norm() > 1.0 - opts.eps_peripheral)
        .collect();
    let cond2 = peripheral.len() == 1
        && (peripheral[0] - C64::new(1.0, 0.0)).norm() <= opts.eps_eig.sqrt();
    let gap = normalized_eigenvalues
        .iter()
        .skip(1)
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    let gap = 1.0 - gap;
    // geometric multiplicity of the normalized eigenvalue 1
    let dim = rep.matrix.nrows();
    let scaled = &rep.matrix / C64::new(raw_leading.norm(), 0.0);
    let shifted = &scaled - DMatrix::<C64>::identity(dim, dim);
    let rank = linalg::complex_rank(&shifted, 1e-9);
    let geometric_multiplicity_one = dim - rank;
    let cond3 = geometric_multiplicity_one == 1;

    // QMF residual of the filter under test on a grid
    let qmf_residual = qmf_residual(m_used, &spec.dilation, opts.qmf_grid);
    let cond1 = qmf_residual <= opts.qmf_tol;

    // m(0) conditions
    let m0 = m_used.eval_matrix(&vec![0.0; spec.dilation.dim()]);
    let m0_scaled = &m0 / C64::new(q.sqrt(), 0.0);
    let m_zero_spectrum = linalg::complex_eigenvalues(&m0_scaled);
    let on_circle: Vec<&C64> = m_zero_spectrum
        .iter()
        .filter(|z| z.norm() > 1.0 - opts.eps_peripheral)
        .collect();
    let cond4 = on_circle.len() == 1
        && (on_circle[0] - C64::new(1.0, 0.0)).norm() <= 1e-6
        && m_zero_spectrum.iter().all(|z| z.norm() <= 1.0 + 1e-9);
    let sqrt_q_multiplicity = m_zero_spectrum
        .iter()
        .filter(|z| (*z - C64::new(1.0, 0.0)).norm() <= 1e-9)
        .count();
    let cond5 = sqrt_q_multiplicity == 1;

    SpectralReport {
        eigenvalues,
        raw_leading,
        rescale,
        normalized_eigenvalues,
        peripheral,
        geometric_multiplicity_one,
        m_zero_spectrum,
        sqrt_q_multiplicity,
        qmf_residual,
        conditions: [cond1, cond2, cond3, cond4, cond5],
        gap,
        scale_mismatch,
    }
}

/// Largest deviation over the grid of the preimage-fiber sum
/// `q^{-1} sum_j m^*(z_j) m(z_j)` from the identity.
pub fn qmf_residual(m: &dyn Filter, a: &DilationMatrix, grid: usize) -> f64 {
    let n = a.dim();
    let q = a.q() as f64;
    let primal = coset_reps(a, CosetKind::Primal);
    let d = m.size();
    let total = grid.pow(n as u32);
    let mut worst: f64 = 0.0;
    for mut idx in 0..total {
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            x[i] = (idx % grid) as f64 / grid as f64;
            idx /= grid;
        }
        let mut acc = DMatrix::<C64>::zeros(d, d);
        for rep in &primal.reps {
            let shifted: Vec<f64> = x.iter().zip(rep).map(|(&xi, &ri)| xi - ri as f64).collect();
            let z = a.apply_inv(&shifted);
            let mv = m.eval_matrix(&z);
            acc += mv.adjoint() * mv;
        }
        acc /= C64::new(q, 0.0);
        for i in 0..d {
            for j in 0..d {
                let want = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((acc[(i, j)] - C64::new(want, 0.0)).norm());
            }
        }
    }
    worst
}

/// Positive fixed vector of the restricted transfer operator with its
/// positivity certificate.
#[derive(Debug, Clone)]
pub struct FixedPoint {
    pub vector: LaurentPoly,
    pub leading: C64,
    /// Minimum over the certification grid (of the smallest eigenvalue for
    /// matrix data).
    pub min: f64,
    pub argmin: Vec<f64>,
    /// Distance between the Cesàro average direction and the eigenvector
    /// direction.
    pub cesaro_residual: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct FixedPointOptions {
    pub grid: usize,
    pub pos_tol: f64,
    pub eps_eig: f64,
    pub cesaro_depth: usize,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        Self {
            grid: 128,
            pos_tol: 1e-8,
            eps_eig: 1e-9,
            cesaro_depth: 512,
        }
    }
}

pub fn fixed_point(
    rep: &TransferMatrixRep,
    opts: &FixedPointOptions,
) -> Result<FixedPoint, TransferError> {
    let mut eigs = linalg::complex_eigenvalues(&rep.matrix);
    eigs.sort_by(|a, b| (b.norm(), b.re, b.im).partial_cmp(&(a.norm(), a.re, a.im)).unwrap());
    let leading = eigs[0];
    if eigs.len() > 1 && (eigs[1].norm() - leading.norm()).abs() < opts.eps_eig {
        return Err(TransferError::NoSimpleLeading(leading.norm(), eigs[1].norm()));
    }
    let v = linalg::inverse_iteration(&rep.matrix, leading, 12)
        .ok_or(TransferError::Eigenvector)?;
    let d = rep.d;
    let n = rep.dilation.dim();
    // phase: trace of the zero-frequency coefficient real positive
    let zero = vec![0i64; n];
    let zi = rep
        .frequencies
        .iter()
        .position(|k| *k == zero)
        .expect("invariant box contains the zero frequency");
    let mut tr0 = C64::new(0.0, 0.0);
    for i in 0..d {
        tr0 += v[zi * d * d + i * d + i];
    }
    if tr0.norm() < 1e-14 {
        return Err(TransferError::Eigenvector);
    }
    let phase = tr0 / tr0.norm();
    let mut poly = LaurentPoly::zero(n, d);
    for (fi, k) in rep.frequencies.iter().enumerate() {
        let mut c = DMatrix::<C64>::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                c[(i, j)] = v[fi * d * d + i * d + j] / phase;
            }
        }
        poly = poly.add(&LaurentPoly::term(n, k.clone(), c)).unwrap();
    }
    // selfadjoint part (the fixed space of R is adjoint-stable); drop
    // coefficients at the eigensolver noise floor
    let mut poly = poly.add(&poly.adjoint()).unwrap().scale(C64::new(0.5, 0.0));
    let cmax = poly
        .coeffs()
        .values()
        .flat_map(|m| m.iter())
        .map(|z| z.norm())
        .fold(0.0f64, f64::max);
    poly.prune(1e-12 * cmax);

    // positivity certificate on the grid, then scale so the max is one
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    let mut argmin = vec![0.0; n];
    let total = opts.grid.pow(n as u32);
    for mut idx in 0..total {
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            x[i] = (idx % opts.grid) as f64 / opts.grid as f64;
            idx /= opts.grid;
        }
        let m = poly.eval(&x);
        let lo;
        let hi;
        if d == 1 {
            lo = m[(0, 0)].re;
            hi = lo;
        } else {
            let herm = (&m + m.adjoint()) * C64::new(0.5, 0.0);
            let (vals, _) = linalg::hermitian_eigen(&herm);
            lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
            hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        }
        if lo < min {
            min = lo;
            argmin = x.clone();
        }
        max = max.max(hi);
    }
    let poly = poly.scale(C64::new(1.0 / max, 0.0));
    let min = min / max;
    if min <= opts.pos_tol {
        return Err(TransferError::NotPositive {
            min,
            location: argmin,
        });
    }

    // Cesàro cross-check on the rescaled matrix from the constant start
    let dim = rep.matrix.nrows();
    let scaled = &rep.matrix / C64::new(leading.norm(), 0.0);
    let mut cur = nalgebra::DVector::<C64>::zeros(dim);
    for i in 0..d {
        cur[zi * d * d + i * d + i] = C64::new(1.0, 0.0);
    }
    let mut acc = nalgebra::DVector::<C64>::zeros(dim);
    for _ in 0..opts.cesaro_depth {
        cur = &scaled * cur;
        acc += &cur;
    }
    let acc_norm = acc.norm();
    let vdir = &v / C64::new(v.norm(), 0.0);
    let cesaro_residual = if acc_norm > 0.0 {
        let adir = &acc / C64::new(acc_norm, 0.0);
        let ip: C64 = vdir.dotc(&adir);
        let aligned = &adir * (ip.conj() / ip.norm());
        (&vdir - aligned).norm()
    } else {
        f64::INFINITY
    };

    Ok(FixedPoint {
        vector: poly,
        leading,
        min,
        argmin,
        cesaro_residual,
    })
}

/// Point-evaluable normalized filter
/// `m(x) = rescale · u^{-1/2}(r x) · m'(x) · u^{1/2}(x)`.
pub struct NormalizedFilter {
    n: usize,
    d: usize,
    rescale: f64,
    m_prime: LaurentPoly,
    u: LaurentPoly,
    // compiled scalar fast path (d = 1)
    m_prime_c: Option<CompiledLaurent>,
    u_c: Option<CompiledLaurent>,
    u_ra: Option<CompiledLaurent>,
    a_rows: Vec<Vec<f64>>,
}

impl NormalizedFilter {
    pub fn new(
        m_prime: &LaurentPoly,
        u: &LaurentPoly,
        a: &DilationMatrix,
        rescale: f64,
    ) -> Self {
        let n = m_prime.dim();
        let d = m_prime.size();
        let (m_prime_c, u_c, u_ra) = if d == 1 {
            let u_comp_a = u.compose_with_integer(a.matrix());
            (
                Some(CompiledLaurent::from_scalar(m_prime)),
                Some(CompiledLaurent::from_scalar(u)),
                Some(CompiledLaurent::from_scalar(&u_comp_a)),
            )
        } else {
            (None, None, None)
        };
        let a_rows = (0..n)
            .map(|i| (0..n).map(|j| a.matrix().at(i, j) as f64).collect())
            .collect();
        Self {
            n,
            d,
            rescale,
            m_prime: m_prime.clone(),
            u: u.clone(),
            m_prime_c,
            u_c,
            u_ra,
            a_rows,
        }
    }

    pub fn rescale(&self) -> f64 {
        self.rescale
    }

    pub fn fixed_vector(&self) -> &LaurentPoly {
        &self.u
    }

    pub fn raw_filter(&self) -> &LaurentPoly {
        &self.m_prime
    }
}

impl Filter for NormalizedFilter {
    fn dim(&self) -> usize {
        self.n
    }
    fn size(&self) -> usize {
        self.d
    }
    fn eval_matrix(&self, x: &[f64]) -> DMatrix<C64> {
        if self.d == 1 {
            return DMatrix::from_element(1, 1, self.eval_scalar(x));
        }
        let ax: Vec<f64> = self
            .a_rows
            .iter()
            .map(|row| row.iter().zip(x).map(|(&a, &xi)| a * xi).sum())
            .collect();
        let u_x = self.u.eval(x);
        let u_ax = self.u.eval(&ax);
        let herm = |m: &DMatrix<C64>| (m + m.adjoint()) * C64::new(0.5, 0.0);
        let u_x_h = linalg::hermitian_fn(&herm(&u_x), |t| t.max(1e-300).sqrt());
        let u_ax_h = linalg::hermitian_fn(&herm(&u_ax), |t| 1.0 / t.max(1e-300).sqrt());
        let mp = self.m_prime.eval(x);
        (u_ax_h * mp * u_x_h) * C64::new(self.rescale, 0.0)
    }
    fn eval_scalar(&self, x: &[f64]) -> C64 {
        // u ∘ A is precompiled with transposed frequencies, so both factors
        // evaluate at x directly
        let ux = self.u_c.as_ref().unwrap().eval(x).re;
        let uax = self.u_ra.as_ref().unwrap().eval(x).re;
        let mp = self.m_prime_c.as_ref().unwrap().eval(x);
        mp * C64::new(self.rescale * (ux / uax).sqrt(), 0.0)
    }
}

/// Normalize a raw filter by its fixed vector. The scalar factor is
/// `leading^{-1/2}` from the spectral data so the normalized operator fixes
/// constants exactly; `u` must be uniformly positive.
pub fn normalize_filter(
    m_prime: &LaurentPoly,
    fixed: &FixedPoint,
    a: &DilationMatrix,
) -> NormalizedFilter {
    let rescale = 1.0 / fixed.leading.norm().sqrt();
    NormalizedFilter::new(m_prime, &fixed.vector, a, rescale)
}

/// Grid residual of the conjugation identity between the raw and
/// normalized transfer operators: for probe `v` and points `x`,
/// `rescale^2 · R'(u^{1/2} v u^{1/2})(x) = u^{1/2}(x) (R_m v)(x) u^{1/2}(x)`.
pub fn theta_conjugation_residual(
    m_prime: &LaurentPoly,
    normalized: &NormalizedFilter,
    fixed: &FixedPoint,
    a: &DilationMatrix,
    probe: &LaurentPoly,
    grid: usize,
) -> f64 {
    assert_eq!(m_prime.size(), 1, "conjugation check is scalar");
    let n = a.dim();
    let primal = coset_reps(a, CosetKind::Primal);
    let q = a.q() as f64;
    let c2 = normalized.rescale() * normalized.rescale();
    let mut worst: f64 = 0.0;
    let total = grid.pow(n as u32);
    for mut idx in 0..total {
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            x[i] = (idx % grid) as f64 / grid as f64;
            idx /= grid;
        }
        let mut lhs = C64::new(0.0, 0.0);
        let mut rhs = C64::new(0.0, 0.0);
        for rep in &primal.reps {
            let shifted: Vec<f64> = x.iter().zip(rep).map(|(&xi, &ri)| xi - ri as f64).collect();
            let z = a.apply_inv(&shifted);
            let mp = m_prime.eval_scalar(&z);
            let uv = fixed.vector.eval_scalar(&z).re;
            let pv = probe.eval_scalar(&z);
            lhs += mp.conj() * mp * pv * uv;
            let mz = normalized.eval_scalar(&z);
            rhs += mz.conj() * mz * pv;
        }
        lhs *= C64::new(c2 / q, 0.0);
        let ux = fixed.vector.eval_scalar(&x).re;
        rhs *= C64::new(ux / q, 0.0);
        worst = worst.max((lhs - rhs).norm());
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::IntMatrix;

    fn haar() -> (LaurentPoly, DilationMatrix) {
        let s = 1.0 / 2.0f64.sqrt();
        let m = LaurentPoly::from_scalar_terms(
            1,
            &[(vec![0], C64::new(s, 0.0)), (vec![1], C64::new(s, 0.0))],
        );
        let a = DilationMatrix::new(IntMatrix::from_rows(&[&[2]])).unwrap();
        (m, a)
    }

    #[test]
    fn haar_invariant_box() {
        let (m, a) = haar();
        let j = invariant_box(&m, &a).unwrap();
        assert_eq!(j, vec![vec![-1], vec![0], vec![1]]);
    }

    #[test]
    fn constant_filter_box_is_origin() {
        let m = LaurentPoly::from_scalar_terms(2, &[(vec![0, 0], C64::new(1.0, 0.0))]);
        let a = DilationMatrix::new(IntMatrix::from_rows(&[&[0, 2], &[-2, 0]])).unwrap();
        let j = invariant_box(&m, &a).unwrap();
        assert_eq!(j, vec![vec![0, 0]]);
    }

    #[test]
    fn haar_transfer_images() {
        let (m, a) = haar();
        let one = LaurentPoly::one(1, 1);
        let r1 = transfer_apply(&m, &one, &a);
        assert_eq!(r1.coeffs().len(), 1);
        assert!((r1.coeff(&[0]).unwrap()[(0, 0)] - C64::new(1.0, 0.0)).norm() < 1e-14);

        let e1 = LaurentPoly::monomial(vec![1], C64::new(1.0, 0.0));
        let r = transfer_apply(&m, &e1, &a);
        assert!((r.coeff(&[0]).unwrap()[(0, 0)] - C64::new(0.5, 0.0)).norm() < 1e-14);
        assert!((r.coeff(&[1]).unwrap()[(0, 0)] - C64::new(0.5, 0.0)).norm() < 1e-14);

        let zero = LaurentPoly::zero(1, 1);
        assert_eq!(transfer_apply(&m, &zero, &a).coeffs().len(), 0);
    }

    #[test]
    fn haar_transfer_spectrum() {
        let (m, a) = haar();
        let j = invariant_box(&m, &a).unwrap();
        let rep = transfer_matrix(&m, &j, &a).unwrap();
        let mut eigs = linalg::complex_eigenvalues(&rep.matrix);
        eigs.sort_by(|x, y| y.norm().partial_cmp(&x.norm()).unwrap());
        assert!((eigs[0] - C64::new(1.0, 0.0)).norm() < 1e-10);
        assert!((eigs[1] - C64::new(0.5, 0.0)).norm() < 1e-10);
        assert!((eigs[2] - C64::new(0.5, 0.0)).norm() < 1e-10);
    }

    #[test]
    fn zero_filter_transfer_matrix_is_zero() {
        let (_, a) = haar();
        let z = LaurentPoly::zero(1, 1);
        let j = vec![vec![0i64]];
        let rep = transfer_matrix(&z, &j, &a).unwrap();
        assert!(rep.matrix.iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn haar_fixed_point_is_constant() {
        let (m, a) = haar();
        let j = invariant_box(&m, &a).unwrap();
        let rep = transfer_matrix(&m, &j, &a).unwrap();
        let fp = fixed_point(&rep, &FixedPointOptions::default()).unwrap();
        assert!((fp.leading - C64::new(1.0, 0.0)).norm() < 1e-10);
        assert!((fp.min - 1.0).abs() < 1e-10);
        assert_eq!(fp.vector.coeffs().len(), 1);
        assert!(fp.cesaro_residual < 1e-2);
    }

    #[test]
    fn degenerate_leading_eigenvalue_is_an_error() {
        let (_, a) = haar();
        let mut matrix = DMatrix::<C64>::zeros(3, 3);
        matrix[(0, 0)] = C64::new(0.5, 0.0);
        matrix[(1, 1)] = C64::new(0.5, 0.0);
        matrix[(2, 2)] = C64::new(0.2, 0.0);
        let rep = TransferMatrixRep {
            frequencies: vec![vec![-1], vec![0], vec![1]],
            d: 1,
            matrix,
            dilation: a,
        };
        let r = fixed_point(&rep, &FixedPointOptions::default());
        assert!(matches!(r, Err(TransferError::NoSimpleLeading(_, _))));
    }

    #[test]
    fn haar_spectral_conditions_pass() {
        let s = 1.0 / 2.0f64.sqrt();
        let (m, a) = haar();
        let spec = FilterSpec::new(
            m.clone(),
            a.clone(),
            SymmetryGroup::trivial(1),
            vec![C64::new(1.0, 0.0)],
        )
        .unwrap();
        let j = invariant_box(&m, &a).unwrap();
        let rep = transfer_matrix(&m, &j, &a).unwrap();
        let report = spectral_check(&spec, &rep, &m, &SpectralOptions::default());
        assert!(report.all_conditions(), "conditions {:?}", report.conditions);
        assert!(!report.scale_mismatch);
        assert!((report.gap - 0.5).abs() < 1e-9);
        let m0 = m.eval_scalar(&[0.0]);
        assert!((m0 - C64::new(2.0 * s, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn zero_mean_filter_fails_conditions_four_five() {
        let (_, a) = haar();
        // m(0) = 0
        let m = LaurentPoly::from_scalar_terms(
            1,
            &[(vec![0], C64::new(1.0, 0.0)), (vec![1], C64::new(-1.0, 0.0))],
        );
        let spec = FilterSpec::new(
            m.clone(),
            a.clone(),
            SymmetryGroup::trivial(1),
            vec![C64::new(1.0, 0.0)],
        )
        .unwrap();
        let j = invariant_box(&m, &a).unwrap();
        let rep = transfer_matrix(&m, &j, &a).unwrap();
        let report = spectral_check(&spec, &rep, &m, &SpectralOptions::default());
        assert!(!report.conditions[3] && !report.conditions[4]);
    }
}
