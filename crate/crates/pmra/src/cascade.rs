//! Infinite-product construction of scaling functions.
//!
//! The depth-`K` partial product
//! `P_K(x) = q^{-K/2} m(p(A^{-1}x)) ... m(p(A^{-K}x))`
//! converges uniformly on compact sets when the filter passes its spectral
//! certification; the scaling functions are `phi_i(x) = <P(x) e_i, w>`.
//! This module evaluates the products pointwise, records the convergence
//! history on a probe box, and measures orthonormality (bracket),
//! invariance (point evaluation) and the fold/unfold duality (quadrature).

use crate::lattice::DilationMatrix;
use crate::symmetry::SymmetryGroup;
use crate::torusfn::{bracket, bracket_raw, BracketOptions, TorusError, TorusField};
use crate::transfer::Filter;
use crate::C64;
use nalgebra::DMatrix;
use rayon::prelude::*;
use std::sync::Arc;

/// Depth-`K` partial product, multiplied left to right exactly as written.
pub fn product_eval(m: &dyn Filter, a: &DilationMatrix, x: &[f64], depth: usize) -> DMatrix<C64> {
    let d = m.size();
    let q = a.q() as f64;
    let scale = 1.0 / q.sqrt();
    if d == 1 {
        let mut acc = C64::new(1.0, 0.0);
        let mut cur = x.to_vec();
        for _ in 0..depth {
            cur = a.apply_inv(&cur);
            acc *= m.eval_scalar(&cur) * scale;
        }
        return DMatrix::from_element(1, 1, acc);
    }
    let mut acc = DMatrix::<C64>::identity(d, d);
    let mut cur = x.to_vec();
    for _ in 0..depth {
        cur = a.apply_inv(&cur);
        acc = acc * m.eval_matrix(&cur) * C64::new(scale, 0.0);
    }
    acc
}

/// Point-evaluable scaling function `phi_i = <P(x) e_i, w>`.
#[derive(Clone)]
pub struct ScalingFunction {
    filter: Arc<dyn Filter>,
    dilation: DilationMatrix,
    w: Vec<C64>,
    pub depth: usize,
    pub index: usize,
}

impl ScalingFunction {
    pub fn eval(&self, x: &[f64]) -> C64 {
        if self.filter.size() == 1 {
            product_eval(self.filter.as_ref(), &self.dilation, x, self.depth)[(0, 0)]
                * self.w[0].conj()
        } else {
            let p = product_eval(self.filter.as_ref(), &self.dilation, x, self.depth);
            let col = p.column(self.index);
            col.iter()
                .zip(&self.w)
                .map(|(pi, wi)| pi * wi.conj())
                .sum()
        }
    }
}

impl TorusField for ScalingFunction {
    fn dim(&self) -> usize {
        self.dilation.dim()
    }
    fn eval(&self, x: &[f64]) -> C64 {
        ScalingFunction::eval(self, x)
    }
}

/// Scaling functions plus the cascade diagnostics.
pub struct CascadeResult {
    pub depth: usize,
    pub scaling: Vec<ScalingFunction>,
    /// `sup |P_k - P_{k-1}|` over the probe box, for `k = 1..=depth`.
    pub convergence: Vec<f64>,
    pub dilation: DilationMatrix,
    pub w: Vec<C64>,
    filter: Arc<dyn Filter>,
}

impl CascadeResult {
    pub fn filter(&self) -> &Arc<dyn Filter> {
        &self.filter
    }

    /// The convergence record should decrease along its tail once the
    /// spectral conditions hold; returns the first offending index.
    pub fn convergence_monotone_tail(&self, from: usize) -> Option<usize> {
        for k in from..self.convergence.len().saturating_sub(1) {
            if self.convergence[k + 1] > self.convergence[k] {
                return Some(k + 1);
            }
        }
        None
    }
}

/// Probe points for the convergence record: the box `[-1, 1]^n` sampled
/// with `count` points per axis.
fn probe_box(n: usize, count: usize) -> Vec<Vec<f64>> {
    let axis: Vec<f64> = (0..count)
        .map(|i| -1.0 + 2.0 * i as f64 / (count - 1) as f64)
        .collect();
    let total = count.pow(n as u32);
    (0..total)
        .map(|mut idx| {
            let mut x = vec![0.0; n];
            for i in (0..n).rev() {
                x[i] = axis[idx % count];
                idx /= count;
            }
            x
        })
        .collect()
}

pub fn scaling_function(
    m_used: Arc<dyn Filter>,
    a: &DilationMatrix,
    w: &[C64],
    depth: usize,
) -> CascadeResult {
    let n = a.dim();
    let d = m_used.size();
    assert_eq!(w.len(), d);
    let probes = probe_box(n, 32);
    let scale = 1.0 / (a.q() as f64).sqrt();
    // incremental partial products per probe point
    let convergence: Vec<f64> = {
        let mut sup = vec![0.0f64; depth];
        let per_point: Vec<Vec<f64>> = probes
            .par_iter()
            .map(|x| {
                let mut history = Vec::with_capacity(depth);
                let mut acc = DMatrix::<C64>::identity(d, d);
                let mut cur = x.clone();
                for _ in 0..depth {
                    cur = a.apply_inv(&cur);
                    let next = &acc * m_used.eval_matrix(&cur) * C64::new(scale, 0.0);
                    let diff = (&next - &acc)
                        .iter()
                        .map(|z| z.norm())
                        .fold(0.0, f64::max);
                    history.push(diff);
                    acc = next;
                }
                history
            })
            .collect();
        for h in per_point {
            for (k, v) in h.into_iter().enumerate() {
                sup[k] = sup[k].max(v);
            }
        }
        sup
    };
    let scaling = (0..d)
        .map(|index| ScalingFunction {
            filter: Arc::clone(&m_used),
            dilation: a.clone(),
            w: w.to_vec(),
            depth,
            index,
        })
        .collect();
    CascadeResult {
        depth,
        scaling,
        convergence,
        dilation: a.clone(),
        w: w.to_vec(),
        filter: m_used,
    }
}

/// Max over the grid and index pairs of `|<phi_i, phi_j>' - delta_ij|`.
pub fn orthonormality_check(
    result: &CascadeResult,
    radius: usize,
    resolution: usize,
) -> Result<f64, TorusError> {
    let mut worst: f64 = 0.0;
    for (i, pi) in result.scaling.iter().enumerate() {
        for (j, pj) in result.scaling.iter().enumerate() {
            if j < i {
                continue;
            }
            let b = bracket(
                pi,
                pj,
                BracketOptions {
                    resolution,
                    radius,
                    tail_tol: 1e-5,
                    extrapolate: true,
                },
            )?;
            let want = if i == j {
                C64::new(1.0, 0.0)
            } else {
                C64::new(0.0, 0.0)
            };
            worst = worst.max(b.max_deviation_from(want));
        }
    }
    Ok(worst)
}

/// Max over probe points of `|phi_i(h x) - phi_i(x)|`, per group element.
pub fn invariance_check(
    result: &CascadeResult,
    h: &SymmetryGroup,
    probe_points: &[Vec<f64>],
) -> Vec<(crate::lattice::IntMatrix, f64)> {
    h.elements()
        .iter()
        .map(|e| {
            let ef: Vec<Vec<f64>> = (0..e.dim())
                .map(|i| (0..e.dim()).map(|j| e.at(i, j) as f64).collect())
                .collect();
            let res = probe_points
                .par_iter()
                .map(|x| {
                    let hx: Vec<f64> = ef
                        .iter()
                        .map(|row| row.iter().zip(x).map(|(&a, &xi)| a * xi).sum())
                        .collect();
                    result
                        .scaling
                        .iter()
                        .map(|phi| (phi.eval(&hx) - phi.eval(x)).norm())
                        .fold(0.0, f64::max)
                })
                .reduce(|| 0.0, f64::max);
            (e.clone(), res)
        })
        .collect()
}

/// Compare the box quadrature of `sum_i |phi_i|^2` against the grid mean of
/// `sum_i <phi_i, phi_i>'`, both truncated at the box radius so the two
/// finite proxies share their window.
pub fn duality_check(
    result: &CascadeResult,
    box_radius: usize,
    quadrature_n: usize,
    resolution: usize,
) -> Result<f64, TorusError> {
    let n = result.dilation.dim();
    assert!(n == 1, "duality quadrature implemented for n = 1");
    let b = box_radius as f64;
    let h = 2.0 * b / quadrature_n as f64;
    // trapezoid on [-B, B]
    let quad: f64 = (0..=quadrature_n)
        .into_par_iter()
        .map(|i| {
            let x = -b + i as f64 * h;
            let weight = if i == 0 || i == quadrature_n { 0.5 } else { 1.0 };
            let v: f64 = result
                .scaling
                .iter()
                .map(|phi| phi.eval(&[x]).norm_sqr())
                .sum();
            weight * v
        })
        .sum::<f64>()
        * h;
    let mut mean = 0.0;
    for phi in &result.scaling {
        let br = bracket_raw(phi, phi, resolution, box_radius)?;
        let s: C64 = (0..br.grid.len()).map(|i| br.grid.scalar(i)).sum();
        mean += s.re / br.grid.len() as f64;
    }
    Ok((quad - mean).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::IntMatrix;
    use crate::symmetry::group_closure;
    use crate::torusfn::LaurentPoly;

    fn haar_filter() -> (Arc<dyn Filter>, DilationMatrix) {
        let s = 1.0 / 2.0f64.sqrt();
        let m = LaurentPoly::from_scalar_terms(
            1,
            &[(vec![0], C64::new(s, 0.0)), (vec![1], C64::new(s, 0.0))],
        );
        let a = DilationMatrix::new(IntMatrix::from_rows(&[&[2]])).unwrap();
        (Arc::new(m), a)
    }

    fn haar_closed_form(x: f64) -> C64 {
        // e^{pi i x} sin(pi x) / (pi x)
        if x.abs() < 1e-12 {
            return C64::new(1.0, 0.0);
        }
        let th = std::f64::consts::PI * x;
        C64::new(th.cos(), th.sin()) * (th.sin() / th)
    }

    #[test]
    fn empty_product_is_identity() {
        let (m, a) = haar_filter();
        let p = product_eval(m.as_ref(), &a, &[0.37], 0);
        assert!((p[(0, 0)] - C64::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn product_at_zero_is_one() {
        let (m, a) = haar_filter();
        let p = product_eval(m.as_ref(), &a, &[0.0], 17);
        assert!((p[(0, 0)] - C64::new(1.0, 0.0)).norm() < 1e-13);
    }

    #[test]
    fn haar_product_matches_closed_form() {
        let (m, a) = haar_filter();
        for &x in &[1.0f64, 0.5, -0.75, 2.25, 7.0] {
            let p = product_eval(m.as_ref(), &a, &[x], 30)[(0, 0)];
            let want = haar_closed_form(x);
            assert!((p - want).norm() < 1e-6, "x = {x}: {p} vs {want}");
        }
    }

    #[test]
    fn haar_cascade_diagnostics() {
        let (m, a) = haar_filter();
        let res = scaling_function(m, &a, &[C64::new(1.0, 0.0)], 30);
        // scaling value at 0 is <w, w> = 1
        assert!((res.scaling[0].eval(&[0.0]) - C64::new(1.0, 0.0)).norm() < 1e-12);
        // convergence record decreases along its tail
        assert_eq!(res.convergence_monotone_tail(4), None);
        let ortho = orthonormality_check(&res, 64, 64).unwrap();
        assert!(ortho < 1e-6, "orthonormality residual {ortho:.3e}");
    }

    #[test]
    fn orthonormality_residual_decreases_with_depth() {
        let (m, a) = haar_filter();
        let mut last = f64::INFINITY;
        for depth in [10usize, 20, 30] {
            let res = scaling_function(Arc::clone(&m), &a, &[C64::new(1.0, 0.0)], depth);
            let ortho = orthonormality_check(&res, 64, 16).unwrap();
            assert!(ortho <= last * 1.5, "depth {depth}: {ortho:.3e} after {last:.3e}");
            last = ortho;
        }
        assert!(last < 1e-6);
    }

    #[test]
    fn zero_function_fails_orthonormality() {
        let (_, a) = haar_filter();
        let zero = LaurentPoly::zero(1, 1);
        let res = scaling_function(Arc::new(zero), &a, &[C64::new(1.0, 0.0)], 8);
        let ortho = orthonormality_check(&res, 16, 8).unwrap();
        assert!((ortho - 1.0).abs() < 1e-12);
    }

    #[test]
    fn haar_is_not_invariant_under_negation() {
        let (m, a) = haar_filter();
        let res = scaling_function(m, &a, &[C64::new(1.0, 0.0)], 30);
        let h = group_closure(&[IntMatrix::from_rows(&[&[-1]])], 8).unwrap();
        let probes: Vec<Vec<f64>> = (1..20).map(|i| vec![i as f64 * 0.11]).collect();
        let checks = invariance_check(&res, &h, &probes);
        let worst = checks
            .iter()
            .filter(|(e, _)| !e.is_identity())
            .map(|(_, r)| *r)
            .fold(0.0, f64::max);
        assert!(worst > 0.1, "negation residual should be O(1), got {worst:.3e}");
        // identity always gives zero
        let id = checks
            .iter()
            .find(|(e, _)| e.is_identity())
            .map(|(_, r)| *r)
            .unwrap();
        assert_eq!(id, 0.0);
    }

    #[test]
    fn haar_duality_quadrature() {
        let (m, a) = haar_filter();
        let res = scaling_function(m, &a, &[C64::new(1.0, 0.0)], 30);
        let disc = duality_check(&res, 64, 1 << 14, 64).unwrap();
        assert!(disc < 1e-4, "duality discrepancy {disc:.3e}");
    }

    #[test]
    fn refinement_relation_holds_at_probe_points() {
        let (m, a) = haar_filter();
        let depth = 12;
        let scale = 1.0 / 2.0f64.sqrt();
        for &x in &[0.3f64, -1.2, 2.7] {
            let full = product_eval(m.as_ref(), &a, &[x], depth)[(0, 0)];
            let inner = product_eval(m.as_ref(), &a, &[x / 2.0], depth - 1)[(0, 0)];
            let lhs = m.eval_scalar(&[x / 2.0]) * scale * inner;
            assert!((full - lhs).norm() < 1e-12);
        }
    }
}
