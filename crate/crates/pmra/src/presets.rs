//! Built-in example configurations.

use crate::lattice::{DilationMatrix, IntMatrix};
use crate::symmetry::{group_closure, SymmetryGroup};
use crate::torusfn::LaurentPoly;
use crate::transfer::FilterSpec;
use crate::C64;

/// The two-tap orthonormal filter `m(x) = (1 + e^{2 pi i x}) / sqrt 2` with
/// dilation 2.
pub fn haar_filter() -> LaurentPoly {
    let s = 1.0 / 2.0f64.sqrt();
    LaurentPoly::from_scalar_terms(
        1,
        &[(vec![0], C64::new(s, 0.0)), (vec![1], C64::new(s, 0.0))],
    )
}

pub fn haar_spec() -> FilterSpec {
    let a = DilationMatrix::new(IntMatrix::from_rows(&[&[2]])).unwrap();
    FilterSpec::new(
        haar_filter(),
        a,
        SymmetryGroup::trivial(1),
        vec![C64::new(1.0, 0.0)],
    )
    .unwrap()
}

/// The even cosine filter
/// `m'(x) = (sqrt 2 / 4) sum_j cos(2 pi <v_j, x>)` over the four
/// frequencies `(1,0), (0,1), (1,-1), (2,0)`.
pub fn cosine_filter() -> LaurentPoly {
    let c = C64::new(2.0f64.sqrt() / 8.0, 0.0);
    let vs: [[i64; 2]; 4] = [[1, 0], [0, 1], [1, -1], [2, 0]];
    let mut terms = Vec::new();
    for v in vs {
        terms.push((vec![v[0], v[1]], c));
        terms.push((vec![-v[0], -v[1]], c));
    }
    LaurentPoly::from_scalar_terms(2, &terms)
}

fn central_group() -> SymmetryGroup {
    group_closure(&[IntMatrix::from_rows(&[&[-1, 0], &[0, -1]])], 8).unwrap()
}

/// Cosine filter on the order-four rotation dilation `[[0, 2], [-2, 0]]`
/// (determinant 4) with the central symmetry.
pub fn cosine_spec_rotation() -> FilterSpec {
    let a = DilationMatrix::new(IntMatrix::from_rows(&[&[0, 2], &[-2, 0]])).unwrap();
    FilterSpec::new(cosine_filter(), a, central_group(), vec![C64::new(1.0, 0.0)]).unwrap()
}

/// Cosine filter on the determinant-two candidate `[[1, -1], [1, 1]]` with
/// the central symmetry.
pub fn cosine_spec_det2() -> FilterSpec {
    let a = DilationMatrix::new(IntMatrix::from_rows(&[&[1, -1], &[1, 1]])).unwrap();
    FilterSpec::new(cosine_filter(), a, central_group(), vec![C64::new(1.0, 0.0)]).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_filter_values() {
        let m = cosine_filter();
        // mean value sqrt 2 at the origin
        let m0 = m.eval_scalar(&[0.0, 0.0]);
        assert!((m0 - C64::new(2.0f64.sqrt(), 0.0)).norm() < 1e-14);
        // vanishes at the three half-integer points
        for p in [[0.5, 0.0], [0.0, 0.5], [0.5, 0.5]] {
            assert!(m.eval_scalar(&p).norm() < 1e-14);
        }
        // even: coefficient symmetry is exact
        let neg = IntMatrix::from_rows(&[&[-1, 0], &[0, -1]]);
        assert_eq!(m.compose_int(&neg), m);
    }

    #[test]
    fn specs_validate() {
        haar_spec();
        cosine_spec_rotation();
        cosine_spec_det2();
    }
}
