//! Finite symmetry groups affiliated to a dilation.
//!
//! A finite nontrivial subgroup `H` of `GL_n(Z)` is affiliated to a
//! dilation `A` when every `h` in `H`
//!
//! 1. preserves the lattice (`h G = G`),
//! 2. commutes with the dilation (`h A = A h`),
//! 3. acts trivially on the quotient (`(h - 1) G ⊂ A G`).
//!
//! Condition (3) is decided exactly: it is equivalent to integrality of
//! `A^{-1}(h - 1)`, tested through the adjugate. The module also provides
//! bounded conjugacy search over `GL_2(Z)` and, in [`census`], the
//! exhaustive enumeration of affiliated pairs in dimension two.

pub mod census;

use crate::lattice::{DilationMatrix, IntMatrix};
use thiserror::Error;

pub use census::{census_n2, classification_table, CensusClass, CensusReport, TableItem};

#[derive(Debug, Error)]
pub enum SymmetryError {
    #[error("group closure exceeded cap of {0} elements")]
    NotFinite(usize),
    #[error("generator is not invertible over the integers")]
    NotInvertible,
    #[error("dimension mismatch")]
    DimMismatch,
}

/// A finite subgroup of `GL_n(Z)`, stored with a canonical sorted element
/// list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymmetryGroup {
    elements: Vec<IntMatrix>,
    generators: Vec<IntMatrix>,
}

impl SymmetryGroup {
    pub fn trivial(n: usize) -> Self {
        Self {
            elements: vec![IntMatrix::identity(n)],
            generators: vec![],
        }
    }

    pub fn elements(&self) -> &[IntMatrix] {
        &self.elements
    }

    pub fn generators(&self) -> &[IntMatrix] {
        &self.generators
    }

    pub fn order(&self) -> usize {
        self.elements.len()
    }

    pub fn dim(&self) -> usize {
        self.elements[0].dim()
    }

    pub fn contains(&self, m: &IntMatrix) -> bool {
        self.elements.binary_search(m).is_ok()
    }

    pub fn is_trivial(&self) -> bool {
        self.order() == 1
    }

    /// Conjugated group `S H S^{-1}`; `S` must be unimodular.
    pub fn conjugate(&self, s: &IntMatrix) -> Result<Self, SymmetryError> {
        let det = s.det();
        if det.abs() != 1 {
            return Err(SymmetryError::NotInvertible);
        }
        let s_inv = unimodular_inverse(s);
        let mut elements: Vec<IntMatrix> = self
            .elements
            .iter()
            .map(|h| s.mul(h).unwrap().mul(&s_inv).unwrap())
            .collect();
        elements.sort();
        let generators = self
            .generators
            .iter()
            .map(|h| s.mul(h).unwrap().mul(&s_inv).unwrap())
            .collect();
        Ok(Self {
            elements,
            generators,
        })
    }
}

/// Inverse of a matrix with determinant `±1`.
pub fn unimodular_inverse(s: &IntMatrix) -> IntMatrix {
    let det = s.det();
    assert!(det.abs() == 1);
    let adj = s.adjugate();
    if det == 1 {
        adj
    } else {
        adj.neg()
    }
}

/// Close a generator set under products and inverses, BFS with an element
/// cap.
pub fn group_closure(
    generators: &[IntMatrix],
    cap: usize,
) -> Result<SymmetryGroup, SymmetryError> {
    if generators.is_empty() {
        return Ok(SymmetryGroup::trivial(1));
    }
    let n = generators[0].dim();
    for g in generators {
        if g.dim() != n {
            return Err(SymmetryError::DimMismatch);
        }
        if g.det().abs() != 1 {
            return Err(SymmetryError::NotInvertible);
        }
    }
    let mut gens: Vec<IntMatrix> = generators.to_vec();
    gens.extend(generators.iter().map(unimodular_inverse));
    let mut elements = vec![IntMatrix::identity(n)];
    let mut frontier = elements.clone();
    while !frontier.is_empty() {
        let mut next = Vec::new();
        for e in &frontier {
            for g in &gens {
                let p = e.mul(g).map_err(|_| SymmetryError::NotFinite(cap))?;
                if elements.binary_search(&p).is_err() {
                    let pos = elements.binary_search(&p).unwrap_err();
                    elements.insert(pos, p.clone());
                    next.push(p);
                    if elements.len() > cap {
                        return Err(SymmetryError::NotFinite(cap));
                    }
                }
            }
        }
        frontier = next;
    }
    Ok(SymmetryGroup {
        elements,
        generators: generators.to_vec(),
    })
}

/// Smallest `k >= 1` with `h^k = I`, iterating up to `cap` (default callers
/// use 12, enough for every finite order in `GL_2(Z)`). `None` means the
/// cap was exceeded, reported as infinite order.
pub fn element_order(h: &IntMatrix, cap: u32) -> Option<u32> {
    let mut p = h.clone();
    for k in 1..=cap {
        if p.is_identity() {
            return Some(k);
        }
        p = match p.mul(h) {
            Ok(m) => m,
            Err(_) => return None,
        };
    }
    None
}

/// Per-generator condition report for affiliation of `H` to `A`.
#[derive(Debug, Clone)]
pub struct GeneratorCheck {
    pub generator: IntMatrix,
    pub lattice_preserved: bool,
    pub commutes: bool,
    pub acts_trivially: bool,
}

#[derive(Debug, Clone)]
pub struct AffiliationReport {
    pub per_generator: Vec<GeneratorCheck>,
    /// Conjunction of all three conditions over every group element.
    pub verdict: bool,
    /// The trivial group passes vacuously; flagged so callers can tell.
    pub trivial_group: bool,
}

fn check_element(a: &DilationMatrix, h: &IntMatrix) -> (bool, bool, bool) {
    let lattice_preserved = h.det().abs() == 1;
    let commutes = h.mul(a.matrix()).unwrap() == a.matrix().mul(h).unwrap();
    let hm1 = h.sub(&IntMatrix::identity(h.dim())).unwrap();
    // (h-1)G ⊂ AG  <=>  A^{-1}(h-1) integral: every column of h-1 in A Z^n
    let acts_trivially = (0..h.dim()).all(|j| {
        let col: Vec<i64> = (0..h.dim()).map(|i| hm1.at(i, j)).collect();
        a.matrix().lattice_contains(&col)
    });
    (lattice_preserved, commutes, acts_trivially)
}

pub fn is_affiliated(a: &DilationMatrix, h: &SymmetryGroup) -> AffiliationReport {
    let mut verdict = true;
    for e in h.elements() {
        let (l, c, t) = check_element(a, e);
        verdict &= l && c && t;
    }
    let gens = if h.generators().is_empty() {
        h.elements().to_vec()
    } else {
        h.generators().to_vec()
    };
    let per_generator = gens
        .iter()
        .map(|g| {
            let (lattice_preserved, commutes, acts_trivially) = check_element(a, g);
            GeneratorCheck {
                generator: g.clone(),
                lattice_preserved,
                commutes,
                acts_trivially,
            }
        })
        .collect();
    AffiliationReport {
        per_generator,
        verdict,
        trivial_group: h.is_trivial(),
    }
}

/// Iterate all `2 x 2` integer matrices with entries in `[-bound, bound]`,
/// lexicographically.
fn scan_2x2(bound: i64) -> impl Iterator<Item = IntMatrix> {
    let r = move || -bound..=bound;
    r().flat_map(move |a| {
        r().flat_map(move |b| {
            r().flat_map(move |c| {
                r().map(move |d| IntMatrix::from_rows(&[&[a, b], &[c, d]]))
            })
        })
    })
}

/// Bounded search for `S ∈ GL_2(Z)` with `S C1 = C2 S`. Absence within the
/// bound is not a proof of inequivalence.
pub fn gl2z_equivalent(c1: &IntMatrix, c2: &IntMatrix, bound: i64) -> Option<IntMatrix> {
    if c1.det() != c2.det() || c1.trace() != c2.trace() {
        return None;
    }
    scan_2x2(bound).find(|s| {
        s.det().abs() == 1 && s.mul(c1).unwrap() == c2.mul(s).unwrap()
    })
}

/// Bounded search for a simultaneous equivalence of two (dilation, group)
/// pairs: `S A1 = A2 S` and `S H1 S^{-1} = H2` as sets.
pub fn pair_equivalent(
    p1: (&DilationMatrix, &SymmetryGroup),
    p2: (&DilationMatrix, &SymmetryGroup),
    bound: i64,
) -> Option<IntMatrix> {
    let (a1, h1) = p1;
    let (a2, h2) = p2;
    if a1.matrix().det() != a2.matrix().det()
        || a1.matrix().trace() != a2.matrix().trace()
        || h1.order() != h2.order()
    {
        return None;
    }
    scan_2x2(bound).find(|s| {
        if s.det().abs() != 1 {
            return false;
        }
        if s.mul(a1.matrix()).unwrap() != a2.matrix().mul(s).unwrap() {
            return false;
        }
        let s_inv = unimodular_inverse(s);
        h1.elements()
            .iter()
            .all(|h| h2.contains(&s.mul(h).unwrap().mul(&s_inv).unwrap()))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn im(rows: &[&[i64]]) -> IntMatrix {
        IntMatrix::from_rows(rows)
    }

    fn dil(rows: &[&[i64]]) -> DilationMatrix {
        DilationMatrix::new(im(rows)).unwrap()
    }

    #[test]
    fn closure_of_negation() {
        let g = group_closure(&[im(&[&[-1, 0], &[0, -1]])], 16).unwrap();
        assert_eq!(g.order(), 2);
        assert!(g.contains(&IntMatrix::identity(2)));
    }

    #[test]
    fn closure_of_identity() {
        let g = group_closure(&[IntMatrix::identity(2)], 16).unwrap();
        assert_eq!(g.order(), 1);
    }

    #[test]
    fn shear_is_not_finite() {
        let err = group_closure(&[im(&[&[1, 1], &[0, 1]])], 64).unwrap_err();
        assert!(matches!(err, SymmetryError::NotFinite(64)));
    }

    #[test]
    fn element_orders() {
        assert_eq!(element_order(&im(&[&[0, 1], &[-1, -1]]), 12), Some(3));
        assert_eq!(element_order(&im(&[&[0, 1], &[-1, 0]]), 12), Some(4));
        assert_eq!(element_order(&im(&[&[1, 1], &[-1, 0]]), 12), Some(6));
        assert_eq!(element_order(&im(&[&[1, 1], &[0, 1]]), 12), None);
        assert_eq!(element_order(&IntMatrix::identity(2), 12), Some(1));
    }

    #[test]
    fn rotation_dilation_is_affiliated_to_negation() {
        let a = dil(&[&[0, 2], &[-2, 0]]);
        let h = group_closure(&[im(&[&[-1, 0], &[0, -1]])], 16).unwrap();
        let rep = is_affiliated(&a, &h);
        assert!(rep.verdict);
        assert!(!rep.trivial_group);
    }

    #[test]
    fn swap_group_fails_condition_three() {
        let a = dil(&[&[0, 2], &[2, 0]]);
        let h = group_closure(&[im(&[&[0, 1], &[1, 0]])], 16).unwrap();
        let rep = is_affiliated(&a, &h);
        assert!(!rep.verdict);
        let gc = &rep.per_generator[0];
        assert!(gc.lattice_preserved && gc.commutes && !gc.acts_trivially);
    }

    #[test]
    fn trivial_group_is_affiliated_but_flagged() {
        let a = dil(&[&[0, 2], &[-2, 0]]);
        let rep = is_affiliated(&a, &SymmetryGroup::trivial(2));
        assert!(rep.verdict && rep.trivial_group);
    }

    #[test]
    fn equivalence_of_rotation_like_dilations() {
        let c1 = im(&[&[1, -1], &[1, 1]]);
        let c2 = im(&[&[1, 1], &[-1, 1]]);
        let s = gl2z_equivalent(&c1, &c2, 2).unwrap();
        assert_eq!(s.mul(&c1).unwrap(), c2.mul(&s).unwrap());
        // the swap matrix is such an intertwiner
        let swap = im(&[&[0, 1], &[1, 0]]);
        assert_eq!(swap.mul(&c1).unwrap(), c2.mul(&swap).unwrap());
    }

    #[test]
    fn identity_pair_is_equivalent_to_itself() {
        let c = im(&[&[1, -1], &[1, 1]]);
        let s = gl2z_equivalent(&c, &c, 1).unwrap();
        assert_eq!(s.mul(&c).unwrap(), c.mul(&s).unwrap());
    }

    #[test]
    fn reflections_are_inequivalent() {
        // any intertwiner of diag(1,-1) and the swap has determinant -2mn
        assert!(gl2z_equivalent(
            &im(&[&[1, 0], &[0, -1]]),
            &im(&[&[0, 1], &[1, 0]]),
            6
        )
        .is_none());
    }

    #[test]
    fn pair_equivalence_examples() {
        let a1 = dil(&[&[2, 1], &[-1, 1]]);
        let h1 = group_closure(&[im(&[&[0, 1], &[-1, -1]])], 16).unwrap();
        let s = im(&[&[0, 1], &[1, 0]]);
        let a2 = DilationMatrix::new(
            s.mul(a1.matrix()).unwrap().mul(&unimodular_inverse(&s)).unwrap(),
        )
        .unwrap();
        let h2 = h1.conjugate(&s).unwrap();
        assert!(pair_equivalent((&a1, &h1), (&a2, &h2), 3).is_some());

        // pairs with distinct determinants can never match
        let b = dil(&[&[2, 0], &[0, 2]]);
        assert!(pair_equivalent((&a1, &h1), (&b, &h1), 3).is_none());

        let id = pair_equivalent((&a1, &h1), (&a1, &h1), 1).unwrap();
        assert_eq!(id.det().abs(), 1);
    }
}
