//! Exhaustive census of affiliated (dilation, group) pairs in dimension
//! two, checked against the built-in classification table.
//!
//! The census enumerates every dilation with bounded entries, every finite
//! subgroup generated by one or two bounded affiliated elements of order at
//! most six, deduplicates the nontrivial affiliated pairs by bounded
//! simultaneous conjugacy, and tags each class against the table. A class
//! matches a table item when some bounded unimodular `S` carries its
//! dilation onto a listed matrix and its group *into* the listed group;
//! classes whose group is a proper subgroup of a listed maximal group are
//! therefore tagged to the same item. Mismatches are reported, never
//! dropped.

use super::{
    group_closure, is_affiliated, pair_equivalent, unimodular_inverse, SymmetryGroup,
};
use crate::lattice::{is_dilation, DilationMatrix, IntMatrix};
use rayon::prelude::*;

/// One item of the classification: the listed dilations (plus an optional
/// one-parameter family) sharing one affiliated group.
#[derive(Debug, Clone)]
pub struct TableItem {
    pub item: usize,
    pub matrices: Vec<IntMatrix>,
    pub family: Option<Family>,
    pub h_generators: Vec<IntMatrix>,
    pub group_name: &'static str,
    pub group_order: usize,
}

/// Families of dilations indexed by one integer parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    /// `[[2, n], [0, 2]]` and `[[-2, n], [0, -2]]` for even `n >= 2`.
    UpperTriangularEven,
    /// `[[n, 0], [0, ±2]]` for `|n| >= 3`.
    DiagonalTimesTwo,
}

impl TableItem {
    /// Concrete dilations of this item with entries bounded by `max_entry`.
    pub fn expand(&self, max_entry: i64) -> Vec<IntMatrix> {
        let mut out: Vec<IntMatrix> = self
            .matrices
            .iter()
            .filter(|m| m.entries().iter().all(|e| e.abs() <= max_entry))
            .cloned()
            .collect();
        match self.family {
            Some(Family::UpperTriangularEven) => {
                let mut n = 2;
                while n <= max_entry {
                    out.push(IntMatrix::from_rows(&[&[2, n], &[0, 2]]));
                    out.push(IntMatrix::from_rows(&[&[-2, n], &[0, -2]]));
                    n += 2;
                }
            }
            Some(Family::DiagonalTimesTwo) => {
                for n in 3..=max_entry {
                    for sn in [n, -n] {
                        for s2 in [2i64, -2] {
                            out.push(IntMatrix::from_rows(&[&[sn, 0], &[0, s2]]));
                        }
                    }
                }
            }
            None => {}
        }
        out
    }

    pub fn group(&self) -> SymmetryGroup {
        group_closure(&self.h_generators, 16).expect("table groups are finite")
    }
}

/// The built-in table of affiliated pairs in dimension two, up to
/// simultaneous `GL_2(Z)` conjugacy.
pub fn classification_table() -> Vec<TableItem> {
    let m = |rows: &[&[i64]]| IntMatrix::from_rows(rows);
    let neg = m(&[&[-1, 0], &[0, -1]]);
    let refl = m(&[&[1, 0], &[0, -1]]);
    let refl_neg = m(&[&[-1, 0], &[0, 1]]);
    vec![
        TableItem {
            item: 1,
            matrices: vec![
                m(&[&[0, 2], &[1, 0]]),
                m(&[&[0, 2], &[-1, 0]]),
                m(&[&[0, 2], &[-1, 1]]),
                m(&[&[0, -2], &[1, -1]]),
            ],
            family: None,
            h_generators: vec![neg.clone()],
            group_name: "Z/2Z",
            group_order: 2,
        },
        TableItem {
            item: 2,
            matrices: vec![
                m(&[&[0, 2], &[-2, 0]]),
                m(&[&[0, 2], &[-2, 2]]),
                m(&[&[0, 2], &[-2, -2]]),
                m(&[&[0, 2], &[2, 2]]),
                m(&[&[0, 2], &[2, -2]]),
                m(&[&[2, 2], &[0, -2]]),
            ],
            family: Some(Family::UpperTriangularEven),
            h_generators: vec![neg.clone()],
            group_name: "Z/2Z",
            group_order: 2,
        },
        TableItem {
            item: 3,
            matrices: vec![m(&[&[1, -1], &[1, 1]]), m(&[&[-1, 1], &[-1, -1]])],
            family: None,
            h_generators: vec![m(&[&[0, 1], &[-1, 0]])],
            group_name: "Z/4Z",
            group_order: 4,
        },
        TableItem {
            item: 4,
            matrices: vec![
                m(&[&[2, 1], &[-1, 1]]),
                m(&[&[-2, -1], &[1, -1]]),
                m(&[&[-1, -2], &[2, 1]]),
                m(&[&[1, 2], &[-2, -1]]),
            ],
            family: None,
            h_generators: vec![m(&[&[-1, -1], &[1, 0]])],
            group_name: "Z/3Z",
            group_order: 3,
        },
        TableItem {
            item: 5,
            matrices: vec![
                m(&[&[2, 0], &[0, 2]]),
                m(&[&[2, 0], &[0, -2]]),
                m(&[&[-2, 0], &[0, 2]]),
                m(&[&[-2, 0], &[0, -2]]),
            ],
            family: None,
            h_generators: vec![refl.clone(), refl_neg],
            group_name: "Z/2Z + Z/2Z",
            group_order: 4,
        },
        TableItem {
            item: 6,
            matrices: vec![],
            family: Some(Family::DiagonalTimesTwo),
            h_generators: vec![refl],
            group_name: "Z/2Z",
            group_order: 2,
        },
    ]
}

/// An equivalence class of affiliated pairs discovered by the census.
#[derive(Debug, Clone)]
pub struct CensusClass {
    pub dilation: DilationMatrix,
    pub group: SymmetryGroup,
    /// Table items this class maps into (dilation onto a listed matrix,
    /// group into the listed group). Exactly one entry for a consistent
    /// census.
    pub matched_items: Vec<usize>,
    /// Number of raw enumerated pairs merged into this class.
    pub merged: usize,
    /// Group order equals the matched item's: the class realizes the full
    /// listed symmetry rather than a proper subgroup.
    pub full_group: bool,
}

#[derive(Debug, Clone)]
pub struct CensusReport {
    pub max_entry: i64,
    pub conjugacy_bound: i64,
    pub classes: Vec<CensusClass>,
}

impl CensusReport {
    pub fn unmatched(&self) -> impl Iterator<Item = &CensusClass> {
        self.classes.iter().filter(|c| c.matched_items.len() != 1)
    }

    pub fn all_matched(&self) -> bool {
        self.classes.iter().all(|c| c.matched_items.len() == 1)
    }
}

fn group_structure_name(g: &SymmetryGroup) -> &'static str {
    match g.order() {
        1 => "trivial",
        2 => "Z/2Z",
        3 => "Z/3Z",
        4 => {
            if g
                .elements()
                .iter()
                .any(|h| super::element_order(h, 12) == Some(4))
            {
                "Z/4Z"
            } else {
                "Z/2Z + Z/2Z"
            }
        }
        6 => "Z/6Z",
        _ => "other",
    }
}

/// Printable structure name of a census class group.
pub fn class_group_name(c: &CensusClass) -> &'static str {
    group_structure_name(&c.group)
}

/// Enumerate, deduplicate and tag every nontrivial affiliated pair with
/// dilation and generator entries bounded by `max_entry`.
pub fn census_n2(max_entry: i64) -> CensusReport {
    assert!(max_entry >= 2);
    let conjugacy_bound = 5.max(max_entry);
    let range: Vec<i64> = (-max_entry..=max_entry).collect();
    let mut dilations: Vec<DilationMatrix> = Vec::new();
    for &a in &range {
        for &b in &range {
            for &c in &range {
                for &d in &range {
                    let m = IntMatrix::from_rows(&[&[a, b], &[c, d]]);
                    if is_dilation(&m) {
                        dilations.push(DilationMatrix::new(m).unwrap());
                    }
                }
            }
        }
    }
    // candidate symmetry elements: bounded, unimodular, finite order <= 6
    let mut units: Vec<IntMatrix> = Vec::new();
    for &a in &range {
        for &b in &range {
            for &c in &range {
                for &d in &range {
                    let m = IntMatrix::from_rows(&[&[a, b], &[c, d]]);
                    if m.det().abs() == 1 && !m.is_identity() {
                        if let Some(ord) = super::element_order(&m, 12) {
                            if ord <= 6 {
                                units.push(m);
                            }
                        }
                    }
                }
            }
        }
    }

    // raw affiliated pairs, enumerated in parallel per dilation
    let raw: Vec<(DilationMatrix, SymmetryGroup)> = dilations
        .par_iter()
        .flat_map_iter(|a| {
            let affiliated: Vec<&IntMatrix> = units
                .iter()
                .filter(|h| {
                    let g = SymmetryGroup {
                        elements: vec![IntMatrix::identity(2), (*h).clone()],
                        generators: vec![(*h).clone()],
                    };
                    // cheap elementwise test; closure checked below
                    let _ = &g;
                    h.mul(a.matrix()).unwrap() == a.matrix().mul(h).unwrap() && {
                        let hm1 = h.sub(&IntMatrix::identity(2)).unwrap();
                        (0..2).all(|j| {
                            let col = [hm1.at(0, j), hm1.at(1, j)];
                            a.matrix().lattice_contains(&col)
                        })
                    }
                })
                .collect();
            let mut groups: Vec<SymmetryGroup> = Vec::new();
            let mut push_group = |g: SymmetryGroup| {
                if !g.is_trivial() && !groups.iter().any(|o| o.elements() == g.elements()) {
                    groups.push(g);
                }
            };
            for h in &affiliated {
                if let Ok(g) = group_closure(&[(*h).clone()], 16) {
                    if is_affiliated(a, &g).verdict {
                        push_group(g);
                    }
                }
            }
            for i in 0..affiliated.len() {
                for j in (i + 1)..affiliated.len() {
                    if let Ok(g) =
                        group_closure(&[affiliated[i].clone(), affiliated[j].clone()], 16)
                    {
                        if is_affiliated(a, &g).verdict {
                            push_group(g);
                        }
                    }
                }
            }
            groups
                .into_iter()
                .map(|g| (a.clone(), g))
                .collect::<Vec<_>>()
        })
        .collect();

    // deduplicate by bounded simultaneous conjugacy, bucketed on invariants
    let mut order: Vec<usize> = (0..raw.len()).collect();
    order.sort_by(|&i, &j| {
        (raw[i].0.matrix(), raw[i].1.elements()).cmp(&(raw[j].0.matrix(), raw[j].1.elements()))
    });
    let mut classes: Vec<(DilationMatrix, SymmetryGroup, usize)> = Vec::new();
    for idx in order {
        let (a, g) = &raw[idx];
        let mut found = false;
        for (ca, cg, merged) in classes.iter_mut() {
            if pair_equivalent((a, g), (ca, cg), conjugacy_bound).is_some() {
                *merged += 1;
                found = true;
                break;
            }
        }
        if !found {
            classes.push((a.clone(), g.clone(), 1));
        }
    }

    // tag each class against the table
    let table = classification_table();
    let expand_bound = 5.max(max_entry);
    let tagged: Vec<CensusClass> = classes
        .into_par_iter()
        .map(|(a, g, merged)| {
            let mut matched_items = Vec::new();
            let mut full_group = false;
            for item in &table {
                let target_group = item.group();
                let mut hit = false;
                for tm in item.expand(expand_bound) {
                    if tm.det() != a.matrix().det() || tm.trace() != a.matrix().trace() {
                        continue;
                    }
                    if let Some(s) =
                        subgroup_aware_match(&a, &g, &tm, &target_group, conjugacy_bound)
                    {
                        let _ = s;
                        hit = true;
                        break;
                    }
                }
                if hit {
                    matched_items.push(item.item);
                    if g.order() == target_group.order() {
                        full_group = true;
                    }
                }
            }
            CensusClass {
                dilation: a,
                group: g,
                matched_items,
                merged,
                full_group,
            }
        })
        .collect();

    CensusReport {
        max_entry,
        conjugacy_bound,
        classes: tagged,
    }
}

/// Bounded search for `S` with `S A S^{-1} = A'` and `S H S^{-1} ⊆ H'`.
fn subgroup_aware_match(
    a: &DilationMatrix,
    h: &SymmetryGroup,
    a_target: &IntMatrix,
    h_target: &SymmetryGroup,
    bound: i64,
) -> Option<IntMatrix> {
    if h.order() > h_target.order() {
        return None;
    }
    let r = -bound..=bound;
    for s00 in r.clone() {
        for s01 in r.clone() {
            for s10 in r.clone() {
                for s11 in r.clone() {
                    let s = IntMatrix::from_rows(&[&[s00, s01], &[s10, s11]]);
                    if s.det().abs() != 1 {
                        continue;
                    }
                    if s.mul(a.matrix()).unwrap() != a_target.mul(&s).unwrap() {
                        continue;
                    }
                    let s_inv = unimodular_inverse(&s);
                    if h
                        .elements()
                        .iter()
                        .all(|e| h_target.contains(&s.mul(e).unwrap().mul(&s_inv).unwrap()))
                    {
                        return Some(s);
                    }
                }
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symmetry::element_order;

    #[test]
    fn table_entries_are_affiliated() {
        for item in classification_table() {
            let g = item.group();
            assert_eq!(g.order(), item.group_order, "item {}", item.item);
            for m in item.expand(4) {
                let a = DilationMatrix::new(m.clone())
                    .unwrap_or_else(|_| panic!("table matrix {m} must be a dilation"));
                let rep = is_affiliated(&a, &g);
                assert!(rep.verdict, "item {} matrix {m}", item.item);
                for e in g.elements() {
                    let ord = element_order(e, 12).expect("finite");
                    assert_eq!(item.group_order % ord as usize, 0);
                }
            }
        }
    }

    #[test]
    fn no_order_six_group_in_table() {
        for item in classification_table() {
            assert!(item.group_order != 6);
            for e in item.group().elements() {
                assert_ne!(element_order(e, 12), Some(6));
            }
        }
    }

    #[test]
    fn census_small_bound_contains_expected_classes() {
        let report = census_n2(2);
        assert!(report.all_matched(), "unmatched classes at max_entry=2");
        // the order-four cyclic pair on the quincunx-type dilation
        let a3 = DilationMatrix::new(IntMatrix::from_rows(&[&[1, -1], &[1, 1]])).unwrap();
        let h3 = group_closure(&[IntMatrix::from_rows(&[&[0, 1], &[-1, 0]])], 16).unwrap();
        assert!(report.classes.iter().any(|c| {
            c.group.order() == 4
                && pair_equivalent((&c.dilation, &c.group), (&a3, &h3), 5).is_some()
        }));
        // the Klein four-group on diag(2,-2)
        let a5 = DilationMatrix::new(IntMatrix::from_rows(&[&[2, 0], &[0, -2]])).unwrap();
        let h5 = group_closure(
            &[
                IntMatrix::from_rows(&[&[1, 0], &[0, -1]]),
                IntMatrix::from_rows(&[&[-1, 0], &[0, 1]]),
            ],
            16,
        )
        .unwrap();
        assert!(report.classes.iter().any(|c| {
            c.group.order() == 4
                && pair_equivalent((&c.dilation, &c.group), (&a5, &h5), 5).is_some()
        }));
        // no affiliated group of order six anywhere
        assert!(report.classes.iter().all(|c| c.group.order() != 6));
    }
}
