//! Syntactic classification of the limiting theory of a Δ-system, and
//! finite indiscernibility detectors.
//!
//! The classifier is a pure function of the system: a valid system always
//! describes a supersimple rank-one theory with trivial pregeometry; it is
//! totally categorical in the ω-stable sense exactly when every cell is a
//! singleton (extensions are unique per class), and strongly minimal when
//! additionally only one class is unbounded. Sample-level operations live
//! separately so a finite sample's failure is never mistaken for a
//! theory-level fact.
//!
//! Indiscernibility over a set reduces, in a unary/binary vocabulary, to
//! three pairwise conditions (shared unary diagram, one diagram inside the
//! set, one diagram toward each outside element) because the atomic type of
//! any tuple is determined by its pair diagrams.

use crate::delta::{ClassAssignment, DeltaSystem};
use crate::structure::FiniteStructure;
use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum ClassifyError {
    #[error("subset size cap is {cap}, got {got}")]
    CapExceeded { got: usize, cap: usize },
}

/// Maximum removed-set size for the exhaustive complement search.
pub const MAX_COMPLEMENT_SIZE: usize = 4;

/// Flags of the limiting theory, ordered by strength: strongly minimal
/// implies ω-stable implies simple of rank one with trivial pregeometry.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TheoryClass {
    pub simple_su1_trivial: bool,
    pub omega_stable: bool,
    pub strongly_minimal: bool,
    /// Set when base classes coexist with a multi-diagram cell: such a
    /// system's limit cannot arise as the uniform-measure limit of its own
    /// age, because structures realizing the base elements vanish in
    /// proportion.
    pub random_structure_warning: bool,
    pub justification: String,
}

/// Decide the classification flags from the system alone (which must be
/// valid).
pub fn classify_theory(ds: &DeltaSystem) -> TheoryClass {
    debug_assert!(ds.is_valid(), "classify valid systems only");
    let all_singleton = ds.all_singleton();
    let unbounded_classes = ds.num_classes() - ds.num_base();
    let strongly_minimal = all_singleton && unbounded_classes == 1;
    let justification = if strongly_minimal {
        "every cell is a singleton and a single class is unbounded".to_string()
    } else if all_singleton {
        format!(
            "every cell is a singleton, but {unbounded_classes} classes are unbounded"
        )
    } else {
        "some class pair admits more than one diagram".to_string()
    };
    TheoryClass {
        simple_su1_trivial: true,
        omega_stable: all_singleton,
        strongly_minimal,
        random_structure_warning: ds.num_base() > 0 && !all_singleton,
        justification,
    }
}

/// Is `set` indiscernible over `others` in `s`? True iff all elements of
/// `set` share one unary diagram, all ordered pairs inside `set` share one
/// pair diagram, and for each outside element all of `set` shares one
/// diagram toward it.
fn set_indiscernible_over(s: &FiniteStructure, set: &[usize], others: &[usize]) -> bool {
    if set.len() <= 1 {
        // Pairwise conditions are vacuous; only uniformity toward the
        // outside could fail, and a single element is trivially uniform.
        return true;
    }
    let first = set[0];
    if set[1..].iter().any(|&e| s.unary_diagram(e) != s.unary_diagram(first)) {
        return false;
    }
    let inner = s.pair_diagram(set[0], set[1]).expect("distinct in-range elements");
    for &a in set {
        for &b in set {
            if a != b && s.pair_diagram(a, b).expect("distinct") != inner {
                return false;
            }
        }
    }
    for &z in others {
        let toward = s.pair_diagram(first, z).expect("distinct");
        for &a in set {
            if s.pair_diagram(a, z).expect("distinct") != toward {
                return false;
            }
        }
    }
    true
}

/// Check each class of the assignment for indiscernibility over the rest
/// of the structure.
pub fn check_class_indiscernibility(s: &FiniteStructure, ca: &ClassAssignment) -> Vec<bool> {
    let blocks = ca.blocks();
    blocks
        .iter()
        .map(|block| {
            let others: Vec<usize> =
                (0..s.size()).filter(|e| !block.contains(e)).collect();
            set_indiscernible_over(s, block, &others)
        })
        .collect()
}

/// Exhaustive search for the smallest X with |X| ≤ m_max whose complement
/// is indiscernible over X. Subsets are tried in size order, then
/// lexicographically.
pub fn find_indiscernible_complement(
    s: &FiniteStructure,
    m_max: usize,
) -> Result<Option<Vec<usize>>, ClassifyError> {
    if m_max > MAX_COMPLEMENT_SIZE {
        return Err(ClassifyError::CapExceeded { got: m_max, cap: MAX_COMPLEMENT_SIZE });
    }
    let n = s.size();
    for m in 0..=m_max.min(n) {
        let mut subset: Vec<usize> = (0..m).collect();
        'subsets: loop {
            let complement: Vec<usize> = (0..n).filter(|e| !subset.contains(e)).collect();
            if set_indiscernible_over(s, &complement, &subset) {
                return Ok(Some(subset));
            }
            if m == 0 {
                break;
            }
            // Next m-combination in lexicographic order.
            let mut i = m;
            while i > 0 {
                i -= 1;
                if subset[i] != i + n - m {
                    subset[i] += 1;
                    for j in i + 1..m {
                        subset[j] = subset[j - 1] + 1;
                    }
                    continue 'subsets;
                }
            }
            break;
        }
    }
    Ok(None)
}
