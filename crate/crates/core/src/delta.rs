//! Δ-systems: the matrix of allowed pair diagrams between classes of a
//! restricted equivalence relation, with a designated binary symbol Q
//! marking "same class".
//!
//! A system has `l` classes; the last `t` of them are base classes that
//! hold exactly one element in every sampled structure (internally classes
//! are 0-based, so base classes are `l-t..l`; JSON and display use the
//! 1-based convention). The four validity bullets are: closure under
//! reversal, a single unary diagram per row, singleton diagram sets against
//! base classes, and Q true inside classes / false across them.

use crate::logic::EquivalenceViolation;
use crate::structure::{
    Arity, FiniteStructure, PairDiagram, StructureError, SymbolRef, UnaryDiagram, Vocabulary,
};
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum DeltaError {
    #[error("designated symbol {0:?} is not a binary symbol of the vocabulary")]
    BadQ(String),
    #[error("need 0 < l and 0 <= t < l, got l={l}, t={t}")]
    BadShape { l: usize, t: usize },
    #[error("diagram set for classes ({i},{j}) is empty or missing (1-based)")]
    EmptyCell { i: usize, j: usize },
    #[error("delta matrix has wrong dimensions")]
    BadDims,
    #[error(transparent)]
    Diagram(#[from] StructureError),
    #[error("padding requires a system without base classes (t = 0), got t={0}")]
    BaseSetsPresent(usize),
    #[error("class {0} has no symmetric diagram and an odd padding count; cannot pad")]
    PadNoSymmetricDiagram(usize),
    #[error("class assignment inconsistent with structure: {0}")]
    InconsistentAssignment(String),
}

/// A violated compatibility bullet, with a witnessing cell and diagram.
/// Indices are 0-based here; `Display` shows them 1-based.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    /// `diagram` is in δ_{i,j} but its reverse is missing from δ_{j,i}.
    Reversal { i: usize, j: usize, diagram: PairDiagram },
    /// `diagram` in δ_{i,j} assigns x a different unary diagram than the
    /// rest of row i.
    UnaryCoherence { i: usize, j: usize, diagram: PairDiagram },
    /// δ_{i,j} for a base class j should be a singleton.
    BaseSingleton { i: usize, j: usize, size: usize },
    /// Q must hold both ways (and on the loop) inside a class, and fail
    /// both ways across classes.
    QDiscipline { i: usize, j: usize, diagram: PairDiagram },
}

impl Violation {
    pub fn kind(&self) -> &'static str {
        match self {
            Violation::Reversal { .. } => "reversal",
            Violation::UnaryCoherence { .. } => "unary-coherence",
            Violation::BaseSingleton { .. } => "base-singleton",
            Violation::QDiscipline { .. } => "q-discipline",
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Reversal { i, j, .. } => {
                write!(f, "reversal: a diagram of delta[{},{}] has no reverse in delta[{},{}]",
                    i + 1, j + 1, j + 1, i + 1)
            }
            Violation::UnaryCoherence { i, j, .. } => {
                write!(f, "unary-coherence: delta[{},{}] assigns x a unary diagram differing from row {}",
                    i + 1, j + 1, i + 1)
            }
            Violation::BaseSingleton { i, j, size } => {
                write!(f, "base-singleton: delta[{},{}] has {} diagrams but class {} is a base class",
                    i + 1, j + 1, size, j + 1)
            }
            Violation::QDiscipline { i, j, .. } => {
                write!(f, "q-discipline: a diagram of delta[{},{}] has the wrong Q atoms", i + 1, j + 1)
            }
        }
    }
}

/// An (l, t, Q) system of pair-diagram alphabets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DeltaSystem {
    vocab: Arc<Vocabulary>,
    q: usize,
    q_name: String,
    l: usize,
    t: usize,
    /// Row-major l×l cells, each sorted and deduplicated, never empty.
    delta: Vec<Vec<PairDiagram>>,
}

impl DeltaSystem {
    /// Build from a full l×l matrix of diagram sets.
    pub fn new(
        vocab: Arc<Vocabulary>,
        q_name: &str,
        l: usize,
        t: usize,
        delta: Vec<Vec<Vec<PairDiagram>>>,
    ) -> Result<Self, DeltaError> {
        let q = match vocab.lookup(q_name) {
            Some(SymbolRef { arity: Arity::Binary, index }) => index,
            _ => return Err(DeltaError::BadQ(q_name.to_string())),
        };
        if l == 0 || t >= l {
            return Err(DeltaError::BadShape { l, t });
        }
        if delta.len() != l || delta.iter().any(|row| row.len() != l) {
            return Err(DeltaError::BadDims);
        }
        let mut cells = Vec::with_capacity(l * l);
        for (i, row) in delta.into_iter().enumerate() {
            for (j, mut cell) in row.into_iter().enumerate() {
                if cell.is_empty() {
                    return Err(DeltaError::EmptyCell { i: i + 1, j: j + 1 });
                }
                for d in &cell {
                    if !d.fits(&vocab) {
                        return Err(DeltaError::Diagram(StructureError::DiagramShape(format!(
                            "diagram in delta[{},{}] does not fit the vocabulary",
                            i + 1,
                            j + 1
                        ))));
                    }
                }
                cell.sort();
                cell.dedup();
                cells.push(cell);
            }
        }
        Ok(DeltaSystem { vocab, q, q_name: q_name.to_string(), l, t, delta: cells })
    }

    /// Build from the cells with i ≤ j (0-based); cells below the diagonal
    /// are filled with reversals.
    pub fn from_upper(
        vocab: Arc<Vocabulary>,
        q_name: &str,
        l: usize,
        t: usize,
        upper: Vec<((usize, usize), Vec<PairDiagram>)>,
    ) -> Result<Self, DeltaError> {
        let mut matrix: Vec<Vec<Vec<PairDiagram>>> = vec![vec![Vec::new(); l]; l];
        for ((i, j), cell) in upper {
            if i > j || j >= l {
                return Err(DeltaError::BadDims);
            }
            matrix[i][j] = cell;
        }
        for i in 0..l {
            for j in 0..i {
                matrix[i][j] = matrix[j][i].iter().map(|d| d.reverse()).collect();
            }
        }
        Self::new(vocab, q_name, l, t, matrix)
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn vocab_arc(&self) -> Arc<Vocabulary> {
        Arc::clone(&self.vocab)
    }

    pub fn q_index(&self) -> usize {
        self.q
    }

    pub fn q_name(&self) -> &str {
        &self.q_name
    }

    pub fn num_classes(&self) -> usize {
        self.l
    }

    pub fn num_base(&self) -> usize {
        self.t
    }

    pub fn is_base(&self, class: usize) -> bool {
        class >= self.l - self.t
    }

    pub fn cell(&self, i: usize, j: usize) -> &[PairDiagram] {
        &self.delta[i * self.l + j]
    }

    pub fn cell_index_of(&self, i: usize, j: usize, d: &PairDiagram) -> Option<usize> {
        self.cell(i, j).binary_search(d).ok()
    }

    pub fn max_cell_size(&self) -> usize {
        self.delta.iter().map(|c| c.len()).max().unwrap_or(0)
    }

    /// The unary diagram every diagram of row i assigns to x. Well-defined
    /// once validation passes; otherwise this is the row's first diagram.
    pub fn row_unary(&self, i: usize) -> &UnaryDiagram {
        self.cell(i, 0)[0].x()
    }

    pub fn all_singleton(&self) -> bool {
        self.delta.iter().all(|c| c.len() == 1)
    }

    /// True when distinct classes never share a unary diagram, Q's loop
    /// atom excluded (it is constant under Q discipline). Class membership
    /// of an age member is then forced by its unary atoms.
    pub fn is_unary_separated(&self) -> bool {
        self.unary_collision().is_none()
    }

    /// The first pair of classes sharing a non-Q unary diagram, if any.
    pub fn unary_collision(&self) -> Option<(usize, usize)> {
        for i in 0..self.l {
            for j in i + 1..self.l {
                let a = self.row_unary(i);
                let b = self.row_unary(j);
                let same_unary =
                    (0..self.vocab.unary_count()).all(|k| a.unary(k) == b.unary(k));
                let same_loops = (0..self.vocab.binary_count())
                    .filter(|&k| k != self.q)
                    .all(|k| a.loop_at(k) == b.loop_at(k));
                if same_unary && same_loops {
                    return Some((i, j));
                }
            }
        }
        None
    }

    /// Check the four compatibility bullets; an empty list means the system
    /// is valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        // Reversal closure.
        for i in 0..self.l {
            for j in 0..self.l {
                for d in self.cell(i, j) {
                    if self.cell_index_of(j, i, &d.reverse()).is_none() {
                        out.push(Violation::Reversal { i, j, diagram: d.clone() });
                    }
                }
            }
        }
        // One unary diagram per row.
        for i in 0..self.l {
            let baseline = self.row_unary(i).clone();
            for j in 0..self.l {
                for d in self.cell(i, j) {
                    if *d.x() != baseline {
                        out.push(Violation::UnaryCoherence { i, j, diagram: d.clone() });
                    }
                }
            }
        }
        // Base classes admit exactly one diagram.
        for i in 0..self.l {
            for j in (self.l - self.t)..self.l {
                let size = self.cell(i, j).len();
                if size != 1 {
                    out.push(Violation::BaseSingleton { i, j, size });
                }
            }
        }
        // Q discipline.
        for i in 0..self.l {
            for j in 0..self.l {
                for d in self.cell(i, j) {
                    let ok = if i == j {
                        d.cross_xy(self.q) && d.cross_yx(self.q) && d.x().loop_at(self.q)
                    } else {
                        !d.cross_xy(self.q) && !d.cross_yx(self.q) && d.x().loop_at(self.q)
                    };
                    if !ok {
                        out.push(Violation::QDiscipline { i, j, diagram: d.clone() });
                    }
                }
            }
        }
        out
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_empty()
    }

    /// Pad every cell to the common size `max |δ_{i,j}| + 1` with fresh
    /// binary symbols, one family per cell above the diagonal. Each padded
    /// diagram restricts to an original diagram of its cell, so restricting
    /// any structure over the padded vocabulary recovers an in-alphabet
    /// structure over the original one. Only systems without base classes
    /// can be padded.
    pub fn pad(&self) -> Result<DeltaSystem, DeltaError> {
        if self.t != 0 {
            return Err(DeltaError::BaseSetsPresent(self.t));
        }
        let r = self.max_cell_size() + 1;
        // Fresh symbol names per upper cell.
        let mut names: Vec<(String, Arity)> = self
            .vocab
            .symbols()
            .iter()
            .map(|s| (s.name.clone(), s.arity))
            .collect();
        let mut taken: std::collections::HashSet<String> =
            names.iter().map(|(n, _)| n.clone()).collect();
        let mut fresh: Vec<Vec<Vec<usize>>> = vec![vec![Vec::new(); self.l]; self.l];
        let old_b = self.vocab.binary_count();
        let mut next_binary = old_b;
        for i in 0..self.l {
            for j in i..self.l {
                let need = if i == j && !self.cell(i, i).iter().any(|d| d.is_symmetric()) {
                    // Padding in reversal-closed pairs halves the symbol count.
                    let m = r - self.cell(i, i).len();
                    if !m.is_multiple_of(2) {
                        return Err(DeltaError::PadNoSymmetricDiagram(i + 1));
                    }
                    m / 2
                } else {
                    r - self.cell(i, j).len()
                };
                for s in 1..=need {
                    let mut name = format!("R{}_{}_{}", s, i + 1, j + 1);
                    while taken.contains(&name) {
                        name.push('x');
                    }
                    taken.insert(name.clone());
                    names.push((name, Arity::Binary));
                    fresh[i][j].push(next_binary);
                    next_binary += 1;
                }
            }
        }
        let added = next_binary - old_b;
        let vocab = Arc::new(Vocabulary::new(names).expect("fresh names are valid"));
        let mut upper = Vec::new();
        for i in 0..self.l {
            for j in i..self.l {
                let mut cell: Vec<PairDiagram> =
                    self.cell(i, j).iter().map(|d| d.with_appended_binary(added)).collect();
                let symbols = &fresh[i][j];
                if i == j && !self.cell(i, i).iter().any(|d| d.is_symmetric()) {
                    // No symmetric base diagram: pad with reversal-closed
                    // pairs built over an asymmetric one.
                    let base = self.cell(i, i)[0].with_appended_binary(added);
                    for s in 0..symbols.len() {
                        let mut forward = base.clone();
                        for &earlier in &symbols[..=s] {
                            forward = forward.with_cross(earlier, true, true);
                        }
                        cell.push(forward.reverse());
                        cell.push(forward);
                    }
                } else {
                    let base = self
                        .cell(i, j)
                        .iter()
                        .find(|d| i != j || d.is_symmetric())
                        .expect("checked above")
                        .with_appended_binary(added);
                    for s in 0..symbols.len() {
                        let mut padded = base.clone();
                        for &earlier in &symbols[..=s] {
                            padded = padded.with_cross(earlier, true, true);
                        }
                        cell.push(padded);
                    }
                }
                upper.push(((i, j), cell));
            }
        }
        DeltaSystem::from_upper(vocab, &self.q_name, self.l, 0, upper)
    }
}

/// Assignment of sampled elements to classes of a system.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassAssignment {
    cls: Vec<usize>,
    num_classes: usize,
}

impl ClassAssignment {
    pub fn new(cls: Vec<usize>, num_classes: usize) -> Self {
        assert!(cls.iter().all(|&c| c < num_classes), "class index out of range");
        ClassAssignment { cls, num_classes }
    }

    pub fn len(&self) -> usize {
        self.cls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cls.is_empty()
    }

    pub fn class_of(&self, e: usize) -> usize {
        self.cls[e]
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn classes(&self) -> &[usize] {
        &self.cls
    }

    pub fn blocks(&self) -> Vec<Vec<usize>> {
        let mut blocks = vec![Vec::new(); self.num_classes];
        for (e, &c) in self.cls.iter().enumerate() {
            blocks[c].push(e);
        }
        blocks
    }

    /// Consistency with a structure and system: the Q-blocks of `s` are
    /// exactly the class preimages, and every base class holds exactly one
    /// element.
    pub fn check(&self, s: &FiniteStructure, ds: &DeltaSystem) -> Result<(), DeltaError> {
        if self.cls.len() != s.size() {
            return Err(DeltaError::InconsistentAssignment(format!(
                "assignment covers {} elements, structure has {}",
                self.cls.len(),
                s.size()
            )));
        }
        if self.num_classes != ds.num_classes() {
            return Err(DeltaError::InconsistentAssignment(
                "assignment and system disagree on the number of classes".into(),
            ));
        }
        let q = ds.q_index();
        for a in 0..s.size() {
            for b in 0..s.size() {
                let same = self.cls[a] == self.cls[b];
                if s.has_binary(q, a, b) != same {
                    return Err(DeltaError::InconsistentAssignment(format!(
                        "Q({a},{b}) disagrees with the class assignment"
                    )));
                }
            }
        }
        for c in (ds.num_classes() - ds.num_base())..ds.num_classes() {
            let count = self.cls.iter().filter(|&&x| x == c).count();
            if count != 1 {
                return Err(DeltaError::InconsistentAssignment(format!(
                    "base class {} has {} elements, expected 1",
                    c + 1,
                    count
                )));
            }
        }
        Ok(())
    }
}

/// Concrete witnesses realizing every diagram of every cell.
#[derive(Clone, Debug)]
pub struct SpanningTable {
    pub entries: Vec<SpanningWitness>,
}

#[derive(Clone, Debug)]
pub struct SpanningWitness {
    pub i: usize,
    pub j: usize,
    pub diagram_index: usize,
    pub pair: (usize, usize),
}

/// The first unrealized (class pair, diagram) cell entry.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MissingDiagram {
    pub i: usize,
    pub j: usize,
    pub diagram: PairDiagram,
}

impl fmt::Display for MissingDiagram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "no witness pair for a diagram of delta[{},{}]", self.i + 1, self.j + 1)
    }
}

/// For every i, j and ζ ∈ δ_{i,j}, find a concrete pair (a, b) with
/// classes (i, j) whose diagram is ζ. Witnesses are searched greedily
/// pair by pair; any realization suffices.
pub fn spanning_witnesses(
    s: &FiniteStructure,
    ds: &DeltaSystem,
    ca: &ClassAssignment,
) -> Result<SpanningTable, Box<MissingDiagram>> {
    let blocks = ca.blocks();
    let mut entries = Vec::new();
    for i in 0..ds.num_classes() {
        for j in 0..ds.num_classes() {
            for (k, d) in ds.cell(i, j).iter().enumerate() {
                let found = blocks[i].iter().copied().find_map(|a| {
                    blocks[j]
                        .iter()
                        .copied()
                        .find(|&b| a != b && d.matches(s, a, b))
                        .map(|b| (a, b))
                });
                match found {
                    Some(pair) => {
                        entries.push(SpanningWitness { i, j, diagram_index: k, pair })
                    }
                    None => {
                        return Err(Box::new(MissingDiagram { i, j, diagram: d.clone() }));
                    }
                }
            }
        }
    }
    Ok(SpanningTable { entries })
}

/// Why a structure does not induce a system.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum NotRestricted {
    /// Q's interpretation is not an equivalence relation.
    NotEquivalence(EquivalenceViolation),
    /// The structure is empty; there are no classes to read off.
    Empty,
    /// The named symbol is missing or not binary.
    NoSuchSymbol(String),
}

impl fmt::Display for NotRestricted {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NotRestricted::NotEquivalence(v) => write!(f, "Q is {v}"),
            NotRestricted::Empty => write!(f, "structure is empty"),
            NotRestricted::NoSuchSymbol(name) => {
                write!(f, "{name:?} is not a binary symbol of the structure")
            }
        }
    }
}

/// Read a system off a structure: treat `q_symbol`'s interpretation as the
/// class relation and record exactly the observed diagrams between each
/// pair of blocks. Blocks are ordered larger-first, ties by least element,
/// so singleton blocks land in the base-class range. A singleton block's
/// diagonal cell is never observed; it gets the one Q-respecting diagram
/// with no other cross relations.
pub fn induced_delta(
    s: &FiniteStructure,
    q_name: &str,
) -> Result<(DeltaSystem, ClassAssignment), NotRestricted> {
    let q = match s.vocab().lookup(q_name) {
        Some(SymbolRef { arity: Arity::Binary, index }) => index,
        _ => return Err(NotRestricted::NoSuchSymbol(q_name.to_string())),
    };
    let n = s.size();
    if n == 0 {
        return Err(NotRestricted::Empty);
    }
    let rel: Vec<bool> = (0..n * n).map(|p| s.has_binary(q, p / n, p % n)).collect();
    let mut blocks = crate::logic::partition_of_relation(n, &rel)
        .map_err(NotRestricted::NotEquivalence)?;
    blocks.sort_by_key(|b| (std::cmp::Reverse(b.len()), b[0]));
    let l = blocks.len();
    // All-singleton partitions are degenerate: t < l forces the first block
    // out of the base range.
    let t = blocks.iter().filter(|b| b.len() == 1).count().min(l - 1);
    let mut cls = vec![0usize; n];
    for (c, block) in blocks.iter().enumerate() {
        for &e in block {
            cls[e] = c;
        }
    }
    let vocab = s.vocab_arc();
    let mut matrix: Vec<Vec<Vec<PairDiagram>>> = vec![vec![Vec::new(); l]; l];
    for (i, bi) in blocks.iter().enumerate() {
        for (j, bj) in blocks.iter().enumerate() {
            let mut cell = Vec::new();
            for &a in bi {
                for &b in bj {
                    if a != b {
                        cell.push(s.pair_diagram(a, b).expect("elements in range"));
                    }
                }
            }
            cell.sort();
            cell.dedup();
            if cell.is_empty() {
                debug_assert_eq!(i, j);
                let ud = s.unary_diagram(blocks[i][0]);
                let d = PairDiagram::from_parts(
                    &vocab,
                    ud.clone(),
                    ud,
                    (0..vocab.binary_count()).map(|k| k == q).collect(),
                    (0..vocab.binary_count()).map(|k| k == q).collect(),
                )
                .expect("shape matches vocabulary");
                cell.push(d);
            }
            matrix[i][j] = cell;
        }
    }
    let ds = DeltaSystem::new(vocab, q_name, l, t, matrix).expect("cells are non-empty");
    Ok((ds, ClassAssignment::new(cls, l)))
}
