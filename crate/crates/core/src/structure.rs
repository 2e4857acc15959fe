//! Vocabularies, finite structures, atomic diagrams, embeddings, and
//! exhaustive enumeration.
//!
//! Everything here is immutable after construction and every analysis is a
//! pure function, so values can be shared freely across threads. Binary
//! relations are stored as flat n×n bit matrices and unary relations as
//! length-n bit vectors, giving O(1) atom lookup in every checker's inner
//! loop.

use std::fmt;
use std::sync::Arc;
use thiserror::Error;

/// Default universe-size cap for exhaustive enumeration. The number of
/// labeled structures grows as 2^(n·u + n²·b), which makes anything past
/// seven elements infeasible for multi-relation vocabularies.
pub const DEFAULT_ENUMERATION_CAP: usize = 7;

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum VocabularyError {
    #[error("symbol name {0:?} is not a valid identifier")]
    BadName(String),
    #[error("duplicate symbol name {0:?}")]
    DuplicateName(String),
}

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum StructureError {
    #[error("element {element} out of range for universe of size {size}")]
    ElementOutOfRange { element: usize, size: usize },
    #[error("elements must be distinct, got {0} twice")]
    EqualElements(usize),
    #[error("structures are over different vocabularies")]
    VocabularyMismatch,
    #[error("map covers {got} elements, expected {expected}")]
    MapSizeMismatch { expected: usize, got: usize },
    #[error("enumeration size {n} exceeds cap {cap}")]
    CapExceeded { n: usize, cap: usize },
    #[error("diagram does not fit vocabulary ({0})")]
    DiagramShape(String),
}

/// Relation symbol arity. Only unary and binary symbols exist here.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Arity {
    Unary,
    Binary,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Symbol {
    pub name: String,
    pub arity: Arity,
}

/// Resolved position of a symbol: its arity plus its index among the
/// symbols of that arity, in declaration order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SymbolRef {
    pub arity: Arity,
    pub index: usize,
}

/// An ordered list of relation symbols with unique identifier names.
#[derive(Debug, PartialEq, Eq)]
pub struct Vocabulary {
    symbols: Vec<Symbol>,
    unary: Vec<usize>,
    binary: Vec<usize>,
}

fn is_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl Vocabulary {
    pub fn new<S: Into<String>>(symbols: Vec<(S, Arity)>) -> Result<Self, VocabularyError> {
        let symbols: Vec<Symbol> = symbols
            .into_iter()
            .map(|(name, arity)| Symbol { name: name.into(), arity })
            .collect();
        let mut seen = std::collections::HashSet::new();
        for s in &symbols {
            if !is_identifier(&s.name) {
                return Err(VocabularyError::BadName(s.name.clone()));
            }
            if !seen.insert(s.name.clone()) {
                return Err(VocabularyError::DuplicateName(s.name.clone()));
            }
        }
        let unary = symbols
            .iter()
            .enumerate()
            .filter(|(_, s)| s.arity == Arity::Unary)
            .map(|(i, _)| i)
            .collect();
        let binary = symbols
            .iter()
            .enumerate()
            .filter(|(_, s)| s.arity == Arity::Binary)
            .map(|(i, _)| i)
            .collect();
        Ok(Vocabulary { symbols, unary, binary })
    }

    /// Convenience constructor wrapping the result in an `Arc`, the form
    /// every structure and system shares.
    pub fn shared<S: Into<String>>(symbols: Vec<(S, Arity)>) -> Result<Arc<Self>, VocabularyError> {
        Ok(Arc::new(Self::new(symbols)?))
    }

    pub fn symbols(&self) -> &[Symbol] {
        &self.symbols
    }

    pub fn unary_count(&self) -> usize {
        self.unary.len()
    }

    pub fn binary_count(&self) -> usize {
        self.binary.len()
    }

    pub fn unary_name(&self, k: usize) -> &str {
        &self.symbols[self.unary[k]].name
    }

    pub fn binary_name(&self, k: usize) -> &str {
        &self.symbols[self.binary[k]].name
    }

    /// Resolve a symbol name to its arity and per-arity index.
    pub fn lookup(&self, name: &str) -> Option<SymbolRef> {
        let pos = self.symbols.iter().position(|s| s.name == name)?;
        let arity = self.symbols[pos].arity;
        let list = match arity {
            Arity::Unary => &self.unary,
            Arity::Binary => &self.binary,
        };
        let index = list.iter().position(|&i| i == pos).unwrap();
        Some(SymbolRef { arity, index })
    }

    pub fn binary_index(&self, name: &str) -> Option<usize> {
        match self.lookup(name)? {
            SymbolRef { arity: Arity::Binary, index } => Some(index),
            _ => None,
        }
    }
}

/// Truth values of the one-variable atoms over a vocabulary: P(x) for each
/// unary symbol and R(x,x) for each binary symbol, in declaration order.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct UnaryDiagram {
    unary: Vec<bool>,
    loops: Vec<bool>,
}

impl UnaryDiagram {
    pub fn all_false(vocab: &Vocabulary) -> Self {
        UnaryDiagram {
            unary: vec![false; vocab.unary_count()],
            loops: vec![false; vocab.binary_count()],
        }
    }

    pub fn from_parts(
        vocab: &Vocabulary,
        unary: Vec<bool>,
        loops: Vec<bool>,
    ) -> Result<Self, StructureError> {
        if unary.len() != vocab.unary_count() || loops.len() != vocab.binary_count() {
            return Err(StructureError::DiagramShape(format!(
                "expected {} unary / {} loop atoms, got {} / {}",
                vocab.unary_count(),
                vocab.binary_count(),
                unary.len(),
                loops.len()
            )));
        }
        Ok(UnaryDiagram { unary, loops })
    }

    pub fn unary(&self, k: usize) -> bool {
        self.unary[k]
    }

    pub fn loop_at(&self, k: usize) -> bool {
        self.loops[k]
    }

    pub fn with_unary(mut self, k: usize, v: bool) -> Self {
        self.unary[k] = v;
        self
    }

    pub fn with_loop(mut self, k: usize, v: bool) -> Self {
        self.loops[k] = v;
        self
    }

    /// Every truth assignment over the one-variable atoms, in a canonical
    /// order. 2^(u+b) diagrams.
    pub fn enumerate(vocab: &Vocabulary) -> Vec<UnaryDiagram> {
        let u = vocab.unary_count();
        let b = vocab.binary_count();
        let bits = u + b;
        (0..1usize << bits)
            .map(|mask| UnaryDiagram {
                unary: (0..u).map(|k| mask >> k & 1 == 1).collect(),
                loops: (0..b).map(|k| mask >> (u + k) & 1 == 1).collect(),
            })
            .collect()
    }

    pub(crate) fn with_appended_binary(&self, count: usize) -> UnaryDiagram {
        let mut loops = self.loops.clone();
        loops.extend(std::iter::repeat_n(false, count));
        UnaryDiagram { unary: self.unary.clone(), loops }
    }

    pub(crate) fn unary_len(&self) -> usize {
        self.unary.len()
    }

    pub(crate) fn loops_len(&self) -> usize {
        self.loops.len()
    }
}

/// A binary atomic diagram ζ(x,y): the truth values of every atom over two
/// distinct variables, i.e. P(x), P(y) for unary P and R(x,x), R(x,y),
/// R(y,x), R(y,y) for binary R. Equality is never an atom here; x ≠ y is
/// implicit.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct PairDiagram {
    x: UnaryDiagram,
    y: UnaryDiagram,
    xy: Vec<bool>,
    yx: Vec<bool>,
}

impl PairDiagram {
    pub fn all_false(vocab: &Vocabulary) -> Self {
        PairDiagram {
            x: UnaryDiagram::all_false(vocab),
            y: UnaryDiagram::all_false(vocab),
            xy: vec![false; vocab.binary_count()],
            yx: vec![false; vocab.binary_count()],
        }
    }

    pub fn from_parts(
        vocab: &Vocabulary,
        x: UnaryDiagram,
        y: UnaryDiagram,
        xy: Vec<bool>,
        yx: Vec<bool>,
    ) -> Result<Self, StructureError> {
        let b = vocab.binary_count();
        if x.loops.len() != b || y.loops.len() != b || xy.len() != b || yx.len() != b {
            return Err(StructureError::DiagramShape(
                "cross atoms do not match the vocabulary's binary symbols".into(),
            ));
        }
        if x.unary.len() != vocab.unary_count() || y.unary.len() != vocab.unary_count() {
            return Err(StructureError::DiagramShape(
                "unary atoms do not match the vocabulary's unary symbols".into(),
            ));
        }
        Ok(PairDiagram { x, y, xy, yx })
    }

    pub fn x(&self) -> &UnaryDiagram {
        &self.x
    }

    pub fn y(&self) -> &UnaryDiagram {
        &self.y
    }

    pub fn cross_xy(&self, k: usize) -> bool {
        self.xy[k]
    }

    pub fn cross_yx(&self, k: usize) -> bool {
        self.yx[k]
    }

    /// Swap x and y in every atom. An involution: `reverse(reverse(d)) = d`.
    pub fn reverse(&self) -> PairDiagram {
        PairDiagram {
            x: self.y.clone(),
            y: self.x.clone(),
            xy: self.yx.clone(),
            yx: self.xy.clone(),
        }
    }

    pub fn is_symmetric(&self) -> bool {
        self.x == self.y && self.xy == self.yx
    }

    /// True iff this diagram is exactly the atomic diagram of (a, b) in `s`,
    /// checked by direct bit reads with no allocation.
    pub fn matches(&self, s: &FiniteStructure, a: usize, b: usize) -> bool {
        let u = self.x.unary.len();
        let bn = self.xy.len();
        for k in 0..u {
            if s.has_unary(k, a) != self.x.unary[k] || s.has_unary(k, b) != self.y.unary[k] {
                return false;
            }
        }
        for k in 0..bn {
            if s.has_binary(k, a, a) != self.x.loops[k]
                || s.has_binary(k, b, b) != self.y.loops[k]
                || s.has_binary(k, a, b) != self.xy[k]
                || s.has_binary(k, b, a) != self.yx[k]
            {
                return false;
            }
        }
        true
    }

    /// Every binary atomic diagram over the vocabulary, sorted. There are
    /// 2^(2u + 4b) of them.
    pub fn enumerate(vocab: &Vocabulary) -> Vec<PairDiagram> {
        let uds = UnaryDiagram::enumerate(vocab);
        let mut out = Vec::new();
        for x in &uds {
            for y in &uds {
                for d in Self::enumerate_between(vocab, x, y) {
                    out.push(d);
                }
            }
        }
        out.sort();
        out
    }

    /// Every diagram with the given one-variable parts: all 2^(2b) choices
    /// of cross atoms.
    pub fn enumerate_between(
        vocab: &Vocabulary,
        x: &UnaryDiagram,
        y: &UnaryDiagram,
    ) -> Vec<PairDiagram> {
        let b = vocab.binary_count();
        (0..1usize << (2 * b))
            .map(|mask| PairDiagram {
                x: x.clone(),
                y: y.clone(),
                xy: (0..b).map(|k| mask >> k & 1 == 1).collect(),
                yx: (0..b).map(|k| mask >> (b + k) & 1 == 1).collect(),
            })
            .collect()
    }

    pub(crate) fn with_appended_binary(&self, count: usize) -> PairDiagram {
        let mut xy = self.xy.clone();
        let mut yx = self.yx.clone();
        xy.extend(std::iter::repeat_n(false, count));
        yx.extend(std::iter::repeat_n(false, count));
        PairDiagram {
            x: self.x.with_appended_binary(count),
            y: self.y.with_appended_binary(count),
            xy,
            yx,
        }
    }

    pub(crate) fn with_cross(mut self, k: usize, xy: bool, yx: bool) -> PairDiagram {
        self.xy[k] = xy;
        self.yx[k] = yx;
        self
    }

    /// True iff the diagram's atom lists fit the vocabulary's symbol counts.
    pub fn fits(&self, vocab: &Vocabulary) -> bool {
        let u = vocab.unary_count();
        let b = vocab.binary_count();
        self.x.unary_len() == u
            && self.y.unary_len() == u
            && self.x.loops_len() == b
            && self.y.loops_len() == b
            && self.xy.len() == b
            && self.yx.len() == b
    }
}

/// Fluent construction of a diagram by symbol name. Setters panic on
/// unknown names or wrong arities; this is a fixture-building helper, not a
/// parsing boundary.
pub struct PairDiagramBuilder<'v> {
    vocab: &'v Vocabulary,
    d: PairDiagram,
}

impl<'v> PairDiagramBuilder<'v> {
    pub fn new(vocab: &'v Vocabulary) -> Self {
        PairDiagramBuilder { vocab, d: PairDiagram::all_false(vocab) }
    }

    fn unary_idx(&self, name: &str) -> usize {
        match self.vocab.lookup(name) {
            Some(SymbolRef { arity: Arity::Unary, index }) => index,
            _ => panic!("no unary symbol named {name:?}"),
        }
    }

    fn binary_idx(&self, name: &str) -> usize {
        match self.vocab.lookup(name) {
            Some(SymbolRef { arity: Arity::Binary, index }) => index,
            _ => panic!("no binary symbol named {name:?}"),
        }
    }

    /// Set P(x), P(y) for a unary symbol.
    pub fn unary(mut self, name: &str, x: bool, y: bool) -> Self {
        let k = self.unary_idx(name);
        self.d.x.unary[k] = x;
        self.d.y.unary[k] = y;
        self
    }

    /// Set R(x,x), R(y,y) for a binary symbol.
    pub fn loops(mut self, name: &str, x: bool, y: bool) -> Self {
        let k = self.binary_idx(name);
        self.d.x.loops[k] = x;
        self.d.y.loops[k] = y;
        self
    }

    /// Set R(x,y), R(y,x) for a binary symbol.
    pub fn cross(mut self, name: &str, xy: bool, yx: bool) -> Self {
        let k = self.binary_idx(name);
        self.d.xy[k] = xy;
        self.d.yx[k] = yx;
        self
    }

    pub fn build(self) -> PairDiagram {
        self.d
    }
}

/// A labeled relational structure on universe {0..n−1}.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct FiniteStructure {
    vocab: Arc<Vocabulary>,
    size: usize,
    unary: Vec<Vec<bool>>,
    binary: Vec<Vec<bool>>,
}

impl FiniteStructure {
    /// The structure with every relation empty.
    pub fn empty(vocab: Arc<Vocabulary>, size: usize) -> Self {
        let unary = vec![vec![false; size]; vocab.unary_count()];
        let binary = vec![vec![false; size * size]; vocab.binary_count()];
        FiniteStructure { vocab, size, unary, binary }
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn vocab_arc(&self) -> Arc<Vocabulary> {
        Arc::clone(&self.vocab)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// P_k(a), by per-arity symbol index. Panics if out of range.
    pub fn has_unary(&self, k: usize, a: usize) -> bool {
        self.unary[k][a]
    }

    /// R_k(a,b), by per-arity symbol index. Panics if out of range.
    pub fn has_binary(&self, k: usize, a: usize, b: usize) -> bool {
        self.binary[k][a * self.size + b]
    }

    fn check_element(&self, a: usize) -> Result<(), StructureError> {
        if a >= self.size {
            Err(StructureError::ElementOutOfRange { element: a, size: self.size })
        } else {
            Ok(())
        }
    }

    /// The one-variable atomic diagram of `a`. Panics if out of range.
    pub fn unary_diagram(&self, a: usize) -> UnaryDiagram {
        assert!(a < self.size, "element {a} out of range");
        UnaryDiagram {
            unary: (0..self.vocab.unary_count()).map(|k| self.unary[k][a]).collect(),
            loops: (0..self.vocab.binary_count()).map(|k| self.has_binary(k, a, a)).collect(),
        }
    }

    /// The binary atomic diagram of the ordered pair (a, b), a ≠ b.
    pub fn pair_diagram(&self, a: usize, b: usize) -> Result<PairDiagram, StructureError> {
        self.check_element(a)?;
        self.check_element(b)?;
        if a == b {
            return Err(StructureError::EqualElements(a));
        }
        let b_count = self.vocab.binary_count();
        Ok(PairDiagram {
            x: self.unary_diagram(a),
            y: self.unary_diagram(b),
            xy: (0..b_count).map(|k| self.has_binary(k, a, b)).collect(),
            yx: (0..b_count).map(|k| self.has_binary(k, b, a)).collect(),
        })
    }
}

/// Mutable staging area for a structure; `finish` freezes it.
pub struct StructureBuilder {
    s: FiniteStructure,
}

impl StructureBuilder {
    pub fn new(vocab: Arc<Vocabulary>, size: usize) -> Self {
        StructureBuilder { s: FiniteStructure::empty(vocab, size) }
    }

    pub fn set_unary(&mut self, k: usize, a: usize, v: bool) -> &mut Self {
        self.s.unary[k][a] = v;
        self
    }

    pub fn set_binary(&mut self, k: usize, a: usize, b: usize, v: bool) -> &mut Self {
        let n = self.s.size;
        self.s.binary[k][a * n + b] = v;
        self
    }

    /// Set a relation by name; panics on unknown name or wrong arity.
    pub fn set(&mut self, name: &str, elements: &[usize]) -> &mut Self {
        match (self.s.vocab.lookup(name), elements) {
            (Some(SymbolRef { arity: Arity::Unary, index }), [a]) => self.set_unary(index, *a, true),
            (Some(SymbolRef { arity: Arity::Binary, index }), [a, b]) => {
                self.set_binary(index, *a, *b, true)
            }
            _ => panic!("no symbol {name:?} of arity {}", elements.len()),
        }
    }

    /// Impose a one-variable diagram on element `a`.
    pub fn apply_unary_diagram(&mut self, a: usize, d: &UnaryDiagram) -> &mut Self {
        for (k, &v) in d.unary.iter().enumerate() {
            self.set_unary(k, a, v);
        }
        for (k, &v) in d.loops.iter().enumerate() {
            self.set_binary(k, a, a, v);
        }
        self
    }

    /// Impose the cross atoms of a pair diagram with `a` as x and `b` as y.
    /// One-variable atoms are untouched.
    pub fn apply_pair_cross(&mut self, a: usize, b: usize, d: &PairDiagram) -> &mut Self {
        debug_assert_ne!(a, b);
        for (k, &v) in d.xy.iter().enumerate() {
            self.set_binary(k, a, b, v);
        }
        for (k, &v) in d.yx.iter().enumerate() {
            self.set_binary(k, b, a, v);
        }
        self
    }

    /// Impose a full pair diagram: unary parts on both endpoints plus the
    /// cross atoms.
    pub fn apply_pair(&mut self, a: usize, b: usize, d: &PairDiagram) -> &mut Self {
        self.apply_unary_diagram(a, &d.x.clone());
        self.apply_unary_diagram(b, &d.y.clone());
        self.apply_pair_cross(a, b, d)
    }

    pub fn finish(self) -> FiniteStructure {
        self.s
    }
}

/// True iff `map` is a strong (induced) embedding of `a` into `b`: an
/// injection that preserves and reflects every relation. This is the
/// substructure notion behind ages: A embeds in B iff A is isomorphic to an
/// induced substructure of B.
pub fn is_embedding(
    map: &[usize],
    a: &FiniteStructure,
    b: &FiniteStructure,
) -> Result<bool, StructureError> {
    if a.vocab != b.vocab {
        return Err(StructureError::VocabularyMismatch);
    }
    if map.len() != a.size {
        return Err(StructureError::MapSizeMismatch { expected: a.size, got: map.len() });
    }
    for &t in map {
        b.check_element(t)?;
    }
    let mut seen = vec![false; b.size];
    for &t in map {
        if seen[t] {
            return Ok(false);
        }
        seen[t] = true;
    }
    for k in 0..a.vocab.unary_count() {
        for e in 0..a.size {
            if a.has_unary(k, e) != b.has_unary(k, map[e]) {
                return Ok(false);
            }
        }
    }
    for k in 0..a.vocab.binary_count() {
        for e in 0..a.size {
            for f in 0..a.size {
                if a.has_binary(k, e, f) != b.has_binary(k, map[e], map[f]) {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

/// Filter applied during enumeration. `pair_ok` sees the full diagram of an
/// (x, y) pair with x the lower label; `unary_ok` prunes single elements,
/// which also makes the n ≤ 1 cases exact.
pub trait PairConstraint {
    fn unary_ok(&self, _d: &UnaryDiagram) -> bool {
        true
    }
    fn pair_ok(&self, d: &PairDiagram) -> bool;
}

impl<F: Fn(&PairDiagram) -> bool> PairConstraint for F {
    fn pair_ok(&self, d: &PairDiagram) -> bool {
        self(d)
    }
}

/// Lazily yields every labeled structure on {0..n−1} exactly once, filtered
/// so each element passes `unary_ok` and each pair's diagram passes
/// `pair_ok`. Unconstrained, the stream has exactly 2^(n·u + n²·b) members.
pub fn enumerate_structures<'a>(
    vocab: &Arc<Vocabulary>,
    n: usize,
    constraint: Option<&'a dyn PairConstraint>,
) -> Result<StructureEnumeration<'a>, StructureError> {
    enumerate_structures_capped(vocab, n, constraint, DEFAULT_ENUMERATION_CAP)
}

pub fn enumerate_structures_capped<'a>(
    vocab: &Arc<Vocabulary>,
    n: usize,
    constraint: Option<&'a dyn PairConstraint>,
    cap: usize,
) -> Result<StructureEnumeration<'a>, StructureError> {
    if n > cap {
        return Err(StructureError::CapExceeded { n, cap });
    }
    let mut uds = UnaryDiagram::enumerate(vocab);
    if let Some(c) = constraint {
        uds.retain(|d| c.unary_ok(d));
    }
    let pairs: Vec<(usize, usize)> =
        (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
    Ok(StructureEnumeration {
        vocab: Arc::clone(vocab),
        n,
        constraint,
        uds,
        pairs,
        unary_odometer: None,
        allowed: Vec::new(),
        pair_odometer: Vec::new(),
        started: false,
        done: false,
    })
}

pub struct StructureEnumeration<'a> {
    vocab: Arc<Vocabulary>,
    n: usize,
    constraint: Option<&'a dyn PairConstraint>,
    uds: Vec<UnaryDiagram>,
    pairs: Vec<(usize, usize)>,
    unary_odometer: Option<Vec<usize>>,
    /// Admissible diagrams per pair, for the current unary assignment.
    allowed: Vec<Vec<PairDiagram>>,
    pair_odometer: Vec<usize>,
    started: bool,
    done: bool,
}

impl StructureEnumeration<'_> {
    /// Recompute per-pair admissible diagrams for the current unary
    /// assignment. False if some pair has no admissible diagram.
    fn refresh_allowed(&mut self) -> bool {
        let combo = self.unary_odometer.as_ref().unwrap();
        self.allowed.clear();
        for &(a, b) in &self.pairs {
            let mut ds =
                PairDiagram::enumerate_between(&self.vocab, &self.uds[combo[a]], &self.uds[combo[b]]);
            if let Some(c) = self.constraint {
                ds.retain(|d| c.pair_ok(d));
            }
            if ds.is_empty() {
                return false;
            }
            self.allowed.push(ds);
        }
        self.pair_odometer = vec![0; self.pairs.len()];
        true
    }

    fn advance_unary(&mut self) -> bool {
        loop {
            let combo = match self.unary_odometer.as_mut() {
                Some(c) => c,
                None => return false,
            };
            let mut pos = 0;
            loop {
                if pos == combo.len() {
                    self.unary_odometer = None;
                    return false;
                }
                combo[pos] += 1;
                if combo[pos] < self.uds.len() {
                    break;
                }
                combo[pos] = 0;
                pos += 1;
            }
            if self.refresh_allowed() {
                return true;
            }
        }
    }

    fn emit(&self) -> FiniteStructure {
        let combo = self.unary_odometer.as_ref().unwrap();
        let mut b = StructureBuilder::new(Arc::clone(&self.vocab), self.n);
        for (e, &u) in combo.iter().enumerate() {
            b.apply_unary_diagram(e, &self.uds[u]);
        }
        for (p, &(x, y)) in self.pairs.iter().enumerate() {
            b.apply_pair_cross(x, y, &self.allowed[p][self.pair_odometer[p]]);
        }
        b.finish()
    }
}

impl Iterator for StructureEnumeration<'_> {
    type Item = FiniteStructure;

    fn next(&mut self) -> Option<FiniteStructure> {
        if self.done {
            return None;
        }
        if !self.started {
            self.started = true;
            if self.n == 0 {
                self.done = true;
                return Some(FiniteStructure::empty(Arc::clone(&self.vocab), 0));
            }
            if self.uds.is_empty() {
                self.done = true;
                return None;
            }
            self.unary_odometer = Some(vec![0; self.n]);
            if !self.refresh_allowed() && !self.advance_unary() {
                self.done = true;
                return None;
            }
        }
        let item = self.emit();
        // Advance: pair odometer first, then the unary assignment.
        let mut pos = 0;
        loop {
            if pos == self.pair_odometer.len() {
                if !self.advance_unary() {
                    self.done = true;
                }
                break;
            }
            self.pair_odometer[pos] += 1;
            if self.pair_odometer[pos] < self.allowed[pos].len() {
                break;
            }
            self.pair_odometer[pos] = 0;
            pos += 1;
        }
        Some(item)
    }
}

impl fmt::Display for FiniteStructure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "structure(n={})", self.size)?;
        for (k, sym) in self.vocab.unary.iter().enumerate() {
            let members: Vec<usize> = (0..self.size).filter(|&a| self.unary[k][a]).collect();
            write!(f, " {}={:?}", self.vocab.symbols[*sym].name, members)?;
        }
        for (k, sym) in self.vocab.binary.iter().enumerate() {
            let members: Vec<(usize, usize)> = (0..self.size)
                .flat_map(|a| (0..self.size).map(move |b| (a, b)))
                .filter(|&(a, b)| self.has_binary(k, a, b))
                .collect();
            write!(f, " {}={:?}", self.vocab.symbols[*sym].name, members)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph_vocab() -> Arc<Vocabulary> {
        Vocabulary::shared(vec![("E", Arity::Binary)]).unwrap()
    }

    fn edge_graph() -> FiniteStructure {
        // Single undirected edge on {0,1}.
        let mut b = StructureBuilder::new(graph_vocab(), 2);
        b.set("E", &[0, 1]).set("E", &[1, 0]);
        b.finish()
    }

    #[test]
    fn vocabulary_rejects_bad_names() {
        assert!(matches!(
            Vocabulary::new(vec![("1E", Arity::Binary)]),
            Err(VocabularyError::BadName(_))
        ));
        assert!(matches!(
            Vocabulary::new(vec![("E", Arity::Binary), ("E", Arity::Unary)]),
            Err(VocabularyError::DuplicateName(_))
        ));
        assert!(matches!(
            Vocabulary::new(vec![("", Arity::Unary)]),
            Err(VocabularyError::BadName(_))
        ));
    }

    #[test]
    fn pair_diagram_reads_interpretation() {
        let s = edge_graph();
        let d = s.pair_diagram(0, 1).unwrap();
        assert!(d.cross_xy(0) && d.cross_yx(0));
        assert!(!d.x().loop_at(0) && !d.y().loop_at(0));
        // Reversed orientation swaps x and y.
        assert_eq!(s.pair_diagram(1, 0).unwrap(), d.reverse());
        // The single-edge diagram is symmetric, so it is its own reverse.
        assert_eq!(d.reverse(), d);
    }

    #[test]
    fn pair_diagram_empty_relation() {
        let s = FiniteStructure::empty(graph_vocab(), 2);
        let d = s.pair_diagram(0, 1).unwrap();
        assert_eq!(d, PairDiagram::all_false(s.vocab()));
    }

    #[test]
    fn pair_diagram_errors() {
        let s = edge_graph();
        assert!(matches!(
            s.pair_diagram(0, 2),
            Err(StructureError::ElementOutOfRange { element: 2, .. })
        ));
        assert!(matches!(s.pair_diagram(1, 1), Err(StructureError::EqualElements(1))));
    }

    #[test]
    fn reverse_is_involutive_on_all_diagrams() {
        // One unary and one binary symbol: 2^(2·1 + 4·1) = 64 diagrams.
        let vocab = Vocabulary::shared(vec![("P", Arity::Unary), ("E", Arity::Binary)]).unwrap();
        let all = PairDiagram::enumerate(&vocab);
        assert_eq!(all.len(), 64);
        for d in &all {
            assert_eq!(d.reverse().reverse(), *d);
        }
    }

    #[test]
    fn pair_diagram_reverse_matches_swapped_orientation() {
        let vocab = Vocabulary::shared(vec![("P", Arity::Unary), ("E", Arity::Binary)]).unwrap();
        let mut b = StructureBuilder::new(Arc::clone(&vocab), 3);
        b.set("E", &[0, 1]).set("E", &[2, 0]).set("P", &[1]).set("E", &[2, 2]);
        let s = b.finish();
        for a in 0..3 {
            for c in 0..3 {
                if a != c {
                    let d = s.pair_diagram(a, c).unwrap();
                    assert_eq!(d.reverse(), s.pair_diagram(c, a).unwrap());
                    assert!(d.matches(&s, a, c));
                }
            }
        }
    }

    #[test]
    fn embedding_identity_and_failures() {
        let s = edge_graph();
        assert!(is_embedding(&[0, 1], &s, &s).unwrap());
        // A single vertex embeds anywhere the unary/loop atoms agree.
        let v = FiniteStructure::empty(graph_vocab(), 1);
        assert!(is_embedding(&[0], &v, &s).unwrap());
        assert!(is_embedding(&[1], &v, &s).unwrap());
        // An edge cannot map onto a non-adjacent pair.
        let mut b = StructureBuilder::new(graph_vocab(), 3);
        b.set("E", &[0, 1]).set("E", &[1, 0]);
        let t = b.finish();
        assert!(!is_embedding(&[0, 2], &s, &t).unwrap());
        // Non-injective maps are not embeddings.
        assert!(!is_embedding(&[0, 0], &s, &s).unwrap());
        let other = Vocabulary::shared(vec![("F", Arity::Binary)]).unwrap();
        let o = FiniteStructure::empty(other, 2);
        assert!(matches!(is_embedding(&[0, 1], &s, &o), Err(StructureError::VocabularyMismatch)));
    }

    #[test]
    fn embeddings_compose() {
        use rand::Rng;
        let vocab = Vocabulary::shared(vec![("P", Arity::Unary), ("E", Arity::Binary)]).unwrap();
        let mut rng = crate::rng::keyed_rng(11, 90, 0, 0);
        for _ in 0..40 {
            // Random C on 4 elements, then induced substructures B and A.
            let mut b = StructureBuilder::new(Arc::clone(&vocab), 4);
            for e in 0..4 {
                if rng.random_bool(0.5) {
                    b.set_unary(0, e, true);
                }
                for f in 0..4 {
                    if rng.random_bool(0.5) {
                        b.set_binary(0, e, f, true);
                    }
                }
            }
            let c = b.finish();
            let g: Vec<usize> = vec![0, 2, 3]; // B -> C
            let mut bb = StructureBuilder::new(Arc::clone(&vocab), 3);
            for (e, &t) in g.iter().enumerate() {
                if c.has_unary(0, t) {
                    bb.set_unary(0, e, true);
                }
                for (f, &u) in g.iter().enumerate() {
                    if c.has_binary(0, t, u) {
                        bb.set_binary(0, e, f, true);
                    }
                }
            }
            let bs = bb.finish();
            assert!(is_embedding(&g, &bs, &c).unwrap());
            let f: Vec<usize> = vec![1, 2]; // A -> B
            let mut ab = StructureBuilder::new(Arc::clone(&vocab), 2);
            for (e, &t) in f.iter().enumerate() {
                if bs.has_unary(0, t) {
                    ab.set_unary(0, e, true);
                }
                for (ff, &u) in f.iter().enumerate() {
                    if bs.has_binary(0, t, u) {
                        ab.set_binary(0, e, ff, true);
                    }
                }
            }
            let as_ = ab.finish();
            assert!(is_embedding(&f, &as_, &bs).unwrap());
            let composed: Vec<usize> = f.iter().map(|&e| g[e]).collect();
            assert!(is_embedding(&composed, &as_, &c).unwrap());
        }
    }

    #[test]
    fn enumeration_counts() {
        let vocab = graph_vocab();
        // n=2, one binary symbol: 2^(n²·b) = 16.
        let all: Vec<_> = enumerate_structures(&vocab, 2, None).unwrap().collect();
        assert_eq!(all.len(), 16);
        // Distinctness.
        for i in 0..all.len() {
            for j in i + 1..all.len() {
                assert_ne!(all[i], all[j]);
            }
        }
        // Symmetric & irreflexive leaves just edge / non-edge.
        struct SimpleGraph;
        impl PairConstraint for SimpleGraph {
            fn unary_ok(&self, d: &UnaryDiagram) -> bool {
                !d.loop_at(0)
            }
            fn pair_ok(&self, d: &PairDiagram) -> bool {
                d.cross_xy(0) == d.cross_yx(0)
            }
        }
        let simple: Vec<_> =
            enumerate_structures(&vocab, 2, Some(&SimpleGraph)).unwrap().collect();
        assert_eq!(simple.len(), 2);
    }

    #[test]
    fn enumeration_count_formula_small() {
        // 2^(n·u + n²·b) for a unary+binary vocabulary.
        let vocab = Vocabulary::shared(vec![("P", Arity::Unary), ("E", Arity::Binary)]).unwrap();
        for n in 0..=3 {
            let count = enumerate_structures(&vocab, n, None).unwrap().count();
            assert_eq!(count, 1usize << (n + n * n), "n={n}");
        }
    }

    #[test]
    fn enumeration_cap() {
        let vocab = graph_vocab();
        assert!(matches!(
            enumerate_structures(&vocab, 8, None),
            Err(StructureError::CapExceeded { n: 8, cap: 7 })
        ));
        assert!(enumerate_structures_capped(&vocab, 8, None, 8).is_ok());
    }
}
