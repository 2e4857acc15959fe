//! Expansion by imaginary elements: adjoin one fresh element per block of
//! each definable equivalence relation, linked to its members by a fresh
//! binary symbol, with a unary symbol marking the original (home) sort.
//!
//! For relations E given as formulas with free variables x, y the expanded
//! vocabulary gains `Peq` (home sort), and per relation `R_<name>` (binary,
//! element-to-block) and `P_<name>` (unary, the block markers). If any
//! given formula fails to be an equivalence relation on the structure, the
//! whole expansion falls back to interpreting every new symbol as empty —
//! one bad relation empties them all, not just its own.

use crate::logic::{definable_partition, DefinablePartition, Formula, PartitionError};
use crate::structure::{Arity, FiniteStructure, StructureBuilder, Vocabulary};
use std::collections::BTreeSet;
use std::sync::Arc;
use thiserror::Error;

/// Name of the home-sort marker in expanded vocabularies.
pub const HOME_SORT_SYMBOL: &str = "Peq";

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum MeqError {
    #[error("relation {name:?} must have free variables exactly {{x, y}}, found {found:?}")]
    FreeVars { name: String, found: BTreeSet<String> },
    #[error("relation name {0:?} is not a valid identifier")]
    BadRelName(String),
    #[error("duplicate relation name {0:?}")]
    DuplicateRelName(String),
    #[error("expansion symbol {0:?} collides with the structure's vocabulary")]
    NameClash(String),
    #[error(transparent)]
    Eval(#[from] crate::logic::EvalError),
}

/// Where an element of the expansion lives.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Sort {
    Home,
    /// Block `block` (0-based, blocks ordered by least member) of the
    /// `rel`-th given relation.
    Imaginary { rel: usize, block: usize },
}

/// A structure together with its expansion by imaginaries.
#[derive(Clone, Debug)]
pub struct ExpandedStructure {
    pub base: FiniteStructure,
    pub expansion: FiniteStructure,
    /// Sort of each expansion element; home elements keep their labels,
    /// imaginaries follow with labels n, n+1, ...
    pub sorts: Vec<Sort>,
    pub rel_names: Vec<String>,
    /// True when some relation was not an equivalence relation and every
    /// new symbol was interpreted as empty.
    pub fallback: bool,
}

fn is_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic())
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Build the expanded vocabulary: the base symbols, then `Peq`, then
/// `R_<name>`/`P_<name>` per relation in the given order.
fn expanded_vocabulary(
    base: &Vocabulary,
    rel_names: &[String],
) -> Result<Arc<Vocabulary>, MeqError> {
    let mut names: Vec<(String, Arity)> =
        base.symbols().iter().map(|s| (s.name.clone(), s.arity)).collect();
    let mut add = |name: String, arity: Arity| -> Result<(), MeqError> {
        if base.lookup(&name).is_some() || names.iter().any(|(n, _)| *n == name) {
            return Err(MeqError::NameClash(name));
        }
        names.push((name, arity));
        Ok(())
    };
    add(HOME_SORT_SYMBOL.to_string(), Arity::Unary)?;
    for name in rel_names {
        add(format!("R_{name}"), Arity::Binary)?;
        add(format!("P_{name}"), Arity::Unary)?;
    }
    Ok(Arc::new(Vocabulary::new(names).expect("validated identifiers")))
}

/// Expand `s` by the given named equivalence-relation formulas (free
/// variables exactly x, y). Home elements keep their labels and their
/// relations; each genuine equivalence relation contributes one imaginary
/// per block; a single non-equivalence formula empties every new symbol.
pub fn expand(s: &FiniteStructure, rels: &[(String, Formula)]) -> Result<ExpandedStructure, MeqError> {
    let mut seen = BTreeSet::new();
    for (name, f) in rels {
        if !is_identifier(name) {
            return Err(MeqError::BadRelName(name.clone()));
        }
        if !seen.insert(name.clone()) {
            return Err(MeqError::DuplicateRelName(name.clone()));
        }
        let fv = f.free_vars();
        let expected: BTreeSet<String> = ["x".to_string(), "y".to_string()].into_iter().collect();
        if fv != expected {
            return Err(MeqError::FreeVars { name: name.clone(), found: fv });
        }
    }
    let rel_names: Vec<String> = rels.iter().map(|(n, _)| n.clone()).collect();
    let vocab = expanded_vocabulary(s.vocab(), &rel_names)?;
    let n = s.size();

    let mut partitions: Vec<Vec<Vec<usize>>> = Vec::with_capacity(rels.len());
    let mut fallback = false;
    for (_, f) in rels {
        match definable_partition(s, f) {
            Ok(DefinablePartition::Partition(blocks)) => partitions.push(blocks),
            Ok(DefinablePartition::NotEquivalence(_)) => {
                fallback = true;
                break;
            }
            Err(PartitionError::Eval(e)) => return Err(MeqError::Eval(e)),
            Err(PartitionError::FreeVars(found)) => {
                // Unreachable: free variables were checked above.
                return Err(MeqError::FreeVars { name: String::new(), found });
            }
        }
    }

    let copy_base = |b: &mut StructureBuilder| {
        for k in 0..s.vocab().unary_count() {
            let idx = vocab.lookup(s.vocab().unary_name(k)).unwrap().index;
            for e in 0..n {
                if s.has_unary(k, e) {
                    b.set_unary(idx, e, true);
                }
            }
        }
        for k in 0..s.vocab().binary_count() {
            let idx = vocab.lookup(s.vocab().binary_name(k)).unwrap().index;
            for e in 0..n {
                for f in 0..n {
                    if s.has_binary(k, e, f) {
                        b.set_binary(idx, e, f, true);
                    }
                }
            }
        }
    };

    if fallback {
        let mut b = StructureBuilder::new(Arc::clone(&vocab), n);
        copy_base(&mut b);
        return Ok(ExpandedStructure {
            base: s.clone(),
            expansion: b.finish(),
            sorts: vec![Sort::Home; n],
            rel_names,
            fallback: true,
        });
    }

    let total = n + partitions.iter().map(|p| p.len()).sum::<usize>();
    let mut b = StructureBuilder::new(Arc::clone(&vocab), total);
    copy_base(&mut b);
    let peq = vocab.lookup(HOME_SORT_SYMBOL).unwrap().index;
    for e in 0..n {
        b.set_unary(peq, e, true);
    }
    let mut sorts = vec![Sort::Home; n];
    let mut next = n;
    for (r, blocks) in partitions.iter().enumerate() {
        let r_idx = vocab.lookup(&format!("R_{}", rel_names[r])).unwrap().index;
        let p_idx = vocab.lookup(&format!("P_{}", rel_names[r])).unwrap().index;
        for (block_no, block) in blocks.iter().enumerate() {
            let img = next;
            next += 1;
            sorts.push(Sort::Imaginary { rel: r, block: block_no });
            b.set_unary(p_idx, img, true);
            for &member in block {
                b.set_binary(r_idx, member, img, true);
            }
        }
    }
    Ok(ExpandedStructure {
        base: s.clone(),
        expansion: b.finish(),
        sorts,
        rel_names,
        fallback: false,
    })
}

impl ExpandedStructure {
    /// Block sizes of one relation's imaginaries, read back off the
    /// expansion's element-to-block symbol.
    pub fn block_census(&self, rel: usize) -> Vec<usize> {
        let vocab = self.expansion.vocab();
        let r_idx = vocab.lookup(&format!("R_{}", self.rel_names[rel])).unwrap().index;
        let n = self.base.size();
        self.sorts
            .iter()
            .enumerate()
            .filter(|(_, sort)| matches!(sort, Sort::Imaginary { rel: r, .. } if *r == rel))
            .map(|(img, _)| (0..n).filter(|&e| self.expansion.has_binary(r_idx, e, img)).count())
            .collect()
    }
}

/// Guard every quantifier with the home-sort marker: universal quantifiers
/// get an implication, existential and counting quantifiers a conjunction.
/// Atoms are untouched, so quantifier-free formulas come back unchanged.
pub fn relativize(f: &Formula) -> Formula {
    match f {
        Formula::Atom { .. } | Formula::Equals(..) => f.clone(),
        Formula::Not(g) => Formula::not(relativize(g)),
        Formula::And(a, b) => Formula::and(relativize(a), relativize(b)),
        Formula::Or(a, b) => Formula::or(relativize(a), relativize(b)),
        Formula::Implies(a, b) => Formula::implies(relativize(a), relativize(b)),
        Formula::Iff(a, b) => Formula::iff(relativize(a), relativize(b)),
        Formula::Forall(v, g) => Formula::forall(
            v.clone(),
            Formula::implies(Formula::atom(HOME_SORT_SYMBOL, &[v]), relativize(g)),
        ),
        Formula::Exists(v, g) => Formula::exists(
            v.clone(),
            Formula::and(Formula::atom(HOME_SORT_SYMBOL, &[v]), relativize(g)),
        ),
        Formula::ExistsExactly(k, v, g) => Formula::ExistsExactly(
            *k,
            v.clone(),
            Box::new(Formula::and(Formula::atom(HOME_SORT_SYMBOL, &[v]), relativize(g))),
        ),
    }
}
