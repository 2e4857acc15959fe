//! Shared fixtures and oracles for the integration suites.
// Each test target compiles its own copy; not every target uses every item.
#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;
use std::sync::Arc;
use zeroone::delta::DeltaSystem;
use zeroone::logic::Formula;
use zeroone::structure::{
    Arity, FiniteStructure, PairConstraint, PairDiagram, PairDiagramBuilder, StructureBuilder,
    UnaryDiagram, Vocabulary,
};

/// One class over {Q, E}: edge and non-edge.
pub fn rg_system() -> DeltaSystem {
    let vocab = Vocabulary::shared(vec![("Q", Arity::Binary), ("E", Arity::Binary)]).unwrap();
    let edge = PairDiagramBuilder::new(&vocab)
        .loops("Q", true, true)
        .cross("Q", true, true)
        .cross("E", true, true)
        .build();
    let nonedge =
        PairDiagramBuilder::new(&vocab).loops("Q", true, true).cross("Q", true, true).build();
    DeltaSystem::from_upper(vocab, "Q", 1, 0, vec![((0, 0), vec![edge, nonedge])]).unwrap()
}

/// Two unbounded classes: four symmetric choices inside the first (two
/// irreflexive symmetric relations), two inside the second, one across;
/// the second class is marked by P.
pub fn two_part_system() -> DeltaSystem {
    let vocab = Vocabulary::shared(vec![
        ("Q", Arity::Binary),
        ("E1", Arity::Binary),
        ("E2", Arity::Binary),
        ("P", Arity::Unary),
    ])
    .unwrap();
    let mut cell11 = Vec::new();
    for e1 in [false, true] {
        for e2 in [false, true] {
            cell11.push(
                PairDiagramBuilder::new(&vocab)
                    .loops("Q", true, true)
                    .cross("Q", true, true)
                    .cross("E1", e1, e1)
                    .cross("E2", e2, e2)
                    .build(),
            );
        }
    }
    let mut cell22 = Vec::new();
    for e1 in [false, true] {
        cell22.push(
            PairDiagramBuilder::new(&vocab)
                .loops("Q", true, true)
                .cross("Q", true, true)
                .cross("E1", e1, e1)
                .unary("P", true, true)
                .build(),
        );
    }
    let cell12 = vec![PairDiagramBuilder::new(&vocab)
        .loops("Q", true, true)
        .unary("P", false, true)
        .build()];
    DeltaSystem::from_upper(
        vocab,
        "Q",
        2,
        0,
        vec![((0, 0), cell11), ((0, 1), cell12), ((1, 1), cell22)],
    )
    .unwrap()
}

/// All-singleton system with l classes (t of them base), classes separated
/// by unary marks M1..M_{l-1}.
pub fn singleton_system(l: usize, t: usize) -> DeltaSystem {
    let mut symbols: Vec<(String, Arity)> = vec![("Q".to_string(), Arity::Binary)];
    for i in 1..l {
        symbols.push((format!("M{i}"), Arity::Unary));
    }
    let vocab = Arc::new(Vocabulary::new(symbols).unwrap());
    let mut upper = Vec::new();
    for i in 0..l {
        for j in i..l {
            let mut b = PairDiagramBuilder::new(&vocab).loops("Q", true, true);
            if i == j {
                b = b.cross("Q", true, true);
            }
            for m in 1..l {
                b = b.unary(&format!("M{m}"), i == m, j == m);
            }
            upper.push(((i, j), vec![b.build()]));
        }
    }
    DeltaSystem::from_upper(vocab, "Q", l, t, upper).unwrap()
}

/// Membership constraint for the age of a unary-separated system, suitable
/// for the exhaustive enumerator: an element's unary diagram must match
/// some class, and a pair's diagram must sit in the cell of the endpoint
/// classes (with base classes never repeated).
pub struct AgeConstraint<'a> {
    pub ds: &'a DeltaSystem,
}

impl AgeConstraint<'_> {
    fn class_of(&self, d: &UnaryDiagram) -> Option<usize> {
        (0..self.ds.num_classes()).find(|&c| self.ds.row_unary(c) == d)
    }
}

impl PairConstraint for AgeConstraint<'_> {
    fn unary_ok(&self, d: &UnaryDiagram) -> bool {
        self.class_of(d).is_some()
    }

    fn pair_ok(&self, d: &PairDiagram) -> bool {
        let (Some(i), Some(j)) = (self.class_of(d.x()), self.class_of(d.y())) else {
            return false;
        };
        if i == j && self.ds.is_base(i) {
            return false;
        }
        self.ds.cell_index_of(i, j, d).is_some()
    }
}

/// A uniformly random structure over the vocabulary: every atom is an
/// independent coin flip.
pub fn random_structure(vocab: &Arc<Vocabulary>, n: usize, rng: &mut ChaCha8Rng) -> FiniteStructure {
    let mut b = StructureBuilder::new(Arc::clone(vocab), n);
    for k in 0..vocab.unary_count() {
        for e in 0..n {
            if rng.random_bool(0.5) {
                b.set_unary(k, e, true);
            }
        }
    }
    for k in 0..vocab.binary_count() {
        for e in 0..n {
            for f in 0..n {
                if rng.random_bool(0.5) {
                    b.set_binary(k, e, f, true);
                }
            }
        }
    }
    b.finish()
}

const VAR_POOL: [&str; 4] = ["x", "y", "z", "w"];

/// A random formula of bounded quantifier depth. With no variables in
/// scope the generator is forced into a quantifier, so closed formulas
/// come out of `scope = 0`.
pub fn random_formula(vocab: &Vocabulary, depth: usize, scope: usize, rng: &mut ChaCha8Rng) -> Formula {
    let leaf_only = depth == 0;
    if scope == 0 || (!leaf_only && rng.random_bool(0.35)) {
        // Quantifier node (forced when nothing is in scope).
        if depth == 0 || scope >= VAR_POOL.len() {
            // Cannot quantify deeper; fall back to a leaf if possible.
            if scope > 0 {
                return random_leaf(vocab, scope, rng);
            }
        }
        let var = VAR_POOL[scope];
        let body = random_formula(vocab, depth.saturating_sub(1), scope + 1, rng);
        return match rng.random_range(0..4u8) {
            0 => Formula::forall(var, body),
            1 | 2 => Formula::exists(var, body),
            _ => Formula::ExistsExactly(rng.random_range(0..3usize), var.into(), Box::new(body)),
        };
    }
    if leaf_only || rng.random_bool(0.4) {
        return random_leaf(vocab, scope, rng);
    }
    match rng.random_range(0..5u8) {
        0 => Formula::not(random_formula(vocab, depth, scope, rng)),
        1 => Formula::and(
            random_formula(vocab, depth, scope, rng),
            random_formula(vocab, depth, scope, rng),
        ),
        2 => Formula::or(
            random_formula(vocab, depth, scope, rng),
            random_formula(vocab, depth, scope, rng),
        ),
        3 => Formula::implies(
            random_formula(vocab, depth, scope, rng),
            random_formula(vocab, depth, scope, rng),
        ),
        _ => Formula::iff(
            random_formula(vocab, depth, scope, rng),
            random_formula(vocab, depth, scope, rng),
        ),
    }
}

fn random_leaf(vocab: &Vocabulary, scope: usize, rng: &mut ChaCha8Rng) -> Formula {
    let pick = |rng: &mut ChaCha8Rng| VAR_POOL[rng.random_range(0..scope)];
    let symbols = vocab.symbols();
    if !symbols.is_empty() && rng.random_bool(0.75) {
        let sym = &symbols[rng.random_range(0..symbols.len())];
        let vars: Vec<&str> = match sym.arity {
            Arity::Unary => vec![pick(rng)],
            Arity::Binary => vec![pick(rng), pick(rng)],
        };
        Formula::atom(sym.name.clone(), &vars)
    } else {
        Formula::equals(pick(rng), pick(rng))
    }
}

/// Independent truth oracle: expand every quantifier into an explicit
/// boolean combination over the universe (element i named `el{i}`), then
/// evaluate the resulting quantifier-free formula with a minimal
/// evaluator that never touches the main quantifier machinery.
pub fn oracle_evaluate(s: &FiniteStructure, f: &Formula) -> bool {
    assert!(s.size() >= 1, "oracle expansion names elements");
    let expanded = expand_quantifiers(f, s.size());
    let env: HashMap<String, usize> = (0..s.size()).map(|e| (format!("el{e}"), e)).collect();
    eval_quantifier_free(s, &expanded, &env)
}

fn substitute(f: &Formula, from: &str, to: &str) -> Formula {
    let sub_var = |v: &String| if v == from { to.to_string() } else { v.clone() };
    match f {
        Formula::Atom { symbol, vars } => {
            Formula::Atom { symbol: symbol.clone(), vars: vars.iter().map(sub_var).collect() }
        }
        Formula::Equals(a, b) => Formula::Equals(sub_var(a), sub_var(b)),
        Formula::Not(g) => Formula::not(substitute(g, from, to)),
        Formula::And(a, b) => Formula::and(substitute(a, from, to), substitute(b, from, to)),
        Formula::Or(a, b) => Formula::or(substitute(a, from, to), substitute(b, from, to)),
        Formula::Implies(a, b) => {
            Formula::implies(substitute(a, from, to), substitute(b, from, to))
        }
        Formula::Iff(a, b) => Formula::iff(substitute(a, from, to), substitute(b, from, to)),
        Formula::Forall(v, g) if v != from => {
            Formula::forall(v.clone(), substitute(g, from, to))
        }
        Formula::Exists(v, g) if v != from => {
            Formula::exists(v.clone(), substitute(g, from, to))
        }
        Formula::ExistsExactly(k, v, g) if v != from => {
            Formula::ExistsExactly(*k, v.clone(), Box::new(substitute(g, from, to)))
        }
        // The variable is shadowed below this binder.
        other => other.clone(),
    }
}

fn truth(n: usize, value: bool) -> Formula {
    assert!(n >= 1);
    let f = Formula::equals("el0", "el0");
    if value {
        f
    } else {
        Formula::not(f)
    }
}

fn any_of(n: usize, mut parts: Vec<Formula>) -> Formula {
    match parts.len() {
        0 => truth(n, false),
        _ => {
            let first = parts.remove(0);
            parts.into_iter().fold(first, Formula::or)
        }
    }
}

fn all_of(n: usize, mut parts: Vec<Formula>) -> Formula {
    match parts.len() {
        0 => truth(n, true),
        _ => {
            let first = parts.remove(0);
            parts.into_iter().fold(first, Formula::and)
        }
    }
}

fn expand_quantifiers(f: &Formula, n: usize) -> Formula {
    match f {
        Formula::Atom { .. } | Formula::Equals(..) => f.clone(),
        Formula::Not(g) => Formula::not(expand_quantifiers(g, n)),
        Formula::And(a, b) => {
            Formula::and(expand_quantifiers(a, n), expand_quantifiers(b, n))
        }
        Formula::Or(a, b) => Formula::or(expand_quantifiers(a, n), expand_quantifiers(b, n)),
        Formula::Implies(a, b) => {
            Formula::implies(expand_quantifiers(a, n), expand_quantifiers(b, n))
        }
        Formula::Iff(a, b) => Formula::iff(expand_quantifiers(a, n), expand_quantifiers(b, n)),
        Formula::Forall(v, g) => all_of(
            n,
            (0..n)
                .map(|e| expand_quantifiers(&substitute(g, v, &format!("el{e}")), n))
                .collect(),
        ),
        Formula::Exists(v, g) => any_of(
            n,
            (0..n)
                .map(|e| expand_quantifiers(&substitute(g, v, &format!("el{e}")), n))
                .collect(),
        ),
        Formula::ExistsExactly(k, v, g) => {
            // Explicit disjunction over all k-subsets of the universe:
            // the instances in the subset hold, the rest fail.
            let instances: Vec<Formula> = (0..n)
                .map(|e| expand_quantifiers(&substitute(g, v, &format!("el{e}")), n))
                .collect();
            let mut cases = Vec::new();
            for mask in 0..(1usize << n) {
                if mask.count_ones() as usize != *k {
                    continue;
                }
                let parts: Vec<Formula> = (0..n)
                    .map(|e| {
                        if mask >> e & 1 == 1 {
                            instances[e].clone()
                        } else {
                            Formula::not(instances[e].clone())
                        }
                    })
                    .collect();
                cases.push(all_of(n, parts));
            }
            any_of(n, cases)
        }
    }
}

fn eval_quantifier_free(s: &FiniteStructure, f: &Formula, env: &HashMap<String, usize>) -> bool {
    match f {
        Formula::Atom { symbol, vars } => {
            let sym = s.vocab().lookup(symbol).expect("validated symbol");
            let el = |v: &String| env[v];
            match (sym.arity, vars.as_slice()) {
                (Arity::Unary, [v]) => s.has_unary(sym.index, el(v)),
                (Arity::Binary, [v, w]) => s.has_binary(sym.index, el(v), el(w)),
                _ => unreachable!("arity checked"),
            }
        }
        Formula::Equals(a, b) => env[a] == env[b],
        Formula::Not(g) => !eval_quantifier_free(s, g, env),
        Formula::And(a, b) => {
            eval_quantifier_free(s, a, env) && eval_quantifier_free(s, b, env)
        }
        Formula::Or(a, b) => eval_quantifier_free(s, a, env) || eval_quantifier_free(s, b, env),
        Formula::Implies(a, b) => {
            !eval_quantifier_free(s, a, env) || eval_quantifier_free(s, b, env)
        }
        Formula::Iff(a, b) => {
            eval_quantifier_free(s, a, env) == eval_quantifier_free(s, b, env)
        }
        _ => panic!("quantifier survived expansion"),
    }
}
