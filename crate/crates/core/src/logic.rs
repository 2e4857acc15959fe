//! First-order formulas over a relational vocabulary: parsing, printing,
//! and evaluation on finite structures.
//!
//! Evaluation is naive recursion over the AST — O(n^depth) — which is the
//! right trade at desk scale (depth ≤ 4, n ≤ 512): the code is auditable
//! and there is no cache to invalidate. Counting quantifiers
//! (`exists^=k x. φ`) are first-class AST nodes rather than sugar because
//! expanding them into pure first-order logic blows up formula size.

use crate::structure::{Arity, FiniteStructure, SymbolRef, Vocabulary};
use std::collections::{BTreeSet, HashMap};
use std::fmt;
use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unknown symbol {name:?}")]
    UnknownSymbol { name: String, pos: Option<usize> },
    #[error("symbol {name:?} has arity {expected}, used with {got} arguments")]
    ArityMismatch { name: String, expected: usize, got: usize, pos: Option<usize> },
}

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum EvalError {
    #[error("unbound variable {0:?}")]
    UnboundVariable(String),
    #[error("environment maps {var:?} to {element}, outside universe of size {size}")]
    ElementOutOfRange { var: String, element: usize, size: usize },
    #[error("unknown symbol {0:?}")]
    UnknownSymbol(String),
    #[error("symbol {0:?} used with the wrong arity")]
    ArityMismatch(String),
}

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum PartitionError {
    #[error("formula must have free variables exactly {{x, y}}, found {0:?}")]
    FreeVars(BTreeSet<String>),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// First-order formula AST. Atoms refer to vocabulary symbols by name and
/// are validated at parse time; `validate` re-checks constructed ASTs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Formula {
    Atom { symbol: String, vars: Vec<String> },
    Equals(String, String),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    Iff(Box<Formula>, Box<Formula>),
    Forall(String, Box<Formula>),
    Exists(String, Box<Formula>),
    /// True iff exactly `count` witnesses satisfy the body.
    ExistsExactly(usize, String, Box<Formula>),
}

impl Formula {
    pub fn atom(symbol: impl Into<String>, vars: &[&str]) -> Formula {
        Formula::Atom {
            symbol: symbol.into(),
            vars: vars.iter().map(|v| v.to_string()).collect(),
        }
    }

    pub fn equals(a: impl Into<String>, b: impl Into<String>) -> Formula {
        Formula::Equals(a.into(), b.into())
    }

    #[allow(clippy::should_implement_trait)] // constructor, not an operator
    pub fn not(f: Formula) -> Formula {
        Formula::Not(Box::new(f))
    }

    pub fn and(a: Formula, b: Formula) -> Formula {
        Formula::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Formula, b: Formula) -> Formula {
        Formula::Or(Box::new(a), Box::new(b))
    }

    pub fn implies(a: Formula, b: Formula) -> Formula {
        Formula::Implies(Box::new(a), Box::new(b))
    }

    pub fn iff(a: Formula, b: Formula) -> Formula {
        Formula::Iff(Box::new(a), Box::new(b))
    }

    pub fn forall(v: impl Into<String>, f: Formula) -> Formula {
        Formula::Forall(v.into(), Box::new(f))
    }

    pub fn exists(v: impl Into<String>, f: Formula) -> Formula {
        Formula::Exists(v.into(), Box::new(f))
    }

    /// Conjunction of a list; `true` is represented as `x = x` being absent,
    /// so the list must be non-empty.
    pub fn conjunction(mut parts: Vec<Formula>) -> Formula {
        let first = parts.remove(0);
        parts.into_iter().fold(first, Formula::and)
    }

    pub fn free_vars(&self) -> BTreeSet<String> {
        match self {
            Formula::Atom { vars, .. } => vars.iter().cloned().collect(),
            Formula::Equals(a, b) => [a.clone(), b.clone()].into_iter().collect(),
            Formula::Not(f) => f.free_vars(),
            Formula::And(a, b)
            | Formula::Or(a, b)
            | Formula::Implies(a, b)
            | Formula::Iff(a, b) => {
                let mut s = a.free_vars();
                s.extend(b.free_vars());
                s
            }
            Formula::Forall(v, f) | Formula::Exists(v, f) | Formula::ExistsExactly(_, v, f) => {
                let mut s = f.free_vars();
                s.remove(v);
                s
            }
        }
    }

    pub fn is_sentence(&self) -> bool {
        self.free_vars().is_empty()
    }

    pub fn quantifier_depth(&self) -> usize {
        match self {
            Formula::Atom { .. } | Formula::Equals(..) => 0,
            Formula::Not(f) => f.quantifier_depth(),
            Formula::And(a, b)
            | Formula::Or(a, b)
            | Formula::Implies(a, b)
            | Formula::Iff(a, b) => a.quantifier_depth().max(b.quantifier_depth()),
            Formula::Forall(_, f) | Formula::Exists(_, f) | Formula::ExistsExactly(_, _, f) => {
                1 + f.quantifier_depth()
            }
        }
    }

    /// Check every atom against the vocabulary.
    pub fn validate(&self, vocab: &Vocabulary) -> Result<(), ParseError> {
        match self {
            Formula::Atom { symbol, vars } => match vocab.lookup(symbol) {
                None => Err(ParseError::UnknownSymbol { name: symbol.clone(), pos: None }),
                Some(SymbolRef { arity, .. }) => {
                    let expected = match arity {
                        Arity::Unary => 1,
                        Arity::Binary => 2,
                    };
                    if vars.len() != expected {
                        Err(ParseError::ArityMismatch {
                            name: symbol.clone(),
                            expected,
                            got: vars.len(),
                            pos: None,
                        })
                    } else {
                        Ok(())
                    }
                }
            },
            Formula::Equals(..) => Ok(()),
            Formula::Not(f) => f.validate(vocab),
            Formula::And(a, b)
            | Formula::Or(a, b)
            | Formula::Implies(a, b)
            | Formula::Iff(a, b) => {
                a.validate(vocab)?;
                b.validate(vocab)
            }
            Formula::Forall(_, f) | Formula::Exists(_, f) | Formula::ExistsExactly(_, _, f) => {
                f.validate(vocab)
            }
        }
    }
}

// Precedence levels for printing: quantifiers bind loosest (their body
// extends as far right as possible), then <->, ->, |, &, ~.
fn precedence(f: &Formula) -> u8 {
    match f {
        Formula::Forall(..) | Formula::Exists(..) | Formula::ExistsExactly(..) => 1,
        Formula::Iff(..) => 2,
        Formula::Implies(..) => 3,
        Formula::Or(..) => 4,
        Formula::And(..) => 5,
        Formula::Not(..) => 6,
        Formula::Atom { .. } | Formula::Equals(..) => 7,
    }
}

fn fmt_at(f: &Formula, min: u8, out: &mut fmt::Formatter<'_>) -> fmt::Result {
    let p = precedence(f);
    let parens = p < min;
    if parens {
        write!(out, "(")?;
    }
    match f {
        Formula::Atom { symbol, vars } => write!(out, "{}({})", symbol, vars.join(","))?,
        Formula::Equals(a, b) => write!(out, "{a}={b}")?,
        Formula::Not(g) => {
            write!(out, "~")?;
            fmt_at(g, 6, out)?;
        }
        Formula::And(a, b) => {
            fmt_at(a, 5, out)?;
            write!(out, " & ")?;
            fmt_at(b, 6, out)?;
        }
        Formula::Or(a, b) => {
            fmt_at(a, 4, out)?;
            write!(out, " | ")?;
            fmt_at(b, 5, out)?;
        }
        Formula::Implies(a, b) => {
            fmt_at(a, 4, out)?;
            write!(out, " -> ")?;
            fmt_at(b, 3, out)?;
        }
        Formula::Iff(a, b) => {
            fmt_at(a, 3, out)?;
            write!(out, " <-> ")?;
            fmt_at(b, 2, out)?;
        }
        Formula::Forall(v, g) => {
            write!(out, "forall {v}. ")?;
            fmt_at(g, 1, out)?;
        }
        Formula::Exists(v, g) => {
            write!(out, "exists {v}. ")?;
            fmt_at(g, 1, out)?;
        }
        Formula::ExistsExactly(k, v, g) => {
            write!(out, "exists^={k} {v}. ")?;
            fmt_at(g, 1, out)?;
        }
    }
    if parens {
        write!(out, ")")?;
    }
    Ok(())
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_at(self, 0, f)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Int(usize),
    LPar,
    RPar,
    Comma,
    Dot,
    Eq,
    Tilde,
    Amp,
    Pipe,
    Arrow,
    DArrow,
    HatEq,
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            ' ' | '\t' | '\n' | '\r' => i += 1,
            '(' => {
                out.push((Tok::LPar, i));
                i += 1;
            }
            ')' => {
                out.push((Tok::RPar, i));
                i += 1;
            }
            ',' => {
                out.push((Tok::Comma, i));
                i += 1;
            }
            '.' => {
                out.push((Tok::Dot, i));
                i += 1;
            }
            '=' => {
                out.push((Tok::Eq, i));
                i += 1;
            }
            '~' => {
                out.push((Tok::Tilde, i));
                i += 1;
            }
            '&' => {
                out.push((Tok::Amp, i));
                i += 1;
            }
            '|' => {
                out.push((Tok::Pipe, i));
                i += 1;
            }
            '^' => {
                if bytes.get(i + 1) == Some(&b'=') {
                    out.push((Tok::HatEq, i));
                    i += 2;
                } else {
                    return Err(ParseError::Syntax { pos: i, msg: "expected ^=".into() });
                }
            }
            '-' => {
                if bytes.get(i + 1) == Some(&b'>') {
                    out.push((Tok::Arrow, i));
                    i += 2;
                } else {
                    return Err(ParseError::Syntax { pos: i, msg: "expected ->".into() });
                }
            }
            '<' => {
                if bytes.get(i + 1) == Some(&b'-') && bytes.get(i + 2) == Some(&b'>') {
                    out.push((Tok::DArrow, i));
                    i += 3;
                } else {
                    return Err(ParseError::Syntax { pos: i, msg: "expected <->".into() });
                }
            }
            c if c.is_ascii_digit() => {
                let start = i;
                while i < bytes.len() && (bytes[i] as char).is_ascii_digit() {
                    i += 1;
                }
                let n: usize = text[start..i]
                    .parse()
                    .map_err(|_| ParseError::Syntax { pos: start, msg: "bad integer".into() })?;
                out.push((Tok::Int(n), start));
            }
            c if c.is_ascii_alphabetic() => {
                let start = i;
                while i < bytes.len()
                    && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'_')
                {
                    i += 1;
                }
                out.push((Tok::Ident(text[start..i].to_string()), start));
            }
            _ => {
                return Err(ParseError::Syntax { pos: i, msg: format!("unexpected char {c:?}") })
            }
        }
    }
    Ok(out)
}

struct Parser<'v> {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    vocab: &'v Vocabulary,
    end: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn here(&self) -> usize {
        self.toks.get(self.pos).map(|&(_, p)| p).unwrap_or(self.end)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(t, _)| t.clone());
        self.pos += 1;
        t
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), ParseError> {
        let pos = self.here();
        match self.bump() {
            Some(t) if t == want => Ok(()),
            _ => Err(ParseError::Syntax { pos, msg: format!("expected {what}") }),
        }
    }

    fn ident(&mut self, what: &str) -> Result<(String, usize), ParseError> {
        let pos = self.here();
        match self.bump() {
            Some(Tok::Ident(s)) => Ok((s, pos)),
            _ => Err(ParseError::Syntax { pos, msg: format!("expected {what}") }),
        }
    }

    // formula := iff, with quantifier bodies extending maximally right.
    fn formula(&mut self) -> Result<Formula, ParseError> {
        self.iff()
    }

    fn iff(&mut self) -> Result<Formula, ParseError> {
        let lhs = self.implies()?;
        if self.peek() == Some(&Tok::DArrow) {
            self.bump();
            let rhs = self.iff()?;
            Ok(Formula::iff(lhs, rhs))
        } else {
            Ok(lhs)
        }
    }

    fn implies(&mut self) -> Result<Formula, ParseError> {
        let lhs = self.or()?;
        if self.peek() == Some(&Tok::Arrow) {
            self.bump();
            let rhs = self.implies()?;
            Ok(Formula::implies(lhs, rhs))
        } else {
            Ok(lhs)
        }
    }

    fn or(&mut self) -> Result<Formula, ParseError> {
        let mut lhs = self.and()?;
        while self.peek() == Some(&Tok::Pipe) {
            self.bump();
            let rhs = self.and()?;
            lhs = Formula::or(lhs, rhs);
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<Formula, ParseError> {
        let mut lhs = self.unary()?;
        while self.peek() == Some(&Tok::Amp) {
            self.bump();
            let rhs = self.unary()?;
            lhs = Formula::and(lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Formula, ParseError> {
        match self.peek() {
            Some(Tok::Tilde) => {
                self.bump();
                Ok(Formula::not(self.unary()?))
            }
            Some(Tok::Ident(name)) if name == "forall" || name == "exists" => self.quantifier(),
            _ => self.primary(),
        }
    }

    fn quantifier(&mut self) -> Result<Formula, ParseError> {
        let (kw, _) = self.ident("quantifier")?;
        if kw == "exists" && self.peek() == Some(&Tok::HatEq) {
            self.bump();
            let pos = self.here();
            let count = match self.bump() {
                Some(Tok::Int(n)) => n,
                _ => return Err(ParseError::Syntax { pos, msg: "expected count".into() }),
            };
            let (var, _) = self.ident("variable")?;
            self.expect(Tok::Dot, "'.'")?;
            let body = self.formula()?;
            return Ok(Formula::ExistsExactly(count, var, Box::new(body)));
        }
        let (var, _) = self.ident("variable")?;
        self.expect(Tok::Dot, "'.'")?;
        let body = self.formula()?;
        Ok(if kw == "forall" {
            Formula::forall(var, body)
        } else {
            Formula::exists(var, body)
        })
    }

    fn primary(&mut self) -> Result<Formula, ParseError> {
        let pos = self.here();
        match self.bump() {
            Some(Tok::LPar) => {
                let f = self.formula()?;
                self.expect(Tok::RPar, "')'")?;
                Ok(f)
            }
            Some(Tok::Ident(name)) => {
                match self.peek() {
                    Some(Tok::LPar) => {
                        self.bump();
                        let mut vars = Vec::new();
                        let (v, _) = self.ident("variable")?;
                        vars.push(v);
                        while self.peek() == Some(&Tok::Comma) {
                            self.bump();
                            let (v, _) = self.ident("variable")?;
                            vars.push(v);
                        }
                        self.expect(Tok::RPar, "')'")?;
                        let arity = match self.vocab.lookup(&name) {
                            None => {
                                return Err(ParseError::UnknownSymbol { name, pos: Some(pos) })
                            }
                            Some(SymbolRef { arity: Arity::Unary, .. }) => 1,
                            Some(SymbolRef { arity: Arity::Binary, .. }) => 2,
                        };
                        if vars.len() != arity {
                            return Err(ParseError::ArityMismatch {
                                name,
                                expected: arity,
                                got: vars.len(),
                                pos: Some(pos),
                            });
                        }
                        Ok(Formula::Atom { symbol: name, vars })
                    }
                    Some(Tok::Eq) => {
                        self.bump();
                        let (rhs, _) = self.ident("variable")?;
                        Ok(Formula::Equals(name, rhs))
                    }
                    _ => Err(ParseError::Syntax {
                        pos: self.here(),
                        msg: "expected '(' or '=' after identifier".into(),
                    }),
                }
            }
            _ => Err(ParseError::Syntax { pos, msg: "expected formula".into() }),
        }
    }
}

/// Parse a formula in the surface grammar (precedence low→high:
/// `<->`, `->`, `|`, `&`, `~`; quantifier bodies extend maximally right).
/// Atoms are checked against the vocabulary.
pub fn parse(text: &str, vocab: &Vocabulary) -> Result<Formula, ParseError> {
    let toks = lex(text)?;
    let mut p = Parser { toks, pos: 0, vocab, end: text.len() };
    let f = p.formula()?;
    if p.pos != p.toks.len() {
        return Err(ParseError::Syntax { pos: p.here(), msg: "trailing input".into() });
    }
    Ok(f)
}

/// Standard Tarskian truth value of `f` in `s` under `env`, which must
/// cover all free variables. Quantifiers range over the whole universe.
pub fn evaluate(
    s: &FiniteStructure,
    f: &Formula,
    env: &HashMap<String, usize>,
) -> Result<bool, EvalError> {
    for (var, &e) in env {
        if e >= s.size() {
            return Err(EvalError::ElementOutOfRange {
                var: var.clone(),
                element: e,
                size: s.size(),
            });
        }
    }
    let mut scope = env.clone();
    eval(s, f, &mut scope)
}

fn eval(s: &FiniteStructure, f: &Formula, env: &mut HashMap<String, usize>) -> Result<bool, EvalError> {
    match f {
        Formula::Atom { symbol, vars } => {
            let sym = s
                .vocab()
                .lookup(symbol)
                .ok_or_else(|| EvalError::UnknownSymbol(symbol.clone()))?;
            let resolve = |v: &String| -> Result<usize, EvalError> {
                env.get(v).copied().ok_or_else(|| EvalError::UnboundVariable(v.clone()))
            };
            match (sym.arity, vars.as_slice()) {
                (Arity::Unary, [v]) => Ok(s.has_unary(sym.index, resolve(v)?)),
                (Arity::Binary, [v, w]) => Ok(s.has_binary(sym.index, resolve(v)?, resolve(w)?)),
                _ => Err(EvalError::ArityMismatch(symbol.clone())),
            }
        }
        Formula::Equals(a, b) => {
            let ea = env.get(a).copied().ok_or_else(|| EvalError::UnboundVariable(a.clone()))?;
            let eb = env.get(b).copied().ok_or_else(|| EvalError::UnboundVariable(b.clone()))?;
            Ok(ea == eb)
        }
        Formula::Not(g) => Ok(!eval(s, g, env)?),
        Formula::And(a, b) => Ok(eval(s, a, env)? && eval(s, b, env)?),
        Formula::Or(a, b) => Ok(eval(s, a, env)? || eval(s, b, env)?),
        Formula::Implies(a, b) => Ok(!eval(s, a, env)? || eval(s, b, env)?),
        Formula::Iff(a, b) => Ok(eval(s, a, env)? == eval(s, b, env)?),
        Formula::Forall(v, g) => {
            let saved = env.get(v).copied();
            let mut result = true;
            for e in 0..s.size() {
                env.insert(v.clone(), e);
                if !eval(s, g, env)? {
                    result = false;
                    break;
                }
            }
            restore(env, v, saved);
            Ok(result)
        }
        Formula::Exists(v, g) => {
            let saved = env.get(v).copied();
            let mut result = false;
            for e in 0..s.size() {
                env.insert(v.clone(), e);
                if eval(s, g, env)? {
                    result = true;
                    break;
                }
            }
            restore(env, v, saved);
            Ok(result)
        }
        Formula::ExistsExactly(count, v, g) => {
            let saved = env.get(v).copied();
            let mut witnesses = 0usize;
            for e in 0..s.size() {
                env.insert(v.clone(), e);
                if eval(s, g, env)? {
                    witnesses += 1;
                    if witnesses > *count {
                        break;
                    }
                }
            }
            restore(env, v, saved);
            Ok(witnesses == *count)
        }
    }
}

fn restore(env: &mut HashMap<String, usize>, v: &str, saved: Option<usize>) {
    match saved {
        Some(e) => {
            env.insert(v.to_string(), e);
        }
        None => {
            env.remove(v);
        }
    }
}

/// A witnessed failure of reflexivity, symmetry, or transitivity.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EquivalenceViolation {
    Reflexivity(usize),
    Symmetry(usize, usize),
    Transitivity(usize, usize, usize),
}

impl fmt::Display for EquivalenceViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EquivalenceViolation::Reflexivity(a) => write!(f, "not reflexive at {a}"),
            EquivalenceViolation::Symmetry(a, b) => write!(f, "not symmetric at ({a},{b})"),
            EquivalenceViolation::Transitivity(a, b, c) => {
                write!(f, "not transitive at ({a},{b},{c})")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DefinablePartition {
    /// Blocks cover the universe disjointly, each sorted, ordered by least
    /// element.
    Partition(Vec<Vec<usize>>),
    NotEquivalence(EquivalenceViolation),
}

/// Interpret a formula with free variables exactly {x, y} as a binary
/// relation on `s` and return the induced partition when it is an
/// equivalence relation, or a witnessing violation when it is not.
pub fn definable_partition(
    s: &FiniteStructure,
    f: &Formula,
) -> Result<DefinablePartition, PartitionError> {
    let fv = f.free_vars();
    let expected: BTreeSet<String> = ["x".to_string(), "y".to_string()].into_iter().collect();
    if fv != expected {
        return Err(PartitionError::FreeVars(fv));
    }
    let n = s.size();
    let mut rel = vec![false; n * n];
    let mut env = HashMap::new();
    for a in 0..n {
        for b in 0..n {
            env.insert("x".to_string(), a);
            env.insert("y".to_string(), b);
            rel[a * n + b] = eval(s, f, &mut env)?;
        }
    }
    Ok(match partition_of_relation(n, &rel) {
        Ok(blocks) => DefinablePartition::Partition(blocks),
        Err(v) => DefinablePartition::NotEquivalence(v),
    })
}

/// Partition {0..n−1} by an explicit relation matrix, or report the first
/// equivalence violation in scan order.
pub(crate) fn partition_of_relation(
    n: usize,
    rel: &[bool],
) -> Result<Vec<Vec<usize>>, EquivalenceViolation> {
    for a in 0..n {
        if !rel[a * n + a] {
            return Err(EquivalenceViolation::Reflexivity(a));
        }
    }
    for a in 0..n {
        for b in 0..n {
            if rel[a * n + b] && !rel[b * n + a] {
                return Err(EquivalenceViolation::Symmetry(a, b));
            }
        }
    }
    for a in 0..n {
        for b in 0..n {
            if !rel[a * n + b] {
                continue;
            }
            for c in 0..n {
                if rel[b * n + c] && !rel[a * n + c] {
                    return Err(EquivalenceViolation::Transitivity(a, b, c));
                }
            }
        }
    }
    let mut assigned = vec![false; n];
    let mut blocks = Vec::new();
    for a in 0..n {
        if assigned[a] {
            continue;
        }
        let block: Vec<usize> = (a..n).filter(|&b| rel[a * n + b]).collect();
        for &b in &block {
            assigned[b] = true;
        }
        blocks.push(block);
    }
    Ok(blocks)
}
