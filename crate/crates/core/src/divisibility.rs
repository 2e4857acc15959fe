//! Divisibility audits for definable equivalence relations, and pregeometry
//! checks over prime-field vector spaces.
//!
//! The size of a definable set partitioned into classes of fixed sizes is
//! divisible by the gcd of those sizes. On a finite structure the audit
//! takes a target formula φ(x, z̄), a candidate relation ψ(x, y, z̄) and an
//! optional parameter guard ξ(z̄): for each parameter tuple it partitions
//! the elements of the target on which ψ is reflexive and tests whether the
//! gcd of the class sizes divides the whole target. Elements of the target
//! that ψ misses make the verdict fail — exactly the signature of a
//! structure outside the regime where ψ is almost surely total.

use crate::logic::{evaluate, EvalError, Formula};
use crate::rng::{keyed_rng, tag};
use crate::structure::FiniteStructure;
use num_integer::Integer;
use rand::Rng;
use std::collections::{BTreeSet, HashMap};
use thiserror::Error;

/// Parameter tuples enumerate all n^|z̄| assignments; three is plenty at
/// desk scale.
pub const MAX_PARAMETER_ARITY: usize = 3;

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum DivisibilityError {
    #[error("relation is not an equivalence on the target at parameters {params:?}: {reason}")]
    NotEquivalenceOnTarget { params: Vec<usize>, reason: String },
    #[error("{got} parameter variables exceed the cap of {MAX_PARAMETER_ARITY}")]
    TooManyParameters { got: usize },
    #[error("variable {0:?} is reserved and cannot appear in that formula")]
    ReservedVariable(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{0} is not prime")]
    NotPrime(u64),
    #[error("geometry too large: {points} points exceed cap {cap}")]
    GeometryTooLarge { points: u64, cap: u64 },
    #[error("could not sample {n} independent points after {attempts} attempts")]
    DependentSample { n: usize, attempts: usize },
}

/// Per-parameter audit entry.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DivisibilityEntry {
    pub params: Vec<usize>,
    /// |φ(S, b̄)|.
    pub target_size: usize,
    /// Sizes of the ψ-classes inside the target, ascending. Elements of
    /// the target on which ψ is irreflexive belong to no class.
    pub class_sizes: Vec<usize>,
    pub gcd: usize,
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DivisibilityReport {
    pub entries: Vec<DivisibilityEntry>,
    /// True iff every per-parameter verdict holds.
    pub holds: bool,
}

fn collect_params(
    xi: Option<&Formula>,
    phi: &Formula,
    psi: &Formula,
) -> Result<Vec<String>, DivisibilityError> {
    let mut params: BTreeSet<String> = BTreeSet::new();
    if let Some(f) = xi {
        for v in f.free_vars() {
            if v == "x" || v == "y" {
                return Err(DivisibilityError::ReservedVariable(v));
            }
            params.insert(v);
        }
    }
    for v in phi.free_vars() {
        if v == "y" {
            return Err(DivisibilityError::ReservedVariable(v));
        }
        if v != "x" {
            params.insert(v);
        }
    }
    for v in psi.free_vars() {
        if v != "x" && v != "y" {
            params.insert(v);
        }
    }
    if params.len() > MAX_PARAMETER_ARITY {
        return Err(DivisibilityError::TooManyParameters { got: params.len() });
    }
    Ok(params.into_iter().collect())
}

fn gcd_of(sizes: &[usize]) -> usize {
    sizes.iter().fold(0usize, |acc, &s| acc.gcd(&s))
}

/// Audit one structure: for every parameter tuple satisfying ξ (or the
/// single empty tuple when ξ is absent), partition φ's solutions by ψ and
/// test the gcd-divides-target law. ψ must be symmetric and transitive on
/// the target; reflexivity may fail pointwise, which shrinks the classes
/// and typically breaks the verdict.
pub fn check_divisibility(
    s: &FiniteStructure,
    xi: Option<&Formula>,
    phi: &Formula,
    psi: &Formula,
) -> Result<DivisibilityReport, DivisibilityError> {
    let params = collect_params(xi, phi, psi)?;
    let n = s.size();
    if n == 0 && !params.is_empty() {
        // No parameter assignments exist.
        return Ok(DivisibilityReport { entries: Vec::new(), holds: true });
    }
    let mut entries = Vec::new();
    let mut assignment = vec![0usize; params.len()];
    loop {
        let mut env: HashMap<String, usize> =
            params.iter().cloned().zip(assignment.iter().copied()).collect();
        let guard_ok = match xi {
            None => true,
            Some(f) => evaluate(s, f, &env)?,
        };
        if guard_ok {
            // Target set A = φ(S, b̄).
            let mut target = Vec::new();
            for a in 0..n {
                env.insert("x".to_string(), a);
                if evaluate(s, phi, &env)? {
                    target.push(a);
                }
            }
            env.remove("x");
            // ψ restricted to the target.
            let m = target.len();
            let mut rel = vec![false; m * m];
            for (ia, &a) in target.iter().enumerate() {
                for (ib, &b) in target.iter().enumerate() {
                    env.insert("x".to_string(), a);
                    env.insert("y".to_string(), b);
                    rel[ia * m + ib] = evaluate(s, psi, &env)?;
                }
            }
            env.remove("x");
            env.remove("y");
            for ia in 0..m {
                for ib in 0..m {
                    if rel[ia * m + ib] && !rel[ib * m + ia] {
                        return Err(DivisibilityError::NotEquivalenceOnTarget {
                            params: assignment.clone(),
                            reason: format!(
                                "not symmetric at ({},{})",
                                target[ia], target[ib]
                            ),
                        });
                    }
                    if rel[ia * m + ib] {
                        for ic in 0..m {
                            if rel[ib * m + ic] && !rel[ia * m + ic] {
                                return Err(DivisibilityError::NotEquivalenceOnTarget {
                                    params: assignment.clone(),
                                    reason: format!(
                                        "not transitive at ({},{},{})",
                                        target[ia], target[ib], target[ic]
                                    ),
                                });
                            }
                        }
                    }
                }
            }
            // Classes of the elements on which ψ is reflexive.
            let mut seen = vec![false; m];
            let mut class_sizes = Vec::new();
            for ia in 0..m {
                if seen[ia] || !rel[ia * m + ia] {
                    continue;
                }
                let mut size = 0;
                for ib in 0..m {
                    if rel[ia * m + ib] {
                        seen[ib] = true;
                        size += 1;
                    }
                }
                class_sizes.push(size);
            }
            class_sizes.sort_unstable();
            let g = gcd_of(&class_sizes);
            let holds = if g == 0 { m == 0 } else { m % g == 0 };
            entries.push(DivisibilityEntry {
                params: assignment.clone(),
                target_size: m,
                class_sizes,
                gcd: g,
                holds,
            });
        }
        // Next parameter assignment.
        let mut pos = 0;
        loop {
            if pos == assignment.len() {
                let holds = entries.iter().all(|e| e.holds);
                return Ok(DivisibilityReport { entries, holds });
            }
            assignment[pos] += 1;
            if assignment[pos] < n {
                break;
            }
            assignment[pos] = 0;
            pos += 1;
        }
    }
}

/// A closure operator on point indices.
pub trait Closure {
    fn num_points(&self) -> usize;
    fn close(&self, xs: &[usize]) -> BTreeSet<usize>;
}

/// All vectors of a d-dimensional space over the prime field F_p, with
/// linear span as the closure operator. The points are indexed in mixed
/// radix, coordinate 0 least significant.
#[derive(Clone, Debug)]
pub struct VectorGeometry {
    p: u64,
    dim: usize,
    size: usize,
}

const GEOMETRY_POINT_CAP: u64 = 1 << 20;

fn is_prime(p: u64) -> bool {
    p >= 2 && (2..=p.isqrt()).all(|d| !p.is_multiple_of(d))
}

impl VectorGeometry {
    pub fn new(p: u64, dim: usize) -> Result<Self, DivisibilityError> {
        if !is_prime(p) {
            return Err(DivisibilityError::NotPrime(p));
        }
        let points = p.checked_pow(dim as u32).filter(|&s| s <= GEOMETRY_POINT_CAP);
        match points {
            Some(size) => Ok(VectorGeometry { p, dim, size: size as usize }),
            None => Err(DivisibilityError::GeometryTooLarge {
                points: u64::MAX,
                cap: GEOMETRY_POINT_CAP,
            }),
        }
    }

    pub fn prime(&self) -> u64 {
        self.p
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn coords(&self, idx: usize) -> Vec<u64> {
        let mut v = Vec::with_capacity(self.dim);
        let mut rest = idx as u64;
        for _ in 0..self.dim {
            v.push(rest % self.p);
            rest /= self.p;
        }
        v
    }

    fn index(&self, coords: &[u64]) -> usize {
        coords.iter().rev().fold(0usize, |acc, &c| acc * self.p as usize + c as usize)
    }

    /// Linear span by enumerating all coefficient vectors over the chosen
    /// points. Exponential in |xs|, which stays tiny at desk scale.
    pub fn span(&self, xs: &[usize]) -> BTreeSet<usize> {
        let vectors: Vec<Vec<u64>> = xs.iter().map(|&i| self.coords(i)).collect();
        let mut out = BTreeSet::new();
        let mut coeffs = vec![0u64; xs.len()];
        loop {
            let mut point = vec![0u64; self.dim];
            for (c, vec) in coeffs.iter().zip(&vectors) {
                for (d, x) in vec.iter().enumerate() {
                    point[d] = (point[d] + c * x) % self.p;
                }
            }
            out.insert(self.index(&point));
            let mut pos = 0;
            loop {
                if pos == coeffs.len() {
                    return out;
                }
                coeffs[pos] += 1;
                if coeffs[pos] < self.p {
                    break;
                }
                coeffs[pos] = 0;
                pos += 1;
            }
        }
    }

    /// Rank by Gaussian elimination — an independent route to |span| =
    /// p^rank, used to cross-check the enumerated spans.
    pub fn rank(&self, xs: &[usize]) -> usize {
        let mut rows: Vec<Vec<u64>> = xs.iter().map(|&i| self.coords(i)).collect();
        let mut rank = 0;
        for col in 0..self.dim {
            let pivot = (rank..rows.len()).find(|&r| rows[r][col] != 0);
            let Some(pivot) = pivot else { continue };
            rows.swap(rank, pivot);
            let inv = mod_inverse(rows[rank][col], self.p);
            for c in 0..self.dim {
                rows[rank][c] = rows[rank][c] * inv % self.p;
            }
            for r in 0..rows.len() {
                if r != rank && rows[r][col] != 0 {
                    let factor = rows[r][col];
                    for c in 0..self.dim {
                        rows[r][c] = (rows[r][c] + (self.p - factor) * rows[rank][c]) % self.p;
                    }
                }
            }
            rank += 1;
        }
        rank
    }

    fn independent(&self, xs: &[usize]) -> bool {
        self.rank(xs) == xs.len()
    }
}

fn mod_inverse(a: u64, p: u64) -> u64 {
    // Fermat: a^(p-2) mod p for prime p.
    let mut result = 1u64;
    let mut base = a % p;
    let mut exp = p - 2;
    while exp > 0 {
        if exp & 1 == 1 {
            result = result * base % p;
        }
        base = base * base % p;
        exp >>= 1;
    }
    result
}

impl Closure for VectorGeometry {
    fn num_points(&self) -> usize {
        self.size
    }

    fn close(&self, xs: &[usize]) -> BTreeSet<usize> {
        self.span(xs)
    }
}

/// The degenerate closure cl(X) = X ∪ cl(∅).
pub struct TrivialClosure {
    pub points: usize,
    pub closed_empty: BTreeSet<usize>,
}

impl Closure for TrivialClosure {
    fn num_points(&self) -> usize {
        self.points
    }

    fn close(&self, xs: &[usize]) -> BTreeSet<usize> {
        let mut out = self.closed_empty.clone();
        out.extend(xs.iter().copied());
        out
    }
}

/// One row of the closure audit at step n: the step size
/// |cl(a_1..a_n)| − |cl(a_1..a_{n−1})| against its exact expected value
/// p^(n−1)(p−1), and the divisibility of the remaining mass.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClosureAuditRow {
    pub n: usize,
    pub step: u64,
    pub expected_step: u64,
    /// |A| − |cl(a_1..a_{n−1})|.
    pub remaining: u64,
    pub step_divides_remaining: bool,
    /// p^(n−1) divides |A|.
    pub power_divides_total: bool,
}

/// Sample independent point sets of each size up to the dimension and
/// audit the closure-growth identities. Dependent draws are retried; a
/// persistent failure is reported.
pub fn closure_audit(
    g: &VectorGeometry,
    seed: u64,
) -> Result<Vec<ClosureAuditRow>, DivisibilityError> {
    let mut rng = keyed_rng(seed, tag::GEOMETRY, g.prime(), g.dim() as u64);
    let mut rows = Vec::new();
    for n in 1..=g.dim() {
        let mut points: Vec<usize> = Vec::new();
        let mut attempts = 0;
        while points.len() < n {
            attempts += 1;
            if attempts > 64 * n {
                return Err(DivisibilityError::DependentSample { n, attempts });
            }
            let candidate = rng.random_range(0..g.num_points());
            let mut extended = points.clone();
            extended.push(candidate);
            if g.independent(&extended) {
                points = extended;
            }
        }
        let prev = g.span(&points[..n - 1]);
        let full = g.span(&points);
        let step = (full.len() - prev.len()) as u64;
        let expected_step = g.prime().pow(n as u32 - 1) * (g.prime() - 1);
        let remaining = (g.num_points() - prev.len()) as u64;
        rows.push(ClosureAuditRow {
            n,
            step,
            expected_step,
            remaining,
            step_divides_remaining: step != 0 && remaining.is_multiple_of(step),
            power_divides_total: (g.num_points() as u64).is_multiple_of(g.prime().pow(n as u32 - 1)),
        });
    }
    Ok(rows)
}

/// A witnessed failure of one of the four closure-operator axioms.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PregeometryViolation {
    Reflexivity { set: Vec<usize> },
    Monotonicity { subset: Vec<usize>, set: Vec<usize> },
    FiniteCharacter { set: Vec<usize> },
    Exchange { set: Vec<usize>, a: usize, b: usize },
}

#[derive(Clone, Debug)]
pub struct ExchangeReport {
    pub trials: usize,
    pub counterexample: Option<PregeometryViolation>,
}

impl ExchangeReport {
    pub fn passed(&self) -> bool {
        self.counterexample.is_none()
    }
}

/// Randomized verification of reflexivity, monotonicity, finite character,
/// and exchange on sampled sets and points.
pub fn exchange_check(cl: &dyn Closure, trials: usize, seed: u64) -> ExchangeReport {
    let mut rng = keyed_rng(seed, tag::GEOMETRY, cl.num_points() as u64, 1);
    let points = cl.num_points();
    if points == 0 {
        return ExchangeReport { trials, counterexample: None };
    }
    for _ in 0..trials {
        let size = rng.random_range(0..=3usize);
        let set: Vec<usize> = (0..size).map(|_| rng.random_range(0..points)).collect();
        let closed = cl.close(&set);
        // Reflexivity.
        if !set.iter().all(|x| closed.contains(x)) {
            return ExchangeReport {
                trials,
                counterexample: Some(PregeometryViolation::Reflexivity { set }),
            };
        }
        // Monotonicity: a random subset of cl(set) closes inside it.
        let closed_vec: Vec<usize> = closed.iter().copied().collect();
        let subset: Vec<usize> = closed_vec
            .iter()
            .copied()
            .filter(|_| rng.random_bool(0.3))
            .take(3)
            .collect();
        if !cl.close(&subset).is_subset(&closed) {
            return ExchangeReport {
                trials,
                counterexample: Some(PregeometryViolation::Monotonicity { subset, set }),
            };
        }
        // Finite character at finite scale: the closure is the union of
        // the closures of all subsets (the set itself included).
        let mut union: BTreeSet<usize> = BTreeSet::new();
        for mask in 0..(1usize << set.len()) {
            let sub: Vec<usize> = set
                .iter()
                .enumerate()
                .filter(|(i, _)| mask >> i & 1 == 1)
                .map(|(_, &x)| x)
                .collect();
            union.extend(cl.close(&sub));
        }
        if union != closed {
            return ExchangeReport {
                trials,
                counterexample: Some(PregeometryViolation::FiniteCharacter { set }),
            };
        }
        // Exchange.
        let a = rng.random_range(0..points);
        let b = rng.random_range(0..points);
        let mut with_b = set.clone();
        with_b.push(b);
        if cl.close(&with_b).contains(&a) && !closed.contains(&a) {
            let mut with_a = set.clone();
            with_a.push(a);
            if !cl.close(&with_a).contains(&b) {
                return ExchangeReport {
                    trials,
                    counterexample: Some(PregeometryViolation::Exchange { set, a, b }),
                };
            }
        }
    }
    ExchangeReport { trials, counterexample: None }
}
