//! Sampling the fixed-class ensembles of a Δ-system, exact counting of age
//! members, and exactly uniform age sampling for unary-separated systems.
//!
//! The ensemble at size n has universe of size n·(l−t) + t: n elements per
//! non-base class plus one per base class. Every unordered pair draws its
//! diagram independently and uniformly from the cell of its endpoint
//! classes, with the lower-labeled element as x; both orientations describe
//! the same alphabet because cells are closed under reversal. Draws are
//! keyed by (seed, pair), so they are order-independent and parallel-safe.

use crate::delta::{ClassAssignment, DeltaSystem};
use crate::rng::{keyed_rng, tag};
use crate::structure::{FiniteStructure, StructureBuilder};
use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::seq::SliceRandom;
use rand::{Rng, RngCore};
use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum SampleError {
    #[error("system fails validation; sample from valid systems only")]
    InvalidSystem,
    #[error("sample size must be positive")]
    ZeroSize,
    #[error(
        "classes {} and {} share a unary diagram; exact counting would need \
         inclusion-exclusion over ambiguous class assignments",
        i + 1, j + 1
    )]
    NotUnarySeparated { i: usize, j: usize },
    #[error("class index {0} out of range")]
    BadClass(usize),
}

fn ensure_valid(ds: &DeltaSystem) -> Result<(), SampleError> {
    if ds.is_valid() {
        Ok(())
    } else {
        Err(SampleError::InvalidSystem)
    }
}

fn ensure_separated(ds: &DeltaSystem) -> Result<(), SampleError> {
    match ds.unary_collision() {
        None => Ok(()),
        Some((i, j)) => Err(SampleError::NotUnarySeparated { i, j }),
    }
}

/// Draw one structure from the ensemble at size n. The universe has
/// n·(l−t) + t elements laid out class by class; element classes, all
/// unary atoms, and every pair's diagram are determined by the system and
/// the keyed per-pair draws. Deterministic given the seed.
pub fn sample_kn(
    ds: &DeltaSystem,
    n: usize,
    seed: u64,
) -> Result<(FiniteStructure, ClassAssignment), SampleError> {
    ensure_valid(ds)?;
    if n == 0 {
        return Err(SampleError::ZeroSize);
    }
    let l = ds.num_classes();
    let t = ds.num_base();
    let free = l - t;
    let size = n * free + t;
    let cls: Vec<usize> = (0..size)
        .map(|e| if e < n * free { e / n } else { free + (e - n * free) })
        .collect();
    let s = build_from_classes(ds, &cls, seed);
    Ok((s, ClassAssignment::new(cls, l)))
}

/// Assemble a structure whose element classes are given: unary atoms forced
/// per class, each pair's diagram drawn uniformly from its cell.
fn build_from_classes(ds: &DeltaSystem, cls: &[usize], seed: u64) -> FiniteStructure {
    let size = cls.len();
    let mut b = StructureBuilder::new(ds.vocab_arc(), size);
    for e in 0..size {
        b.apply_unary_diagram(e, ds.row_unary(cls[e]));
    }
    for p in 0..size {
        for q in p + 1..size {
            let cell = ds.cell(cls[p], cls[q]);
            let mut rng = keyed_rng(seed, tag::PAIR, p as u64, q as u64);
            let idx = rng.random_range(0..cell.len());
            b.apply_pair_cross(p, q, &cell[idx]);
        }
    }
    b.finish()
}

/// Exact labeled count of age members of each size, split by class-size
/// vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AgeCount {
    pub n: usize,
    pub total: BigUint,
    /// (class-size vector, count), sorted lexicographically by vector.
    /// Vectors are indexed by class; base classes contribute 0 or 1.
    pub by_class_sizes: Vec<(Vec<usize>, BigUint)>,
}

fn factorials(n: usize) -> Vec<BigUint> {
    let mut out = Vec::with_capacity(n + 1);
    out.push(BigUint::one());
    for k in 1..=n {
        let next = &out[k - 1] * BigUint::from(k);
        out.push(next);
    }
    out
}

fn multinomial(fact: &[BigUint], n: usize, parts: &[usize]) -> BigUint {
    let mut denom = BigUint::one();
    for &p in parts {
        denom *= &fact[p];
    }
    &fact[n] / denom
}

fn choose2(n: usize) -> usize {
    n * (n.saturating_sub(1)) / 2
}

/// Count the labeled structures on {0..n−1} embeddable in the system's
/// limit: distribute labels over classes (base classes at most once), then
/// pick each pair's diagram freely from its cell. Requires a
/// unary-separated system, where class membership of an age member is
/// forced by its unary atoms.
pub fn count_age(ds: &DeltaSystem, n: usize) -> Result<AgeCount, SampleError> {
    ensure_valid(ds)?;
    ensure_separated(ds)?;
    let l = ds.num_classes();
    let fact = factorials(n);
    let mut by: Vec<(Vec<usize>, BigUint)> = Vec::new();
    let mut vector = vec![0usize; l];
    enumerate_vectors(ds, n, 0, &mut vector, &mut |v| {
        let mut weight = multinomial(&fact, n, v);
        for i in 0..l {
            weight *= BigUint::from(ds.cell(i, i).len()).pow(choose2(v[i]) as u32);
            for j in i + 1..l {
                weight *= BigUint::from(ds.cell(i, j).len()).pow((v[i] * v[j]) as u32);
            }
        }
        by.push((v.to_vec(), weight));
    });
    by.sort_by(|a, b| a.0.cmp(&b.0));
    let total = by.iter().map(|(_, w)| w.clone()).sum();
    Ok(AgeCount { n, total, by_class_sizes: by })
}

fn enumerate_vectors(
    ds: &DeltaSystem,
    remaining: usize,
    class: usize,
    vector: &mut Vec<usize>,
    emit: &mut impl FnMut(&[usize]),
) {
    let l = ds.num_classes();
    if class == l {
        if remaining == 0 {
            emit(vector);
        }
        return;
    }
    let cap = if ds.is_base(class) { remaining.min(1) } else { remaining };
    for k in 0..=cap {
        vector[class] = k;
        enumerate_vectors(ds, remaining - k, class + 1, vector, emit);
    }
    vector[class] = 0;
}

/// Exact fraction of size-n age members living entirely inside one class,
/// for each requested n.
pub fn ratio_table(
    ds: &DeltaSystem,
    dominant_class: usize,
    n_list: &[usize],
) -> Result<Vec<(usize, BigRational)>, SampleError> {
    if dominant_class >= ds.num_classes() {
        return Err(SampleError::BadClass(dominant_class));
    }
    let mut out = Vec::new();
    for &n in n_list {
        let count = count_age(ds, n)?;
        let inside = if n == 0 {
            // The empty structure lives inside every class.
            count.total.clone()
        } else {
            count
                .by_class_sizes
                .iter()
                .find(|(v, _)| v[dominant_class] == n)
                .map(|(_, w)| w.clone())
                .unwrap_or_else(BigUint::zero)
        };
        out.push((n, BigRational::new(inside.into(), count.total.clone().into())));
    }
    Ok(out)
}

/// A uniform draw below `bound` (which must be positive), by rejection on
/// random bit blocks. Exact and deterministic given the stream.
fn uniform_biguint(rng: &mut impl RngCore, bound: &BigUint) -> BigUint {
    let bits = bound.bits();
    let words = bits.div_ceil(32) as usize;
    let top_mask: u32 = if bits.is_multiple_of(32) { u32::MAX } else { (1u32 << (bits % 32)) - 1 };
    loop {
        let mut digits = vec![0u32; words];
        for (k, d) in digits.iter_mut().enumerate() {
            *d = rng.next_u32();
            if k + 1 == words {
                *d &= top_mask;
            }
        }
        let candidate = BigUint::new(digits);
        if candidate < *bound {
            return candidate;
        }
    }
}

/// Draw exactly uniformly over the age members of size n: pick the
/// class-size vector with probability proportional to its exact count,
/// assign classes to labels uniformly among arrangements, then draw each
/// pair diagram uniformly. Requires a unary-separated system.
pub fn sample_age_uniform(
    ds: &DeltaSystem,
    n: usize,
    seed: u64,
) -> Result<(FiniteStructure, ClassAssignment), SampleError> {
    let counts = count_age(ds, n)?;
    let l = ds.num_classes();
    let mut rng = keyed_rng(seed, tag::CLASS_VECTOR, n as u64, 0);
    let mut ticket = uniform_biguint(&mut rng, &counts.total);
    let mut chosen: Option<&[usize]> = None;
    for (v, w) in &counts.by_class_sizes {
        if ticket < *w {
            chosen = Some(v);
            break;
        }
        ticket -= w;
    }
    let vector = chosen.expect("weights sum to total");
    // Uniform arrangement: shuffle the multiset of class labels.
    let mut cls: Vec<usize> = Vec::with_capacity(n);
    for (c, &k) in vector.iter().enumerate() {
        cls.extend(std::iter::repeat_n(c, k));
    }
    cls.shuffle(&mut keyed_rng(seed, tag::SHUFFLE, n as u64, 0));
    let s = build_from_classes(ds, &cls, seed);
    Ok((s, ClassAssignment::new(cls, l)))
}
