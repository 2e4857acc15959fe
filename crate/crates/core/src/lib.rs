//! Random finite relational structures: ensembles with a designated class
//! relation, extension-axiom checking, exact age counting and uniform age
//! sampling, imaginary-element expansions, divisibility audits, and
//! syntactic classification of the limiting theory.
//!
//! The crate is organized around a few core objects:
//!
//! - [`structure::FiniteStructure`] — a labeled structure on `{0..n-1}`
//!   over a unary/binary [`structure::Vocabulary`], with atomic pair
//!   diagrams as the basic unit of description.
//! - [`delta::DeltaSystem`] — an (l, t, Q) matrix of allowed pair diagrams
//!   between classes; the finite descriptor of a limiting theory.
//! - [`logic::Formula`] — first-order formulas with counting quantifiers,
//!   parsed from a small surface syntax and evaluated on structures.
//!
//! Everything stochastic is keyed by explicit seeds ([`rng`]), so every
//! experiment is reproducible bit for bit.
//!
//! ```
//! use std::sync::Arc;
//! use zeroone::structure::{Arity, PairDiagramBuilder, Vocabulary};
//! use zeroone::delta::DeltaSystem;
//! use zeroone::sample::sample_kn;
//! use zeroone::classify::classify_theory;
//!
//! // One class whose pairs are either edges or non-edges.
//! let vocab = Vocabulary::shared(vec![("Q", Arity::Binary), ("E", Arity::Binary)])?;
//! let edge = PairDiagramBuilder::new(&vocab)
//!     .loops("Q", true, true)
//!     .cross("Q", true, true)
//!     .cross("E", true, true)
//!     .build();
//! let nonedge = PairDiagramBuilder::new(&vocab)
//!     .loops("Q", true, true)
//!     .cross("Q", true, true)
//!     .build();
//! let system = DeltaSystem::from_upper(
//!     Arc::clone(&vocab), "Q", 1, 0, vec![((0, 0), vec![edge, nonedge])],
//! )?;
//! assert!(system.validate().is_empty());
//!
//! let (structure, classes) = sample_kn(&system, 16, 42)?;
//! assert_eq!(structure.size(), 16);
//! assert_eq!(classes.class_of(3), 0);
//!
//! let theory = classify_theory(&system);
//! assert!(theory.simple_su1_trivial && !theory.omega_stable);
//! # Ok::<(), Box<dyn std::error::Error>>(())
//! ```

pub mod classify;
pub mod delta;
pub mod divisibility;
pub mod extension;
pub mod json;
pub mod logic;
pub mod meq;
pub mod rng;
pub mod sample;
pub mod structure;

pub use delta::{ClassAssignment, DeltaSystem, Violation};
pub use logic::Formula;
pub use structure::{Arity, FiniteStructure, PairDiagram, UnaryDiagram, Vocabulary};
