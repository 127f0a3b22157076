//! Minimal-change integrity maintenance by tuple deletion.
//!
//! An inconsistent database instance can be made consistent by deleting
//! tuples; the *repairs* are the maximal consistent subsets. This crate
//! answers the two questions that matter about them without materializing
//! the (possibly exponential) repair set whenever a polynomial route exists:
//!
//! * **repair checking** — is a candidate subset one of the repairs?
//! * **consistent query answering** — does a sentence hold in *every* repair?
//!
//! Supported constraints: denial constraints (joins plus comparison
//! builtins under a negation), functional dependencies, and inclusion
//! dependencies. The [`repair`] and [`cqa`] modules hold the polynomial
//! engines, each guarded by the constraint-class analysis in [`model`];
//! [`oracle`] is the exhaustive reference implementation the engines are
//! tested against; [`reductions`] generates the instance families that mark
//! where the tractability frontier ends.
//!
//! The CLI in [`cli`] (and the `repairlab` binary) exposes the same
//! operations over the text formats defined in [`textio`]; the `examples/`
//! directory walks one capability per example.

pub mod bitset;
pub mod cli;
pub mod cqa;
pub mod hypergraph;
pub mod model;
pub mod oracle;
pub mod reductions;
pub mod repair;
pub mod textio;
