//! The user guide, doc-tested.
//!
//! Each submodule's documentation is one chapter of the book under
//! `book/`, pulled in verbatim with `include_str!`. Running
//! `cargo test --doc` therefore compiles and executes every Rust snippet
//! in the book, so the chapters cannot drift from the library they
//! describe.

#[doc = include_str!("../../../book/src/overview.md")]
pub mod overview {}

#[doc = include_str!("../../../book/src/cross-validation.md")]
pub mod cross_validation {}

#[doc = include_str!("../../../book/src/inverse-priors.md")]
pub mod inverse_priors {}

#[doc = include_str!("../../../book/src/divergence-rates.md")]
pub mod divergence_rates {}

#[doc = include_str!("../../../book/src/samplers.md")]
pub mod samplers {}

#[doc = include_str!("../../../book/src/experiments.md")]
pub mod experiments {}
