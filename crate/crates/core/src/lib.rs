//! NLI with label-specific natural-language explanations.
//!
//! The pipeline: three label-specific explanation generators produce a
//! candidate explanation per label, and an explanation processor scores the
//! candidates (optionally together with the premise/hypothesis pair) to pick
//! the label. Everything is trained from scratch with hand-written gradients
//! on small models, and checked on a synthetic NLI world where the
//! architectural claims become testable properties.

pub mod baselines;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod generator;
pub mod probes;
pub mod processor;
pub mod seed;
pub mod textmodel;

pub use corpus::{Dataset, Instance, Label, Split};
pub use error::{NileError, Result};
