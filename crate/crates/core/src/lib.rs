//! Modular retrieval-augmented generation pipeline and evaluation harness.
//!
//! Every stage has a deterministic offline backend so whole runs are
//! reproducible without model access.

pub mod client;
pub mod corpus;
pub mod dense;
pub mod error;
pub mod scored;
pub mod sparse;

pub use error::{Error, Result};
pub mod outcome;
pub mod templates;
pub mod transform;
pub mod fusion;
pub mod rerank;
pub mod postprocess;
pub mod generation;
pub mod eval;
pub mod pipeline;
