//! Desk-scale relation triple extraction by cascaded binary tagging with a
//! semantic-enhancement mechanism.
//!
//! The pipeline decodes candidate subjects from per-token start/end scores,
//! pre-classifies each subject over the relation set, retrieves its nearest
//! subject-lexicon words per relation, blends them through attention into
//! an enhancement vector, and conditions per-relation object taggers on the
//! subject vector plus that enhancement. Training optimizes a four-term
//! objective (subject tags, object tags, null objects, pre-classification)
//! end to end through a small reverse-mode autodiff engine.
//!
//! The `casaug` binary exposes corpus synthesis, lexicon building,
//! training, evaluation, extraction and an invariant self-check.

pub mod autodiff;
pub mod cli;
pub mod corpus;
pub mod encoder;
pub mod enhance;
pub mod error;
pub mod eval;
pub mod lexicon;
pub mod model;
pub mod object;
pub mod params;
pub mod subject;
pub mod train;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
