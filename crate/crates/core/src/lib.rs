//! Information-theoretic analysis of ordered document sequences.
//!
//! The pipeline runs in stages, one module each:
//!
//! - [`corpus`]: manifest ingest, tokenization and frequency filtering.
//! - [`topics`]: LDA by collapsed Gibbs sampling, producing per-document
//!   topic distributions.
//! - [`surprise`]: KL divergence and text-to-text / text-to-past /
//!   text-to-N surprise series, plus descriptive analytics.
//! - [`nullmodel`]: publication-date-constrained permutation nulls and the
//!   publication-order baseline.
//! - [`paths`]: greedy minimum-surprise traversals and rank statistics.
//! - [`epochs`]: maximum-likelihood Gaussian segmentation with AIC selection.
//!
//! Data-parallel loops go through [`exec`], which uses rayon when the
//! `parallel` feature is enabled and falls back to plain iteration otherwise.
//! Results never depend on which path ran.

pub mod corpus;
pub mod epochs;
pub mod error;
pub mod exec;
pub mod nullmodel;
pub mod paths;
pub mod rng;
pub mod surprise;
pub mod synthetic;
pub mod topics;

pub use error::{Error, Result};

/// Version tag written into every JSON export and binary artifact.
pub const FORMAT_VERSION: u32 = 1;
