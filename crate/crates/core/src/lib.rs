//! Hierarchical event grounding.
//!
//! Links text mentions to *sets* of hierarchically related events in a
//! knowledge base: a mention of an atomic event is grounded to that event
//! and every ancestor up to the root of its part-of tree.
//!
//! The pipeline:
//!
//! - [`kb`] loads events and relation edges and builds the part-of forest.
//! - [`dataset`] expands gold sets, makes zero-shot splits over connected
//!   components, and generates synthetic corpora.
//! - [`encoder`] featurizes text with hashed character n-grams and embeds it
//!   with a two-tower linear bi-encoder.
//! - [`training`] optimizes the in-batch linking loss, optionally with the
//!   ComplEx hierarchy loss (pretraining, joint learning, or both).
//! - [`retrieval`] runs exact top-k inner-product search over the pool.
//! - [`rerank`] scores retrieved pairs jointly and thresholds them into a
//!   predicted set.
//! - [`metrics`] computes set-valued recall, accuracy and F1 measures.
//! - [`relext`] discovers parent events from retrieval overlap.
//! - [`pipeline`] wires everything into the `eventground` CLI.

pub mod dataset;
pub mod encoder;
pub mod error;
pub mod io;
pub mod kb;
pub mod metrics;
pub mod pipeline;
pub mod relext;
pub mod rerank;
pub mod retrieval;
pub mod rng;
pub mod training;

pub use error::{Error, Result};

/// Reserved prediction emitted when no candidate clears the threshold.
pub const NULL_EVENT: &str = "NULL";
