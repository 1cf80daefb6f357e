//! Fraud detection on non-attributed graphs.
//!
//! The pipeline turns a heterogeneous multi-entity graph into a target-only
//! graph with one-hot edge features ([`graph`]), initializes node features
//! from topology ([`features`]), pre-trains a GIN encoder contrastively on
//! random-walk sub-graphs ([`sampling`], [`pretrain`]), fine-tunes an
//! edge-aware classifier on the labeled nodes ([`finetune`]) and evaluates
//! the method grid with stratified k-fold micro-F1 ([`eval`]).

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod eval;
pub mod features;
pub mod finetune;
pub mod graph;
pub mod nn;
pub mod pretrain;
pub mod sampling;

pub use error::{Error, ErrorCategory, Result};
