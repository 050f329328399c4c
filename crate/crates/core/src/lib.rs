//! Weight-sharing supernet splitting driven by gradient matching.
//!
//! A supernet is a cell DAG whose edges each carry a set of candidate
//! operations; every child architecture picks one operation per edge and
//! reuses the shared parameter bundle for it. Training them all through one
//! set of weights lets children interfere with each other. This crate splits
//! the supernet into sub-supernets by grouping operations whose gradients on
//! the shared weights agree, using a brute-force balanced min-cut on the
//! pairwise similarity graph of each edge.
//!
//! The crate is `no_std` (with `alloc`) and purely computational:
//!
//! - [`tensor`], [`ops`], [`loss`], [`optim`], [`data`], [`gradcheck`]: a
//!   small dense engine with exact gradients for the fixed op vocabulary.
//! - [`supernet`]: cell graphs, shared weights, child enumeration and the
//!   forward/backward passes for single paths and mixtures.
//! - [`search`]: uniform-path sampling (RSPS) and first-order DARTS.
//! - [`gm`]: gradient collection, similarity matrices, balanced min-cut.
//! - [`partition`]: partition sets, the split tree and the full pipeline.
//! - [`selection`]: successive halving and the simpler selection baselines.
//! - [`harness`]: oracle tables, Spearman ranking and the experiments.
//!
//! IO, configuration files, manifests and the command line live in the
//! companion `gm-splitter` crate.
#![no_std]
// `!(x > 0.0)` style checks are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod data;
pub mod error;
pub mod exec;
pub mod gm;
pub mod gradcheck;
pub mod harness;
pub mod loss;
pub mod math;
pub mod ops;
pub mod optim;
pub mod partition;
pub mod rng;
pub mod search;
pub mod selection;
pub mod supernet;
pub mod tensor;

pub use error::{Error, Result};
