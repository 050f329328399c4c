//! Error type shared by every module of the crate.

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

use crate::ops::OpKind;

/// Crate-wide result alias.
pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Everything that can go wrong in the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// Two tensors (or a tensor and a parameter bundle) disagree on shape.
    #[error("shape mismatch in {context}: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        /// What was being computed.
        context: &'static str,
        /// Expected shape.
        expected: Vec<usize>,
        /// Actual shape.
        found: Vec<usize>,
    },
    /// A parametric operation was invoked without its weight bundle.
    #[error("operation {0} requires a parameter bundle")]
    MissingParams(OpKind),
    /// An error raised while evaluating one operation on one edge.
    #[error("edge {edge} op {op}: {source}")]
    AtEdge {
        /// Edge id.
        edge: usize,
        /// Operation kind on that edge.
        op: OpKind,
        /// Underlying error.
        source: Box<Error>,
    },
    /// Reference to an edge id that does not exist in the graph.
    #[error("unknown edge {0}")]
    UnknownEdge(usize),
    /// Reference to an op index that is not in the edge's (restricted) op set.
    #[error("op index {op} is not allowed on edge {edge}")]
    UnknownOp {
        /// Edge id.
        edge: usize,
        /// Op index within the edge's full op set.
        op: usize,
    },
    /// A structural or configuration constraint was violated.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    /// An averaged gradient had zero norm, so no cosine can be formed.
    #[error("degenerate gradient on edge {edge} op {op}")]
    DegenerateGradient {
        /// Edge held fixed during collection.
        edge: usize,
        /// Op index on that edge.
        op: usize,
    },
    /// A vector with zero norm was passed to a cosine measure.
    #[error("zero-norm vector under a cosine measure")]
    ZeroNorm,
    /// Every edge of the sub-supernet is already split.
    #[error("nothing to split: no unsplit edge admits {branches} groups")]
    NothingToSplit {
        /// Requested branching factor.
        branches: usize,
    },
    /// Spearman correlation is undefined when one ranking is constant.
    #[error("zero variance in ranks")]
    ZeroVariance,
    /// Triple sampling could not satisfy the similarity thresholds.
    #[error("no qualifying triple: {0}")]
    NoQualifyingTriple(String),
    /// A value went non-finite during training.
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

impl Error {
    /// Wraps `self` with the edge and operation that raised it.
    pub fn at_edge(self, edge: usize, op: OpKind) -> Self {
        Error::AtEdge {
            edge,
            op,
            source: Box::new(self),
        }
    }
}
