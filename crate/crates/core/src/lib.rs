//! Memory-bounded parity learning: GF(2) affine geometry, subspace
//! mixtures, branching programs over `{0,1}^n × {0,1}` samples, the
//! affine reduction, and the resulting time-space bounds.

// `!(x >= y)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod branching;
pub mod crypto;
pub mod distributions;
pub mod error;
pub mod gf2;
pub mod learners;
pub mod lowerbound;
pub mod par;
pub mod partition;
pub mod reduction;
pub mod report;
pub mod seeding;
pub mod stats;
pub mod suites;

pub use branching::{AffineLabels, BranchingProgram, Node, Sample, VertexId};
pub use error::{Error, Result};
pub use gf2::{inner_product, AffineSubspace, BitVector, VectorSubspace};
pub use par::Execution;

/// `⌈log2 v⌉`, with `ceil_log2(0) = ceil_log2(1) = 0`.
pub fn ceil_log2(v: u64) -> usize {
    if v <= 1 {
        0
    } else {
        (64 - (v - 1).leading_zeros()) as usize
    }
}
