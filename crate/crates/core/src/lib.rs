//! Structured sparse coding with a tree hash for constant-time group
//! selection, and the dense SIFT → tree coding → spatial pyramid → linear
//! classifier pipeline built on it.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod classify;
pub mod error;
pub mod group_learn;
pub mod grouped;
pub mod linalg;
pub mod pipeline;
pub mod pursuit;
pub mod pyramid;
pub mod registry;
pub mod sift;
pub mod synth;
pub mod treehash;

pub use error::{Error, ExitKind, Result};
pub use pursuit::{Dictionary, SparseCode};
