//! Loss kernels over modulation vectors and the evaluation metrics.
//!
//! Every kernel is a pure function of caller-supplied vectors. Kernels with
//! a `_grad` companion also return the analytic gradient with respect to
//! their trainable inputs; [`gradcheck`] compares those against central
//! differences.

pub mod gradcheck;
mod kernels;
mod metrics;
mod pairs;
mod types;

pub use kernels::*;
pub use metrics::*;
pub use pairs::{pair_count, select_pairs, tree_sum, MAX_EXHAUSTIVE_ITEMS};
pub use types::*;
