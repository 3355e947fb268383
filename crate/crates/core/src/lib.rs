// `!(x > 0.0)` comparisons are deliberate: they reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod coverage;
pub mod efficiency;
pub mod error;
pub mod fingerprint;
pub mod gate;
pub mod metamorphic;
pub mod mutation;
pub mod sequential;
pub mod simkit;
pub mod stats;
pub mod traces;

pub use error::{Error, Result};
