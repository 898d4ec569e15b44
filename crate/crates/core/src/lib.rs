// `!(x > 0.0)` style checks are meant to catch NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod construct;
pub mod density;
pub mod error;
pub mod fdr;
pub mod io;
pub mod methods;
pub mod scoring;
pub mod seeds;
pub mod simulation;
pub mod special;

pub use construct::Dataset;
pub use error::{Error, Result};
