// `!(x >= 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Index loops read closer to the matrix formulas than iterator chains.
#![allow(clippy::needless_range_loop)]

pub mod autodiff;
pub mod dual;
pub mod error;
pub mod experiments;
pub mod measure;
pub mod ot;
pub mod rng;
pub mod train;

pub use error::{Error, Result};
