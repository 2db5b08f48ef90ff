//! Audio captioning with an encoder-decoder model trained jointly on
//! next-word cross entropy and a matched/mismatched pair classifier.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod data;
pub mod dsp;
pub mod error;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod text;
pub mod training;

pub use error::{Error, Result};
