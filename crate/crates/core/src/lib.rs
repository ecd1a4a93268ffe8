#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classify;
pub mod connectivity;
pub mod data;
pub mod embedding;
pub mod error;
pub mod linalg;
pub mod numeric;
pub mod recurrence;
pub mod reho;
pub mod synth;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
