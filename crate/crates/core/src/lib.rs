//! Symbolic regression by exhaustive, shared-subtree evaluation of every
//! expression tree up to a fixed depth, driven by an outer token-generator
//! search loop.

pub mod drmask;
pub mod engine;
pub mod error;
pub mod expr;
pub mod data;
pub mod search;
pub mod bench;

pub use error::{Error, Result};
