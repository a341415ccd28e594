//! Layout generation from GUI arrangement graphs.
//!
//! A graph of `subject predicate object` constraints between typed GUI
//! components is flattened into tokens, encoded by a masked transformer,
//! decoded into boxes through Gaussian-mixture heads, and refined by a
//! co-attention stage. The [`metrics`] module scores the result.

pub mod ag;
pub mod corpus;
pub mod error;
pub mod layout;
pub mod metrics;
pub mod model;
pub mod nn;

pub use error::{Error, Result};
