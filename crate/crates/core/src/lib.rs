//! Graph-indexed retrieval over chunks, knowledge units and entities.

pub mod corpus;
pub mod error;
pub mod eval;
pub mod extraction;
pub mod graph;
pub mod prompts;
pub mod providers;
pub mod retrieval;
pub mod selection;
pub mod vector;

pub use error::{Error, Result};
