pub mod conv;
pub mod embed;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod par;
pub mod ppr;
pub mod predict;
pub mod tape;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
