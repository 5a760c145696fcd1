pub mod data;
pub mod eif;
pub mod error;
pub mod eval;
pub mod io;
pub mod learners;
pub mod pipeline;
pub mod rng;
pub mod scores;
pub mod simgen;

pub use data::*;
pub use error::{Error, Result};
