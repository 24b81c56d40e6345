pub mod error;
pub mod eval;
pub mod losses;
pub mod model;
pub mod scene;
pub mod seed;
pub mod signal;
pub mod trainer;

pub use error::{Error, Result};
