pub mod analysis;
pub mod curriculum;
pub mod decoder;
pub mod env;
pub mod error;
pub mod high_level;
pub mod low_level;
pub mod nn;
pub mod replay;
pub mod trainer;

pub use error::{HsdError, Result};
