pub mod approx;
pub mod cli;
pub mod discovery;
pub mod error;
pub mod groups;
pub mod layer;
pub mod numerics;
pub mod theory;

pub use error::{Error, Result};
pub use numerics::Matrix;
