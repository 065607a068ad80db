pub mod data;
pub mod debias;
pub mod diffusion;
pub mod error;
pub mod metrics;
pub mod numerics;
pub mod rng;

pub use error::{Error, Result};
