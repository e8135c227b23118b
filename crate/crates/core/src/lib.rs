pub mod analysis;
pub mod config;
pub mod data;
pub mod distill;
pub mod error;
pub mod models;
pub mod par;
pub mod rng;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
