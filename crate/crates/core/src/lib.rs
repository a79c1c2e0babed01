pub mod baselines;
pub mod bench;
pub mod datagen;
pub mod direction;
pub mod error;
pub mod map;
pub mod methods;
pub mod neuralnet;
pub mod pipeline;
pub mod rng;
pub mod smica;
pub mod stats;
pub mod tcl;
pub mod verdict;

pub use error::{Error, Result};
