pub mod cli;
pub mod dist;
pub mod error;
pub mod graphs;
pub mod inference;
pub mod io;
pub mod likelihoods;
pub mod linalg;
pub mod model;
pub mod priors;
pub mod rng;
pub mod sampler;
pub mod simulate;

pub use error::{Error, Result};
