pub mod cli;
pub mod dataset;
pub mod error;
pub mod features;
pub mod io;
pub mod metrics;
pub mod normalize;
pub mod pipeline;
pub mod seqnet;
pub mod synth;

pub use error::{Error, Result};
