pub mod classifier;
pub mod cli;
pub mod dataset;
pub mod evaluate;
pub mod kernel;
pub mod linalg;
pub mod projection;
pub mod sanitizer;
pub mod scatter;
