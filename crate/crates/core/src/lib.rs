pub mod cues;
pub mod error;
pub mod geometry;
pub mod imaging;
pub mod backends;
pub mod pipeline;
pub mod eval;
pub mod cli;
