//! Discrete-time scenario engine and Monte Carlo batching.

mod engine;
mod montecarlo;
mod report;
mod scenario;

pub use engine::*;
pub use montecarlo::*;
pub use report::*;
pub use scenario::*;
