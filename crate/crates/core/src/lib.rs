pub mod cli;
pub mod config;
pub mod fixtures;
pub mod harmonic;
pub mod homeo;
pub mod measure;
pub mod monster;
pub mod rational;
pub mod report;
pub mod seed;
pub mod system;
pub mod walk;

pub use homeo::MonotoneMap;
pub use measure::GridMeasure;
pub use system::RandomSystem;
pub use walk::{PhiEstimate, SimParams};
