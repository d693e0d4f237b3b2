pub mod c_convexity;
pub mod config;
pub mod convex_tools;
pub mod cost_conditions;
pub mod diagnostics;
pub mod error;
pub mod exec;
pub mod geometry;
pub mod pipeline;
pub mod transport;

pub use error::{Error, Result};
