//! Config-driven experiment runner on top of `ttlab-core`.

pub mod catalog;
pub mod config;
pub mod error;
pub mod output;
pub mod runner;

pub use error::{LabError, LabResult};
