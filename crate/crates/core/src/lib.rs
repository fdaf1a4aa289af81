//! Extraction-then-synthesis reading comprehension.

pub mod attention;
pub mod checkpoint;
pub mod config;
pub mod encoder;
pub mod error;
pub mod extraction;
pub mod metrics;
pub mod parallel;
pub mod pipeline;
pub mod synthesis;
pub mod text;

pub use error::{Error, Result};
