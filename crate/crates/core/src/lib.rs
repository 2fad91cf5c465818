pub mod arrivals;
pub mod chain;
pub mod error;
pub mod format;
pub mod math;
pub mod occupancy;
pub mod sim;
pub mod stability;
pub mod validate;

pub use error::{Error, Result};
