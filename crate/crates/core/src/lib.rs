pub mod cvnn;
pub mod error;
pub mod gme;
pub mod model;
pub mod pipeline;
pub mod qstate;

pub use error::{Error, Result};
