pub mod capacity;
pub mod channel;
pub mod error;
pub mod feasibility;
pub mod orbit;
pub mod partition;
pub mod receiver;
pub mod report;
pub mod scenario;
pub mod study;

pub use error::{Error, Result};
