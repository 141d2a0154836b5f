pub mod control;
pub mod error;
pub mod error_set;
pub mod format;
pub mod linalg;
pub mod par;
pub mod search;
pub mod zeno;

pub use error::{BestIterate, Error, Result};
