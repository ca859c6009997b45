pub mod codec;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod mci;
pub mod nn;
pub mod objectives;
pub mod run;
pub mod synthesis;
pub mod trainer;

pub use error::{Error, Result};
