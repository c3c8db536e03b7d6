//! Scenario files, mesh IO and the run pipeline behind the `uwvf` command.

pub mod compare;
pub mod error;
pub mod meshio;
pub mod presets;
pub mod run;
pub mod scenario;

pub use error::{Error, Result};
pub use scenario::Scenario;
