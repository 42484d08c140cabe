//! File formats, run configuration and pipelines on top of `inert-core`.

pub mod config;
pub mod error;
pub mod exec;
pub mod histogram;
pub mod io;
pub mod pipeline;

pub use config::RunConfig;
pub use error::{SimError, SimResult};
pub use exec::Rayon;
