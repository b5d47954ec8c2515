//! Configuration-driven front end for the pucci-core solvers and diagnostics.

pub mod config;
pub mod run;

pub use config::{parse_config, ConfigError, RunConfig};
pub use run::{run, Outcome, Verdict};

/// Environment variable overriding the worker-thread count.
pub const THREADS_ENV: &str = "PUCCI_LAB_THREADS";
