//! Configuration, demos and pipelines behind the `flatctl` binary.

pub mod config;
pub mod demos;
pub mod output;
pub mod pipeline;
