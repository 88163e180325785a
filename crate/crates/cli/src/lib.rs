//! Command-line front end, in-process pipelines and the experiment runner.

pub mod cli;
pub mod experiment;
pub mod io;
pub mod pipeline;
