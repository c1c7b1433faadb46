//! Case definitions, the shock-alignment pipeline driver, measurements,
//! configuration and output writers.

pub mod config;
pub mod measure;
pub mod output;
pub mod vortex;
