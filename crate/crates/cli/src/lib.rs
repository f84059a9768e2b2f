//! Operational shell around the emoji prediction engine: a local HTTP
//! service and a command line driver for every pipeline stage.

pub mod cli;
pub mod service;
