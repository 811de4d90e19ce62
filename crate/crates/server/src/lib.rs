//! Command-line entry point and the live session service.

pub mod cli;
pub mod protocol;
pub mod service;
pub mod session;
