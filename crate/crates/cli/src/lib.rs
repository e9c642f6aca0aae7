//! Command-line front end and selection service.

pub mod cli;
pub mod service;
