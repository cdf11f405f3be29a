//! Command-line front end and HTTP service for binned counterfactual search.

pub mod cli;
pub mod service;
pub mod session;
