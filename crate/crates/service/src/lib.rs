//! The `relabel` command line and the HTTP review service.

pub mod cli;
pub mod http;
pub mod store;
