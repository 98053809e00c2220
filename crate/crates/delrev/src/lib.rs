//! Files, command line and HTTP service for the `delrev-core` engine.
//!
//! - [`format`]: the line-oriented spec format and action scripts.
//! - [`dot`]: Graphviz export.
//! - [`schema`]: structured JSON output shared by CLI and service.
//! - [`cli`]: the `delrev` command.
//! - [`service`]: the HTTP API.

pub mod cli;
pub mod dot;
pub mod format;
pub mod schema;
pub mod service;

pub use dot::export_dot;
pub use format::{
    parse_document, parse_script, parse_spec, serialize_document, serialize_spec, ParseError, SpecDocument,
};
