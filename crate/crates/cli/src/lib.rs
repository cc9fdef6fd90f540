//! Operator and power-user tooling: an HTTP client, JSON-lines bulk import,
//! and the synthetic load simulation.

pub mod client;
pub mod import;
pub mod simulate;
