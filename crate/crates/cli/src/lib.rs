//! Scenario handling and report emission for the `spncs` binary.

pub mod commands;
pub mod csvio;
pub mod error;
pub mod json;
pub mod scenario;
pub mod svg;
