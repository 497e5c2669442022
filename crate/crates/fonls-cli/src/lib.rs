//! Verification driver: configuration, check implementations, and the JSON
//! report schema. The binary in `main.rs` is a thin dispatcher over these;
//! the acceptance suite calls the check functions directly.

pub mod checks;
pub mod config;
pub mod report;
