//! Offline analysis of multi-agent simulation logs.

pub mod embedding;
pub mod ingest;
pub mod model;
pub mod summarize;
pub mod segment;
pub mod causetrace;
pub mod layout;
pub mod monitor;
pub mod search;
pub mod error;
pub mod project;
pub mod export;
