//! File-backed pipeline stages, the immutable session snapshot they produce,
//! and the HTTP API served over that snapshot.

pub mod api;
pub mod artifacts;
pub mod config;
pub mod error;
pub mod pipeline;
pub mod state;

pub use config::ServiceConfig;
pub use error::ServiceError;
pub use state::{SessionState, Snapshot};
