//! Files, persistence, the remote generation client, the HTTP service and the
//! command line around `medconsult-core`.

pub mod cli;
pub mod clock;
pub mod config;
pub mod error;
pub mod eval;
pub mod formats;
pub mod http;
pub mod index_store;
pub mod pii;
pub mod remote;
pub mod service;
pub mod store;

pub use error::{Error, Result};
pub use service::{Service, ServiceParts, Transcript};
