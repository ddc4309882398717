//! HTTP service, SQLite store and CLI for the attendance system.

pub mod api;
pub mod app;
pub mod backend;
pub mod cli;
pub mod config;
pub mod openapi;
pub mod server;
pub mod store;

pub use app::App;
pub use config::ServiceConfig;
pub use store::Store;
