//! HTTP service and command-line tools around `shelf_core`.

pub mod app;
pub mod cli;
