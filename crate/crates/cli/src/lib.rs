//! Library half of the command-line front end: run-document parsing,
//! presets, and CSV emission. The `sitstab` binary is a thin dispatcher
//! over these pieces.

pub mod config;
pub mod output;
