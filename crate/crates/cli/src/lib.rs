//! Command line front end for `locc-core`: state files, cut syntax, trace
//! export and the `locc` commands.

pub mod app;
pub mod commands;
pub mod cut;
pub mod error;
pub mod format;
pub mod trace;

pub use app::{run, Cli};
pub use cut::{parse_cut, CutParseError};
pub use error::CliError;
