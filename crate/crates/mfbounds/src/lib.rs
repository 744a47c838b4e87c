//! File formats and the command line tool around `mfbounds-core`.

pub mod cli;
pub mod config;
pub mod io;
pub mod lp_format;
pub mod report;
