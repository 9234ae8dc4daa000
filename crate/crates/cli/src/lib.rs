//! Building blocks of the `qknn` command-line tool.

pub mod bench;
pub mod config;
pub mod grid;
pub mod io;
