//! Library side of the `qfde` binary: the problem spec format, the command
//! implementations and the artifact emitters, exposed so tests can drive
//! them without a subprocess.

pub mod commands;
pub mod report;
pub mod spec_format;
