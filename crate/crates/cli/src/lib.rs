//! Configuration, file formats and subcommands of the `cssigma` binary.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod output;
pub mod snapshot;
