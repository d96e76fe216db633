//! Command-line harness for the `expid` library: plant registry, expression
//! plants, JSON run configurations, figure reproduction and CSV output.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod app;
pub mod config;
pub mod expr;
pub mod jobs;
pub mod output;
pub mod plant;

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/cli.md")]
mod book_cli {}
