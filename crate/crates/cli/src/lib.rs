//! Configuration parsing and scenario runner behind the `tdbh` binary.

// NaN-rejecting `!(x > 0.0)` checks and index loops over coupled arrays are deliberate.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod config;
pub mod run;
