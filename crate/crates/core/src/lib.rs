//! Classification invariants of generic top-degree Nambu structures on the
//! round 2-sphere and the flat 2- and 3-tori.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod arrange;
pub mod cli;
pub mod emit;
pub mod expr;
pub mod geometry;
pub mod invariants;
pub mod normalform;
pub mod scenario;
pub mod zerolocus;
