#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod emulator;
pub mod energy;
pub mod harness;
pub mod link;
pub mod netconfig;
pub mod routing;
pub mod sim;
