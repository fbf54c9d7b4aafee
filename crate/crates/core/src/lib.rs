// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod algorithm;
pub mod baselines;
pub mod bench;
pub mod generator;
pub mod instance;
pub mod lp;
pub mod model;
pub mod oracle;
pub mod saround;
pub mod scenario;
pub mod sim;
