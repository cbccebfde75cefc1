// NaN must fail range checks, so `!(x > 0.0)` is used on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod model;
pub mod par;
pub mod prox;
pub mod rng;
pub mod estimators;
pub mod solver;
pub mod data;
pub mod cli;
