//! Growth-grid models of spoofing (fully observed) and pinging (partially
//! observed) trading, with the solvers, regulatory experiments and strategy
//! backtests built on them.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod backtest;
pub mod cli;
pub mod error;
pub mod experiments;
pub mod grid;
pub mod mdp;
pub mod pomdp;

pub use error::{Error, Result};
