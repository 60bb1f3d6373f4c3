//! Distributed observers for linear plants whose outputs are split across
//! agents that talk over directed, switching communication graphs.
//!
//! The crate covers the whole pipeline:
//!
//! - [`digraph`]: reachability, the root-isolating graph transformation,
//!   subgraph Laplacians and periodic switching schedules.
//! - [`sysdecomp`]: observability staircase and observer-gain placement.
//! - [`observer`]: the coupled local-observer dynamics, adaptive coupling
//!   gains and error diagnostics.
//! - [`certify`]: the sufficient-condition certificate for fixed coupling
//!   gains and a gain suggester built on it.
//! - [`simkit`]: multi-area power-system plants, fixed-step integration,
//!   scenario runs and metrics.
//! - [`config`] and [`cli`]: scenario files and the command-line front end.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// index loops mirror the matrix formulas they implement
#![allow(clippy::needless_range_loop)]

pub mod certify;
pub mod cli;
pub mod config;
pub mod digraph;
pub mod error;
pub mod linalg;
pub mod observer;
pub mod par;
pub mod simkit;
pub mod sysdecomp;

pub use error::{Error, Result};
