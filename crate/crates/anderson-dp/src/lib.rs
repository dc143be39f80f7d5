//! Anderson-accelerated dynamic programming on finite MDPs.
//!
//! The crate provides the MDP data model and Bellman operators (`mdp`), the
//! Anderson mixing engine with its constrained coefficient solve
//! (`anderson`), the four iteration schemes and error metrics (`solvers`),
//! a seeded Garnet instance generator (`garnet`), and the benchmark harness
//! with deterministic CSV and SVG output (`experiment`, `plot`).

// `!(x >= 0.0)`-style guards reject NaN along with out-of-range values;
// the "simpler" `x < 0.0` would silently accept NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Index loops in the linear-algebra kernels mirror the usual subscript
// notation and often touch several arrays at once.
#![allow(clippy::needless_range_loop)]

pub mod anderson;
pub mod error;
pub mod experiment;
pub mod garnet;
pub mod mdp;
pub mod plot;
pub mod rng;
pub mod solvers;

pub use error::{Error, Result};
