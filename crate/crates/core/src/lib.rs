//! Sparse recovery and CT reconstruction from measurements clipped by
//! detector saturation.
//!
//! A saturated reading still carries one bit: which side of the detector
//! range it fell off. The mixed one-bit models in [`solvers`] combine a
//! least-squares fit on the analog readings with a pinball loss on the
//! saturated ones, and are solved with ADMM whose `x`-step runs FISTA.
//! [`isd`] alternates reconstruction with re-labelling of zero readings
//! for lower-saturated non-negative systems, and [`ct`] applies the whole
//! machinery to fan-beam CT overexposure correction.
//!
//! Runnable walkthroughs live in `examples/`; `cargo run --example` lists
//! them.

pub mod bench;
pub mod ct;
pub mod error;
pub mod io;
pub mod isd;
pub mod linalg;
pub mod prox;
pub mod sensing;
pub mod solvers;

pub use error::{Error, Result};
