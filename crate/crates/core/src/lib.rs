//! Packet-stream offload simulator: whole-sample reference functions, their
//! transaction-at-a-time kernel equivalents, memoization tables with a
//! two-tier memory model, and a cycle-level cost model.

pub mod config;
pub mod cost;
pub mod error;
pub mod harness;
pub mod kernels;
pub mod lut;
pub mod pipeline;
pub mod reference;
pub mod stream;

pub use error::{Error, Result};
