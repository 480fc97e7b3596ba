//! Coded caching over two-hop helper networks.
//!
//! The crate covers the whole pipeline: file placement with cache
//! replication, XOR multicast delivery and its bit-exact decoding, routing
//! linear programs for the topological model, reuse and avalanche scheduling
//! for the collision model, and a seeded Monte-Carlo harness.

pub mod collision;
pub mod combin;
pub mod error;
pub mod harness;
pub mod lp;
pub mod model;
pub mod multiround;
pub mod scenario;
pub mod topo;

pub use error::{Error, Result};
