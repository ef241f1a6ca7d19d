//! Behavioral simulator of a two-layer online learner built from domain-wall
//! magnetic tunnel junctions.
//!
//! The first layer clusters inputs through a race between coupled domain-wall
//! neuron tracks and learns with an approximate STDP rule. The second layer is
//! a differential-pair readout trained with a sign rule or a softmax delta.
//! [`pipeline::run_experiment`] ties the phases together and reports accuracy
//! and an itemized energy estimate.

pub mod config;
pub mod datasets;
pub mod device;
pub mod energy;
pub mod error;
pub mod pipeline;
pub mod readout;
pub mod wta;

pub use error::{Error, Result};

/// Crate version, echoed into every result file.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// 64-bit FNV-1a.
pub(crate) fn fnv1a(bytes: impl Iterator<Item = u8>) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}
