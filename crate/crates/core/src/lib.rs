//! Analog computation of nomographic functions over a simulated wireless
//! multiple-access channel.
//!
//! Sensor nodes encode pre-processed readings in the power of random-phase
//! sequences; the fusion center measures the energy of the superimposed
//! signal and post-processes it into an estimate of the desired function.
//! The crate simulates this end to end, computes the Gaussian and log-normal
//! outage approximations, and compares against an uncoded TDMA baseline.

pub mod analysis;
pub mod cli;
pub mod comac_txrx;
pub mod config;
pub mod error;
pub mod experiments;
pub mod model;
pub mod sequences_channel;
pub mod stats;
pub mod streams;
pub mod tdma_baseline;
pub mod validation;

pub use error::{Error, Result};
