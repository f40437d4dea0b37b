//! Simulator for personalized over-the-air federated learning in which every
//! client owns a small reconfigurable intelligent surface (RIS).
//!
//! The crate is organized around one communication round: block-fading
//! channels are drawn and imperfectly estimated ([`channel`]), each client
//! tunes its surface phases against the estimate ([`ris`]), picks a power
//! factor and local step count under its transmit budget ([`power`]), trains
//! local and personalized models ([`fl`]), and the parameter server recovers
//! the aggregate from the superimposed analog uplink ([`protocol`]).
//! Configuration, dataset ingestion, seeded RNG streams and result output
//! live in [`harness`].

pub mod channel;
pub mod error;
pub mod fl;
pub mod harness;
pub mod power;
pub mod protocol;
pub mod ris;
pub mod seed;
pub mod selftest;

pub use error::{Error, Result};

/// Complex baseband sample; all channel gains and transmit symbols use this.
pub type Cx = num_complex::Complex64;
