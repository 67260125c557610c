//! Bit-level simulator of a 1 x 100 underwater optical OFDM link.
//!
//! The [`channel`] module turns geometry and noise constants into an SNR and a
//! time-varying two-tap fading process. [`turbo`] and [`phy`] form the
//! transceiver, [`linksim`] runs Monte Carlo frame-error sweeps over the six
//! transmitter configurations, and [`dataset`] turns a sweep into labelled
//! feature vectors for configuration learning.

mod error;

pub mod channel;
pub mod dataset;
pub mod linksim;
pub mod phy;
pub mod seed;
pub mod turbo;

pub use error::{Error, Result};
